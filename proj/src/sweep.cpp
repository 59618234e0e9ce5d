#include "cmc/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <thread>

#include "cmc/errors.hpp"

namespace cmc {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double search_gap(const LoopConfig& cfg, const LoopState& s) {
    switch (cfg.topology) {
        case Topology::ConstOffTimePeak:
            return cfg.t_off;
        case Topology::ConstOnTimeValley:
            return cfg.t_on;
        default:
            return cfg.t_period - s.t_event;
    }
}

double ramp_start(const LoopConfig& cfg, const LoopState& s) {
    const double gap = search_gap(cfg, s);
    return cfg.is_peak() ? s.i_extremum - cfg.m2 * gap : s.i_extremum + cfg.m1 * gap;
}

// Maximizes f over the phase circle: uniform grid, then golden-section refinement
// around the best grid phase. Returns the best value and the phase.
std::pair<double, double> worst_phase(int phases, int iterations,
                                      const std::function<double(double)>& f) {
    double best = -std::numeric_limits<double>::infinity();
    double best_phase = 0.0;
    const double h = kTwoPi / phases;
    for (int k = 0; k < phases; ++k) {
        const double v = f(k * h);
        if (v > best || std::isnan(v)) {
            best = v;
            best_phase = k * h;
            if (std::isnan(v)) return {v, best_phase};
        }
    }
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = best_phase - h, b = best_phase + h;
    double x1 = b - g * (b - a), x2 = a + g * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < iterations; ++it) {
        if (std::isnan(f1) || std::isnan(f2)) return {kNaN, std::isnan(f1) ? x1 : x2};
        if (f1 > f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    if (std::max(f1, f2) > best) {
        best = std::max(f1, f2);
        best_phase = f1 > f2 ? x1 : x2;
    }
    return {best, best_phase};
}

double settle_from_pole(double a) {
    if (!(std::abs(a) < 1.0)) return kNaN;
    return a == 0.0 ? 0.0 : std::abs(4.0 / std::log(std::abs(a)));
}

}  // namespace

const char* to_string(DesignMethod m) {
    switch (m) {
        case DesignMethod::Slope:
            return "Slope";
        case DesignMethod::Filter:
            return "Filter";
        case DesignMethod::Comparator:
            return "Comparator";
    }
    return "?";
}

DesignMethod parse_design_method(const std::string& name) {
    for (DesignMethod m : {DesignMethod::Slope, DesignMethod::Filter, DesignMethod::Comparator})
        if (name == to_string(m)) return m;
    throw PreconditionError("unknown design method '" + name + "'");
}

LoopConfig normalized_loop(Topology topology, double t_on_min_hat, double i_max_hat) {
    LoopConfig cfg;
    cfg.topology = topology;
    cfg.m1 = 1.0;
    cfg.m2 = 1.0;
    cfg.t_off = 1.0;
    cfg.t_on = 1.0;
    cfg.t_period = 2.0;
    cfg.t_on_min = t_on_min_hat;
    cfg.i_max = i_max_hat;
    cfg.validate();
    return cfg;
}

Conditioning normalized_conditioning(DesignMethod method, double parameter) {
    switch (method) {
        case DesignMethod::Slope:
            return Conditioning::slope(parameter);
        case DesignMethod::Filter:
            return Conditioning::filter(parameter);
        case DesignMethod::Comparator:
            // tau_hat = 2K/(m T_s^2) with m = T_s = 1.
            return Conditioning::overdrive(parameter / 2.0, 1.0);
    }
    return Conditioning::none();
}

GridSpec GridSpec::linear(double a_lo, double a_hi, int na, double w_lo, double w_hi, int nw) {
    if (na < 1 || nw < 1) throw PreconditionError("grid needs at least one cell per axis");
    GridSpec g;
    for (int i = 0; i < na; ++i)
        g.a_hat_axis.push_back(na == 1 ? a_lo : a_lo + (a_hi - a_lo) * i / (na - 1));
    for (int j = 0; j < nw; ++j)
        g.omega_hat_axis.push_back(nw == 1 ? w_lo : w_lo + (w_hi - w_lo) * j / (nw - 1));
    return g;
}

SpectralBounds cell_bounds(double a_hat, double omega_hat, double omega_span) {
    SpectralBounds b;
    b.a_ub = a_hat;
    b.omega_l = kTwoPi * omega_hat;
    b.omega_ub = omega_span * b.omega_l;
    b.lambda_ub = a_hat * b.omega_ub;
    if (a_hat > 0.0)
        b.b_integral = running_integral_halfspan(Signal::trapezoid(a_hat, b.omega_l, b.lambda_ub));
    return b;
}

bool cell_theorem(Topology topology, const Conditioning& cond, double a_hat, double omega_hat,
                  const McOptions& opt) {
    const LoopConfig cfg = normalized_loop(topology, opt.t_on_min_hat, opt.i_max_hat);
    const SpectralBounds spec = cell_bounds(a_hat, omega_hat, opt.omega_span);
    switch (cond.kind) {
        case Conditioning::Kind::None:
        case Conditioning::Kind::SlopeComp:
            return large_signal_verdict(topology, cfg.m1, cfg.m2, spec.lambda_ub, cond) ==
                   StabilityVerdict::GuaranteedStable;
        case Conditioning::Kind::Filter: {
            const NormalizedDesign n = normalize(cfg, cond, spec);
            return filter_continuity_ok(n, opt.convention) && filter_stability_ok(n, opt.convention);
        }
        case Conditioning::Kind::Overdrive:
            return comparator_stability_ok(spec.a_ub, spec.b_integral, cfg.search_slope(),
                                           cond.overdrive_area());
    }
    return false;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

void parallel_for(int n, int threads, const std::function<void(int)>& f) {
    int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::clamp(workers, 1, std::max(1, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) f(i);
        });
    for (std::thread& t : pool) t.join();
}

DesignGrid mc_stability_region(Topology topology, const Conditioning& cond_template,
                               const GridSpec& grid, int n_samples, std::uint64_t seed,
                               const McOptions& opt) {
    if (n_samples < 1) throw PreconditionError("n_samples must be at least 1");
    for (const auto* axis : {&grid.a_hat_axis, &grid.omega_hat_axis}) {
        if (axis->empty()) throw PreconditionError("grid axes must be non-empty");
        for (std::size_t k = 1; k < axis->size(); ++k)
            if (!((*axis)[k] > (*axis)[k - 1]))
                throw PreconditionError("grid axes must be strictly increasing");
    }
    cond_template.validate();
    const LoopConfig cfg =
        normalized_loop(topology, opt.t_on_min_hat, opt.divergence_factor * opt.i_max_hat);

    DesignGrid out;
    out.a_hat_axis = grid.a_hat_axis;
    out.omega_hat_axis = grid.omega_hat_axis;
    const int nw = static_cast<int>(grid.omega_hat_axis.size());
    const int n_cells = static_cast<int>(grid.a_hat_axis.size()) * nw;
    out.cells.resize(n_cells);

    SimOptions so;
    so.mode = InterferenceMode::FreeRunning;
    parallel_for(n_cells, opt.threads, [&](int c) {
        const double a_hat = grid.a_hat_axis[c / nw];
        const double omega_hat = grid.omega_hat_axis[c % nw];
        const SpectralBounds spec = cell_bounds(a_hat, omega_hat, opt.omega_span);
        const std::uint64_t cell_seed = derive_seed(seed, static_cast<std::uint64_t>(c));
        int stable = 0;
        for (int k = 0; k < n_samples; ++k) {
            const Signal w = sample_random(spec, derive_seed(cell_seed, 2 * k));
            const std::uint64_t sim_seed = derive_seed(cell_seed, 2 * k + 1) | 1ULL;
            const Trace tr = simulate(cfg, {opt.command_hat}, cond_template, w, opt.n_cycles,
                                      sim_seed, initial_state(cfg, opt.command_hat), so);
            const Verdict& v = tr.verdict;
            if (v.kind == Verdict::Kind::Converged ||
                (v.kind == Verdict::Kind::LimitCycle && v.period == 1))
                ++stable;
        }
        out.cells[c].stable_fraction = static_cast<double>(stable) / n_samples;
        out.cells[c].theorem_flag = cell_theorem(topology, cond_template, a_hat, omega_hat, opt);
    });
    return out;
}

namespace {

// Settling and overshoot of the sequence x (x[0] is the state right after the step)
// relative to its final value.
void fill_metrics(const std::vector<double>& x, StepMetrics& m) {
    const double final_value = x.back();
    const double e0 = std::abs(x[0] - final_value);
    if (!(e0 > 0.0)) return;
    const double thr = std::exp(-4.0) * e0;
    int last = 0;
    int last_2pct = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double e = std::abs(x[k] - final_value);
        if (e > thr) last = static_cast<int>(k);
        if (e > 0.02 * e0) last_2pct = static_cast<int>(k);
    }
    const double ek = std::abs(x[last] - final_value);
    const double ek1 =
        last + 1 < static_cast<int>(x.size()) ? std::abs(x[last + 1] - final_value) : 0.0;
    m.n_w = ek1 > 0.0 && ek1 < ek ? last + std::log(ek / thr) / std::log(ek / ek1) : last;
    m.n_2pct = last_2pct + 1;
    const double delta = final_value - x[0];
    const double sign = delta > 0.0 ? 1.0 : -1.0;
    for (double v : x) m.o_w = std::max(m.o_w, sign * (v - final_value) / std::abs(delta));
    m.settled = true;
}

bool settle_at(const LoopConfig& cfg, const Conditioning& cond, const Signal& w, double i_c,
               const LoopState& from, int max_cycles, std::vector<double>& x, LoopState& last) {
    SimOptions so;
    so.mode = InterferenceMode::CycleSynchronous;
    so.tol_rel = 1e-10;
    const Trace tr = simulate(cfg, {i_c}, cond, w, max_cycles, 0, from, so);
    if (tr.verdict.kind != Verdict::Kind::Converged || tr.states.empty()) return false;
    for (const LoopState& s : tr.states) x.push_back(s.i_extremum);
    last = tr.states.back();
    return true;
}

}  // namespace

StepMetrics step_response(const LoopConfig& cfg, const Conditioning& cond, const Signal& w,
                          double i_c0, double i_c1, int max_cycles) {
    StepMetrics m;
    std::vector<double> pre;
    LoopState s0;
    if (!settle_at(cfg, cond, w, i_c0, initial_state(cfg, i_c0), max_cycles, pre, s0)) return m;
    m.t_od = s0.overdrive_delay;
    std::vector<double> x{s0.i_extremum};
    LoopState end;
    if (!settle_at(cfg, cond, w, i_c1, s0, max_cycles, x, end)) return m;
    fill_metrics(x, m);
    return m;
}

StepMetrics disturbance_response(const LoopConfig& cfg, const Conditioning& cond,
                                 const Signal& w, double i_c, double delta, int max_cycles) {
    StepMetrics m;
    std::vector<double> pre;
    LoopState s0;
    if (!settle_at(cfg, cond, w, i_c, initial_state(cfg, i_c), max_cycles, pre, s0)) return m;
    m.t_od = s0.overdrive_delay;
    LoopState kicked = s0;
    kicked.i_extremum += delta;
    std::vector<double> x{kicked.i_extremum};
    LoopState end;
    if (!settle_at(cfg, cond, w, i_c, kicked, max_cycles, x, end)) return m;
    fill_metrics(x, m);
    return m;
}

namespace {

Signal diagram_signal(DesignMethod method, double level, double omega_hat, double phase) {
    if (level == 0.0) return Signal::zero();
    if (method == DesignMethod::Slope) {
        // Slew equal to the level, with edges long enough to hold the event.
        return Signal::trapezoid(level, 0.5, level, phase);
    }
    return Signal::sinusoid(level, kTwoPi * omega_hat, phase);
}

struct PointResult {
    double n_theory = kNaN, n_sim = kNaN, o_theory = kNaN, o_sim = kNaN;
    double t_od_theory = kNaN, t_od_sim = kNaN;
};

std::vector<double> diagram_frequencies(DesignMethod method, const DiagramOptions& opt) {
    if (method == DesignMethod::Slope || opt.frequencies < 2 || opt.omega_span <= 1.0)
        return {opt.omega_hat};
    std::vector<double> f;
    for (int k = 0; k < opt.frequencies; ++k)
        f.push_back(opt.omega_hat * (1.0 + (opt.omega_span - 1.0) * k / (opt.frequencies - 1)));
    return f;
}

PointResult design_point(DesignMethod method, double level, double parameter, Topology topology,
                         const DiagramOptions& opt) {
    PointResult r;
    const LoopConfig cfg = normalized_loop(topology, 0.0, 10.0);
    const Conditioning cond = normalized_conditioning(method, parameter);
    const double i0 = opt.command;
    const double i1 = opt.command + opt.step;
    const std::vector<double> freqs = diagram_frequencies(method, opt);

    double n_sim = 0.0;
    double o_sim = 0.0;
    double t_od_max = 0.0;
    bool any_fail = false;
    for (double omega_hat : freqs) {
        const auto sim_n = [&](double phase) {
            const Signal w = diagram_signal(method, level, omega_hat, phase);
            const StepMetrics s =
                opt.response == ResponseKind::Disturbance
                    ? disturbance_response(cfg, cond, w, i0, opt.step, opt.max_cycles)
                    : step_response(cfg, cond, w, i0, i1, opt.max_cycles);
            if (!s.settled) {
                any_fail = true;
                return kNaN;
            }
            o_sim = std::max(o_sim, s.o_w);
            t_od_max = std::max(t_od_max, s.t_od);
            return s.n_w;
        };
        const double n = worst_phase(opt.phases, opt.golden_iterations, sim_n).first;
        if (any_fail) break;
        n_sim = std::max(n_sim, n);
    }
    if (!any_fail) {
        r.n_sim = n_sim;
        r.o_sim = o_sim;
        if (method == DesignMethod::Comparator) r.t_od_sim = t_od_max;
    }

    switch (method) {
        case DesignMethod::Slope:
            try {
                const PoleRange pr = pole_range(topology, cfg.m1, cfg.m2, level, cond);
                r.n_theory = settling(pr);
                r.o_theory = overshoot(pr);
            } catch (const PreconditionError&) {
            }
            break;
        case DesignMethod::Comparator:
            try {
                const PoleRange pr =
                    comparator_psi_pole_range(level, opt.omega_hat, parameter, cfg.m1);
                r.n_theory = settling(pr);
                r.o_theory = overshoot(pr);
            } catch (const PreconditionError&) {
            }
            r.t_od_theory = comparator_max_delay(level, level / (kTwoPi * opt.omega_hat), cfg.m1,
                                                 cond.overdrive_area());
            break;
        case DesignMethod::Filter: {
            double n_theory = 0.0;
            double o_theory = 0.0;
            bool bad = false;
            for (double omega_hat : freqs) {
                const auto theory_n = [&](double phase) {
                    const Signal w = diagram_signal(method, level, omega_hat, phase);
                    SimOptions so;
                    so.mode = InterferenceMode::CycleSynchronous;
                    so.tol_rel = 1e-10;
                    const Trace tr = simulate(cfg, {i0}, cond, w, opt.max_cycles, 0,
                                              initial_state(cfg, i0), so);
                    if (tr.verdict.kind != Verdict::Kind::Converged) {
                        bad = true;
                        return kNaN;
                    }
                    const LoopState& s = tr.states.back();
                    const FilterParams p{cfg.m1, cfg.m2, s.t_event, search_gap(cfg, s), parameter};
                    try {
                        const FilterClosedLoop cl =
                            filter_closed_loop(topology, p, i0, ramp_start(cfg, s), w);
                        o_theory = std::max(o_theory, -cl.a);
                        return settle_from_pole(cl.a);
                    } catch (const PreconditionError&) {
                        bad = true;
                        return kNaN;
                    }
                };
                const double n = worst_phase(opt.phases, opt.golden_iterations, theory_n).first;
                if (bad || std::isnan(n)) {
                    bad = true;
                    break;
                }
                n_theory = std::max(n_theory, n);
            }
            if (!bad) {
                r.n_theory = n_theory;
                r.o_theory = o_theory;
            }
            break;
        }
    }
    return r;
}

}  // namespace

std::vector<DesignCurve> design_diagram(DesignMethod method, const std::vector<double>& levels,
                                        const std::vector<double>& parameter_axis,
                                        Topology topology, const DiagramOptions& opt) {
    if (levels.empty()) throw PreconditionError("levels must be non-empty");
    if (parameter_axis.empty()) throw PreconditionError("parameter axis must be non-empty");
    for (double p : parameter_axis) {
        const bool ok = method == DesignMethod::Slope ? p >= 0.0 : p > 0.0;
        if (!ok) throw PreconditionError("parameter axis must be positive");
    }
    for (double l : levels)
        if (l < 0.0) throw PreconditionError("levels must be non-negative");

    const int np = static_cast<int>(parameter_axis.size());
    const int n = static_cast<int>(levels.size()) * np;
    std::vector<PointResult> results(n);
    parallel_for(n, opt.threads, [&](int k) {
        results[k] = design_point(method, levels[k / np], parameter_axis[k % np], topology, opt);
    });

    std::vector<DesignCurve> curves;
    for (std::size_t li = 0; li < levels.size(); ++li) {
        DesignCurve c;
        c.method = method;
        c.level = levels[li];
        c.parameter_axis = parameter_axis;
        for (int pi = 0; pi < np; ++pi) {
            const PointResult& r = results[li * np + pi];
            c.n_w_theory.push_back(r.n_theory);
            c.n_w_sim.push_back(r.n_sim);
            c.o_w_theory.push_back(r.o_theory);
            c.o_w_sim.push_back(r.o_sim);
            c.t_od_theory.push_back(r.t_od_theory);
            c.t_od_sim.push_back(r.t_od_sim);
        }
        curves.push_back(std::move(c));
    }
    return curves;
}

std::vector<std::pair<double, double>> tradeoff_points(const DesignCurve& curve) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t k = 0; k < curve.parameter_axis.size(); ++k)
        if (std::isfinite(curve.o_w_sim[k]) && std::isfinite(curve.n_w_sim[k]))
            pts.emplace_back(curve.o_w_sim[k], curve.n_w_sim[k]);
    return pts;
}

std::vector<std::pair<double, double>> pareto_front(std::vector<std::pair<double, double>> points) {
    std::sort(points.begin(), points.end());
    std::vector<std::pair<double, double>> front;
    double best_n = std::numeric_limits<double>::infinity();
    for (const auto& p : points) {
        if (p.second < best_n) {
            front.push_back(p);
            best_n = p.second;
        }
    }
    return front;
}

void write_design_grid_csv(std::ostream& os, const DesignGrid& grid) {
    os.precision(17);
    os << "a_hat,omega_hat,stable_fraction,theorem_flag\n";
    for (std::size_t i = 0; i < grid.a_hat_axis.size(); ++i)
        for (std::size_t j = 0; j < grid.omega_hat_axis.size(); ++j) {
            const GridCell& c = grid.at(i, j);
            os << grid.a_hat_axis[i] << ',' << grid.omega_hat_axis[j] << ',' << c.stable_fraction
               << ',' << (c.theorem_flag ? 1 : 0) << '\n';
        }
}

void write_design_curve_csv(std::ostream& os, const DesignCurve& curve) {
    os.precision(17);
    const auto put = [&os](double v) {
        if (std::isnan(v))
            os << "NotSettling";
        else
            os << v;
    };
    os << "param,n_w_theory,n_w_sim,o_w_theory,o_w_sim\n";
    for (std::size_t k = 0; k < curve.parameter_axis.size(); ++k) {
        os << curve.parameter_axis[k] << ',';
        put(curve.n_w_theory[k]);
        os << ',';
        put(curve.n_w_sim[k]);
        os << ',';
        put(curve.o_w_theory[k]);
        os << ',';
        put(curve.o_w_sim[k]);
        os << '\n';
    }
}

}  // namespace cmc
