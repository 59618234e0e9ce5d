#include "cmc/loop.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>

#include "cmc/errors.hpp"

namespace cmc {

namespace {

constexpr double kPi = std::numbers::pi;

struct SearchSetup {
    double start_current = 0.0;  // inductor current when the comparator is armed
    double gap = 0.0;            // unsensed interval preceding the search phase
    double lead = 0.0;           // search start relative to the cycle start
};

SearchSetup search_setup(const LoopConfig& cfg, const LoopState& s) {
    SearchSetup r;
    switch (cfg.topology) {
        case Topology::ConstOffTimePeak:
            r.start_current = s.i_extremum - cfg.m2 * cfg.t_off;
            r.gap = cfg.t_off;
            break;
        case Topology::FixedFreqPeak:
            r.gap = cfg.t_period - s.t_event;
            r.start_current = s.i_extremum - cfg.m2 * r.gap;
            break;
        case Topology::ConstOnTimeValley:
            r.start_current = s.i_extremum + cfg.m1 * cfg.t_on;
            r.gap = cfg.t_on;
            r.lead = cfg.t_on;
            break;
        case Topology::FixedFreqValley:
            r.gap = cfg.t_period - s.t_event;
            r.start_current = s.i_extremum + cfg.m1 * r.gap;
            break;
    }
    return r;
}

Detector make_detector(const Conditioning& cond, double carried) {
    switch (cond.kind) {
        case Conditioning::Kind::SlopeComp:
            return Detector::ideal(cond.m_s);
        case Conditioning::Kind::Filter:
            return Detector::filtered(cond.tau, carried);
        case Conditioning::Kind::Overdrive:
            return Detector::overdrive(cond);
        case Conditioning::Kind::None:
            break;
    }
    return Detector::ideal(0.0);
}

double next_wall_time(const LoopConfig& cfg, const LoopState& s, double t_event) {
    switch (cfg.topology) {
        case Topology::ConstOffTimePeak:
            return s.wall_time + t_event + cfg.t_off;
        case Topology::ConstOnTimeValley:
            return s.wall_time + cfg.t_on + t_event;
        default:
            return s.wall_time + cfg.t_period;
    }
}

// One cycle with w already mirrored into search coordinates (negated for valley loops).
// The interference is evaluated at w_search(w_origin + t) during the search phase.
LoopState advance(const LoopConfig& cfg, const LoopState& s, double i_c, const Conditioning& cond,
                  const Signal& w_search, double w_origin, double window) {
    const bool peak = cfg.is_peak();
    const SearchSetup setup = search_setup(cfg, s);
    double carried = 0.0;
    if (cond.kind == Conditioning::Kind::Filter)
        carried = s.filter_state * std::exp(-setup.gap / cond.tau);
    const Detector det = make_detector(cond, carried);
    const double offset = peak ? setup.start_current : -setup.start_current;
    const double command = peak ? i_c : -i_c;
    const CrossingResult res = first_crossing_detail(offset, cfg.search_slope(), command, w_search,
                                                     det, window, cfg.t_on_min, w_origin);
    LoopState next;
    next.cycle = s.cycle + 1;
    next.t_event = res.t_event;
    next.i_extremum = peak ? setup.start_current + cfg.m1 * res.t_event
                           : setup.start_current - cfg.m2 * res.t_event;
    next.wall_time = next_wall_time(cfg, s, res.t_event);
    next.filter_state = res.detector_value;
    next.overdrive_delay = res.overdrive_delay;
    return next;
}

// Smallest period k in [2, max_period] matched by the tail over 3k cycles; 0 if none.
// The oscillation must be large against the cycle-to-cycle mismatch, which rules out
// slowly converging alternating sequences.
int detect_period(const std::vector<double>& x, double tol, int max_period) {
    const int n = static_cast<int>(x.size()) - 1;
    for (int k = 2; k <= max_period; ++k) {
        if (n - 4 * k + 1 < 0) break;
        double mismatch = 0.0;
        for (int j = 0; j < 3 * k && mismatch < tol; ++j)
            mismatch = std::max(mismatch, std::abs(x[n - j] - x[n - j - k]));
        if (mismatch >= tol) continue;
        double lo = x[n], hi = x[n];
        for (int j = 0; j < k; ++j) {
            lo = std::min(lo, x[n - j]);
            hi = std::max(hi, x[n - j]);
        }
        if (hi - lo < tol) return 0;  // settling, not oscillating
        if (hi - lo < 1000.0 * mismatch) continue;
        return k;
    }
    return 0;
}

// Raw tail-based verdict tracking for a scalar sequence.
struct RawTracker {
    double tol;
    int converge_run;
    int max_period;
    std::vector<double> x;
    int run = 0;

    // Returns true when a verdict was reached.
    bool push(double v, Verdict& out) {
        if (!x.empty() && std::abs(v - x.back()) < tol)
            ++run;
        else
            run = 0;
        x.push_back(v);
        const int n = static_cast<int>(x.size()) - 1;
        if (run >= converge_run) {
            out.kind = Verdict::Kind::Converged;
            out.cycles = n - converge_run;
            return true;
        }
        const int k = detect_period(x, tol, max_period);
        if (k > 0) {
            out.kind = Verdict::Kind::LimitCycle;
            out.period = k;
            out.cycles = n;
            return true;
        }
        return false;
    }
};

// Twin separation that is periodic with period k and not shrinking.
bool twins_locked(const std::vector<double>& d, int k, double tol) {
    const int n = static_cast<int>(d.size()) - 1;
    if (n - 3 * k < 0 || d[n] < tol) return false;
    for (int j = 0; j < 2 * k; ++j)
        if (std::abs(d[n - j] - d[n - j - k]) >= tol) return false;
    return true;
}

double state_distance(const LoopConfig& cfg, const LoopState& a, const LoopState& b) {
    double d = std::abs(a.i_extremum - b.i_extremum) + std::abs(a.filter_state - b.filter_state);
    if (cfg.is_fixed_frequency()) d += cfg.search_slope() * std::abs(a.t_event - b.t_event);
    return d;
}

// Scalar that pins the cycle state: the peak for constant-time loops, and the current at
// the start of the next sensed ramp for fixed-frequency loops, whose extremum is held
// at the command.
double tracked_value(const LoopConfig& cfg, const LoopState& s) {
    return cfg.is_fixed_frequency() ? search_setup(cfg, s).start_current : s.i_extremum;
}

}  // namespace

const char* to_string(Topology t) {
    switch (t) {
        case Topology::ConstOffTimePeak:
            return "ConstOffTimePeak";
        case Topology::ConstOnTimeValley:
            return "ConstOnTimeValley";
        case Topology::FixedFreqPeak:
            return "FixedFreqPeak";
        case Topology::FixedFreqValley:
            return "FixedFreqValley";
    }
    return "?";
}

Topology parse_topology(const std::string& name) {
    for (Topology t : {Topology::ConstOffTimePeak, Topology::ConstOnTimeValley,
                       Topology::FixedFreqPeak, Topology::FixedFreqValley}) {
        if (name == to_string(t)) return t;
    }
    throw PreconditionError("unknown topology '" + name + "'");
}

bool LoopConfig::is_peak() const {
    return topology == Topology::ConstOffTimePeak || topology == Topology::FixedFreqPeak;
}

bool LoopConfig::is_fixed_frequency() const {
    return topology == Topology::FixedFreqPeak || topology == Topology::FixedFreqValley;
}

double LoopConfig::search_slope() const { return is_peak() ? m1 : m2; }
double LoopConfig::other_slope() const { return is_peak() ? m2 : m1; }

double LoopConfig::nominal_event_time() const {
    switch (topology) {
        case Topology::ConstOffTimePeak:
            return m2 * t_off / m1;
        case Topology::ConstOnTimeValley:
            return m1 * t_on / m2;
        case Topology::FixedFreqPeak:
            return m2 * t_period / (m1 + m2);
        case Topology::FixedFreqValley:
            return m1 * t_period / (m1 + m2);
    }
    return 0.0;
}

double LoopConfig::search_window() const {
    if (is_fixed_frequency()) return t_period;
    return t_search_max > 0.0 ? t_search_max : 8.0 * nominal_event_time();
}

void LoopConfig::validate() const {
    if (!(m1 > 0.0) || !(m2 > 0.0)) throw PreconditionError("slopes m1 and m2 must be positive");
    if (!(i_max > 0.0)) throw PreconditionError("i_max must be positive");
    if (t_on_min < 0.0) throw PreconditionError("t_on_min must be non-negative");
    switch (topology) {
        case Topology::ConstOffTimePeak:
            if (!(t_off > 0.0)) throw PreconditionError("ConstOffTimePeak needs t_off > 0");
            break;
        case Topology::ConstOnTimeValley:
            if (!(t_on > 0.0)) throw PreconditionError("ConstOnTimeValley needs t_on > 0");
            break;
        default:
            if (!(t_period > 0.0)) throw PreconditionError("fixed-frequency loops need t_period > 0");
            if (t_on_min >= t_period) throw PreconditionError("t_on_min must be below the period");
            break;
    }
}

LoopState initial_state(const LoopConfig& cfg, double i_extremum) {
    LoopState s;
    s.i_extremum = i_extremum;
    s.t_event = cfg.nominal_event_time();
    s.filter_state = cfg.is_peak() ? i_extremum : -i_extremum;
    return s;
}

Detector Detector::ideal(double m_s) {
    Detector d;
    d.command_slope = m_s;
    return d;
}

Detector Detector::filtered(double tau, double carried_state) {
    if (!(tau > 0.0)) throw PreconditionError("filter time constant must be positive");
    Detector d;
    d.kind = Kind::Filtered;
    d.tau = tau;
    d.carried = carried_state;
    return d;
}

Detector Detector::overdrive(const Conditioning& comp) {
    if (comp.kind != Conditioning::Kind::Overdrive)
        throw PreconditionError("overdrive detector needs an Overdrive conditioning");
    Detector d;
    d.kind = Kind::OverdriveDelay;
    d.comparator = comp;
    return d;
}

CrossingResult first_crossing_detail(double ramp_offset, double ramp_slope, double command,
                                     const Signal& w, const Detector& det, double window,
                                     double t_min, double w_origin) {
    if (!(window > 0.0)) throw PreconditionError("window must be positive");
    t_min = std::max(0.0, t_min);
    if (t_min > window) throw NoCrossing("minimum event time exceeds the window");

    CrossingResult res;
    if (det.kind == Detector::Kind::OverdriveDelay) {
        const OverdriveEvent ev = overdrive_trigger_detail({ramp_offset, ramp_slope}, command, w,
                                                           det.comparator, window, w_origin);
        res.t_event = std::max(t_min, ev.t_event);
        res.t_fi = ev.t_fi;
        res.overdrive_delay = ev.t_trigger - ev.t_fi;
        return res;
    }

    const double cs = det.command_slope;
    std::function<double(double)> g;
    if (det.kind == Detector::Kind::Ideal) {
        if (command <= ramp_offset) throw NoCrossing("command at or below the ramp floor");
        g = [&](double t) { return ramp_offset + (ramp_slope + cs) * t + w(w_origin + t) - command; };
    } else {
        const RampSegment seg{ramp_offset, ramp_slope};
        g = [&, seg](double t) {
            return filter_output(det.carried, seg, w, det.tau, t, w_origin) - (command - cs * t);
        };
    }

    double lo = t_min;
    double g_lo;
    if (det.kind == Detector::Kind::Ideal) {
        // Nothing can cross before the upper envelope of the sensed ramp meets the command.
        const double a = w.peak_bound();
        const double t_env = (command - ramp_offset - a) / (ramp_slope + cs);
        if (t_env > window) throw NoCrossing("command above the attainable sensed current");
        if (t_env > lo) lo = t_env;
    }
    g_lo = g(lo);
    if (g_lo >= 0.0) {
        res.t_event = lo;
        if (det.kind == Detector::Kind::Filtered) res.detector_value = g_lo + command - cs * lo;
        return res;
    }

    double pitch = window / 4096.0;
    const double w_fast = w.max_omega();
    if (w_fast > 0.0 && pitch >= kPi / w_fast) pitch = 0.5 * kPi / w_fast;

    double hi = lo;
    double g_hi = g_lo;
    if (det.kind == Detector::Kind::Filtered) {
        // March the filter state forward exactly over each pitch.
        const double tau = det.tau;
        const double e = std::exp(-pitch / tau);
        double y = g_lo + command - cs * lo;
        while (true) {
            const double step = std::min(pitch, window - hi);
            if (step <= 0.0) throw NoCrossing("filtered sensor never reaches the command");
            const double es = step == pitch ? e : std::exp(-step / tau);
            const double x0 = ramp_offset + ramp_slope * hi;
            y = y * es + x0 * (1.0 - es) + ramp_slope * (step - tau * (1.0 - es)) +
                w.lowpass(w_origin + hi, step, tau);
            const double t_next = hi + step;
            const double gv = y - (command - cs * t_next);
            if (gv >= 0.0) {
                lo = hi;
                hi = t_next;
                g_hi = g(hi);
                g_lo = g(lo);
                if (g_hi < 0.0) {
                    // Incremental and direct forms disagree by rounding; widen one pitch.
                    continue;
                }
                break;
            }
            hi = t_next;
            g_lo = gv;
        }
        lo = std::max(t_min, lo);
        g_lo = g(lo);
        if (g_lo >= 0.0) {
            res.t_event = lo;
            res.detector_value = g_lo + command - cs * lo;
            return res;
        }
    } else {
        while (true) {
            const double t_next = std::min(window, hi + pitch);
            if (t_next <= hi) throw NoCrossing("sensed current never reaches the command");
            const double gv = g(t_next);
            if (gv >= 0.0) {
                lo = hi;
                hi = t_next;
                g_hi = gv;
                break;
            }
            hi = t_next;
            g_lo = gv;
            if (hi >= window) throw NoCrossing("sensed current never reaches the command");
        }
    }

    const double tol = 1e-10 * window;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        const double gm = g(mid);
        if (gm >= 0.0) {
            hi = mid;
            g_hi = gm;
        } else {
            lo = mid;
            g_lo = gm;
        }
    }
    double t = hi;
    if (g_hi > g_lo) t = std::clamp(lo - g_lo * (hi - lo) / (g_hi - g_lo), lo, hi);
    res.t_event = t;
    if (det.kind == Detector::Kind::Filtered) res.detector_value = g(t) + command - cs * t;
    return res;
}

double first_crossing(double ramp_offset, double ramp_slope, double command, const Signal& w,
                      const Detector& det, double window, double t_min, double w_origin) {
    return first_crossing_detail(ramp_offset, ramp_slope, command, w, det, window, t_min, w_origin)
        .t_event;
}

LoopState step_cycle(const LoopConfig& cfg, const LoopState& state, double i_c,
                     const Conditioning& cond, const Signal& w, InterferenceMode mode,
                     double w_time_offset) {
    cfg.validate();
    const Signal w_search = cfg.is_peak() ? w : w.negated();
    double origin = 0.0;
    if (mode == InterferenceMode::FreeRunning)
        origin = w_time_offset + state.wall_time + search_setup(cfg, state).lead;
    return advance(cfg, state, i_c, cond, w_search, origin, cfg.search_window());
}

std::string Verdict::str() const {
    switch (kind) {
        case Kind::Converged:
            return "Converged(" + std::to_string(cycles) + ")";
        case Kind::LimitCycle:
            return "LimitCycle(" + std::to_string(period) + ")";
        case Kind::Divergent:
            return "Divergent";
        case Kind::NoCrossing:
            return "NoCrossing";
        case Kind::Unresolved:
            return "Unresolved";
    }
    return "?";
}

Trace simulate(const LoopConfig& cfg, const std::vector<double>& i_c_sequence,
               const Conditioning& cond, const Signal& w, int n_cycles, std::uint64_t seed,
               const LoopState& initial, const SimOptions& opt) {
    cfg.validate();
    cond.validate();
    if (n_cycles < 1) throw PreconditionError("n_cycles must be at least 1");
    if (i_c_sequence.empty()) throw PreconditionError("command sequence is empty");

    const Signal w_search = cfg.is_peak() ? w : w.negated();
    const double window = cfg.search_window();
    const bool free_running = opt.mode == InterferenceMode::FreeRunning;
    double w_offset = 0.0;
    if (free_running && seed != 0 && !w.is_zero()) {
        std::mt19937_64 rng(seed);
        w_offset = std::uniform_real_distribution<double>(0.0, 1.0)(rng) * w.period();
    }
    const double tol = opt.tol_rel * cfg.i_max;

    // Free-running interference has no fixed point; stability is judged by whether
    // trajectories started apart under the same interference merge.
    const bool use_twins = free_running && !w.is_zero();
    std::vector<LoopState> twins;
    if (use_twins) {
        const double delta =
            std::max(opt.twin_delta_rel * cfg.i_max,
                     0.1 * cfg.search_slope() * cfg.nominal_event_time());
        for (double sign : {1.0, -1.0}) {
            LoopState t = initial;
            t.i_extremum += sign * delta;
            t.filter_state += (cfg.is_peak() ? sign : -sign) * delta;
            twins.push_back(t);
        }
    }

    Trace trace;
    trace.initial = initial;
    trace.verdict.kind = Verdict::Kind::Unresolved;
    bool decided = false;
    RawTracker raw{tol, opt.converge_run, opt.max_period, {tracked_value(cfg, initial)}};
    int merged_run = 0;
    std::vector<double> dist_history;
    LoopState s = initial;

    const auto decide = [&](Verdict v) {
        if (!decided) {
            trace.verdict = v;
            decided = true;
        }
    };

    for (int n = 1; n <= n_cycles; ++n) {
        const double i_c = i_c_sequence[std::min<std::size_t>(n - 1, i_c_sequence.size() - 1)];
        const double origin =
            free_running ? w_offset + s.wall_time + search_setup(cfg, s).lead : 0.0;
        try {
            s = advance(cfg, s, i_c, cond, w_search, origin, window);
        } catch (const NoCrossing&) {
            decide({Verdict::Kind::NoCrossing, n, 0});
            break;
        }
        trace.states.push_back(s);
        if (!(std::abs(s.i_extremum) <= cfg.i_max)) {
            decide({Verdict::Kind::Divergent, n, 0});
            break;
        }

        Verdict v;
        const bool raw_hit = raw.push(tracked_value(cfg, s), v);
        if (!use_twins) {
            if (raw_hit) decide(v);
        } else {
            double dist = 0.0;
            bool twin_failed = false;
            for (LoopState& t : twins) {
                try {
                    t = advance(cfg, t, i_c, cond, w_search, origin, window);
                } catch (const NoCrossing&) {
                    decide({Verdict::Kind::NoCrossing, n, 0});
                    twin_failed = true;
                    break;
                }
                if (!(std::abs(t.i_extremum) <= cfg.i_max)) {
                    decide({Verdict::Kind::Divergent, n, 0});
                    twin_failed = true;
                    break;
                }
                dist = std::max(dist, state_distance(cfg, s, t));
            }
            if (twin_failed) break;
            merged_run = dist < tol ? merged_run + 1 : 0;
            dist_history.push_back(dist);
            if (merged_run >= opt.converge_run) {
                decide({Verdict::Kind::Converged, n - opt.converge_run, 0});
            } else if (raw_hit && v.kind == Verdict::Kind::LimitCycle &&
                       twins_locked(dist_history, v.period, tol)) {
                // A periodic forced response is not a limit cycle unless the twins
                // have stopped approaching each other.
                decide(v);
            }
        }
        if (decided && opt.stop_on_verdict) break;
    }
    return trace;
}

Trace simulate(const LoopConfig& cfg, const std::vector<double>& i_c_sequence,
               const Conditioning& cond, const Signal& w, int n_cycles, std::uint64_t seed) {
    return simulate(cfg, i_c_sequence, cond, w, n_cycles, seed, initial_state(cfg, 0.0));
}

StaticMap static_map(const LoopConfig& cfg, const std::vector<double>& i_c_grid,
                     const Conditioning& cond, const Signal& w, const StaticMapOptions& opt) {
    cfg.validate();
    cond.validate();
    for (std::size_t k = 1; k < i_c_grid.size(); ++k)
        if (!(i_c_grid[k] > i_c_grid[k - 1]))
            throw PreconditionError("command grid must be strictly increasing");

    const Signal w_search = cfg.is_peak() ? w : w.negated();
    const double window = cfg.search_window();
    const double tol = 1e-9 * cfg.i_max;
    StaticMap map;
    map.samples.reserve(i_c_grid.size());

    for (double i_c : i_c_grid) {
        MapSample sample;
        sample.i_c = i_c;
        Verdict v;
        std::vector<double> values;
        bool finished = false;

        if (opt.mode == StaticMapMode::ClosedLoop) {
            SimOptions so;
            so.mode = InterferenceMode::CycleSynchronous;
            // Start slightly off the interference-free steady state so that an unstable
            // fixed point is not mistaken for a reached one.
            LoopState start = initial_state(cfg, i_c);
            start.i_extremum += (cfg.is_peak() ? -1.0 : 1.0) * 1e-6 * cfg.i_max;
            const Trace tr = simulate(cfg, {i_c}, cond, w, opt.max_cycles, 0, start, so);
            v = tr.verdict;
            for (const LoopState& st : tr.states) values.push_back(st.i_extremum);
            finished = true;
        }
        if (!finished) {
            // Fixed ramp origin; only the filter state is carried between cycles.
            LoopState s = initial_state(cfg, i_c);
            RawTracker raw{tol, 8, 32, {s.i_extremum}};
            v.kind = Verdict::Kind::Unresolved;
            const bool memoryless = cond.kind != Conditioning::Kind::Filter;
            for (int n = 1; n <= opt.max_cycles; ++n) {
                const double carried =
                    memoryless ? 0.0
                               : s.filter_state * std::exp(-search_setup(cfg, s).gap / cond.tau);
                const bool peak = cfg.is_peak();
                CrossingResult res;
                try {
                    res = first_crossing_detail(peak ? opt.ramp_origin : -opt.ramp_origin,
                                                cfg.search_slope(), peak ? i_c : -i_c, w_search,
                                                make_detector(cond, carried), window,
                                                cfg.t_on_min, 0.0);
                } catch (const NoCrossing&) {
                    v.kind = Verdict::Kind::NoCrossing;
                    break;
                }
                s.cycle = n;
                s.t_event = res.t_event;
                s.filter_state = res.detector_value;
                s.i_extremum = peak ? opt.ramp_origin + cfg.m1 * res.t_event
                                    : opt.ramp_origin - cfg.m2 * res.t_event;
                values.push_back(s.i_extremum);
                if (memoryless) {
                    v.kind = Verdict::Kind::Converged;
                    break;
                }
                if (raw.push(s.i_extremum, v)) break;
            }
        }

        switch (v.kind) {
            case Verdict::Kind::Converged:
                sample.outcome = MapSample::Outcome::Reached;
                sample.i_p = values.back();
                break;
            case Verdict::Kind::LimitCycle:
                sample.outcome = MapSample::Outcome::LimitCycle;
                sample.period = v.period;
                sample.values.assign(values.end() - v.period, values.end());
                break;
            case Verdict::Kind::Divergent:
                sample.outcome = MapSample::Outcome::Divergent;
                break;
            case Verdict::Kind::NoCrossing:
                sample.outcome = MapSample::Outcome::NoCrossing;
                break;
            case Verdict::Kind::Unresolved: {
                sample.outcome = MapSample::Outcome::Unresolved;
                const std::size_t keep = std::min<std::size_t>(values.size(), 32);
                sample.values.assign(values.end() - keep, values.end());
                break;
            }
        }
        map.samples.push_back(std::move(sample));
    }
    return map;
}

double discontinuity_measure(const StaticMap& map, double jump_factor) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    int usable = 0;
    for (const MapSample& s : map.samples) {
        if (s.outcome == MapSample::Outcome::Reached) {
            lo = std::min(lo, s.i_p);
            hi = std::max(hi, s.i_p);
            ++usable;
        } else if ((s.outcome == MapSample::Outcome::LimitCycle ||
                    s.outcome == MapSample::Outcome::Unresolved) &&
                   !s.values.empty()) {
            for (double v : s.values) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            ++usable;
        }
    }
    if (usable < 2) throw InsufficientData("need at least two non-divergent map samples");

    // A rising step is a jump when it is steep both absolutely and against its rising
    // neighbours; steep but smoothly varying pieces stay covered. A steep falling step
    // means the samples straddle a jump out of order.
    const std::size_t n = map.samples.size();
    const double unreached = -std::numeric_limits<double>::infinity();
    std::vector<double> slope(n > 0 ? n - 1 : 0, unreached);
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const MapSample& a = map.samples[k];
        const MapSample& b = map.samples[k + 1];
        if (a.outcome == MapSample::Outcome::Reached && b.outcome == MapSample::Outcome::Reached)
            slope[k] = (b.i_p - a.i_p) / (b.i_c - a.i_c);
    }
    std::vector<std::pair<double, double>> covered;
    for (std::size_t k = 0; k + 1 < n; ++k) {
        if (slope[k] == unreached) continue;
        const MapSample& a = map.samples[k];
        const MapSample& b = map.samples[k + 1];
        const double dic = b.i_c - a.i_c;
        const double v0 = std::min(a.i_p, b.i_p);
        const double v1 = std::max(a.i_p, b.i_p);
        const double left = k > 0 ? std::max(slope[k - 1], 0.0) : 0.0;
        const double right = k + 2 < n ? std::max(slope[k + 1], 0.0) : 0.0;
        const bool jump = std::abs(slope[k]) > jump_factor &&
                          (slope[k] < 0.0 || slope[k] > jump_factor * std::max(left, right));
        if (!jump)
            covered.emplace_back(v0, v1);
        else
            covered.emplace_back(v0, v0 + dic);  // one grid step of resolution
    }
    std::sort(covered.begin(), covered.end());
    double union_len = 0.0;
    double cur_lo = 0.0, cur_hi = 0.0;
    bool open = false;
    for (auto [a, b] : covered) {
        a = std::max(a, lo);
        b = std::min(b, hi);
        if (b <= a) continue;
        if (!open) {
            cur_lo = a;
            cur_hi = b;
            open = true;
        } else if (a <= cur_hi) {
            cur_hi = std::max(cur_hi, b);
        } else {
            union_len += cur_hi - cur_lo;
            cur_lo = a;
            cur_hi = b;
        }
    }
    if (open) union_len += cur_hi - cur_lo;
    return std::max(0.0, (hi - lo) - union_len);
}

double nonlinearity_degree(const StaticMap& map) {
    std::vector<std::pair<double, double>> pts;
    for (const MapSample& s : map.samples)
        if (s.outcome == MapSample::Outcome::Reached) pts.emplace_back(s.i_c, s.i_p);
    if (pts.size() < 2) throw InsufficientData("need at least two reached map samples");
    double xm = 0.0, ym = 0.0;
    for (auto [x, y] : pts) {
        xm += x;
        ym += y;
    }
    xm /= static_cast<double>(pts.size());
    ym /= static_cast<double>(pts.size());
    double sxx = 0.0, sxy = 0.0;
    for (auto [x, y] : pts) {
        sxx += (x - xm) * (x - xm);
        sxy += (x - xm) * (y - ym);
    }
    const double gain = sxx > 0.0 ? sxy / sxx : 1.0;
    const double offset = ym - gain * xm;
    double worst = 0.0;
    for (auto [x, y] : pts) {
        if (x == 0.0) continue;
        worst = std::max(worst, std::abs(y - (gain * x + offset)) / std::abs(x));
    }
    return worst;
}

bool monotone_sensor_check(const Signal& w, double slope, double window, double t0) {
    if (!(window > 0.0)) throw PreconditionError("window must be positive");
    const double cycles = window * w.max_omega() / (2.0 * kPi);
    const int n = static_cast<int>(std::clamp(cycles * 512.0, 8192.0, 4.0e6));
    const double h = window / n;
    double prev = w(t0);
    for (int k = 1; k <= n; ++k) {
        const double t = k * h;
        const double v = slope * t + w(t0 + t);
        if (!(v > prev)) return false;
        prev = v;
    }
    return true;
}

void write_trace_csv(std::ostream& os, const Trace& trace) {
    os.precision(17);
    os << "cycle,i_extremum,t_event,wall_time\n";
    for (const LoopState& s : trace.states)
        os << s.cycle << ',' << s.i_extremum << ',' << s.t_event << ',' << s.wall_time << '\n';
}

void write_static_map_csv(std::ostream& os, const StaticMap& map) {
    os.precision(17);
    os << "i_c,outcome,i_p_or_period\n";
    for (const MapSample& s : map.samples) {
        os << s.i_c << ',';
        switch (s.outcome) {
            case MapSample::Outcome::Reached:
                os << "Reached," << s.i_p;
                break;
            case MapSample::Outcome::LimitCycle:
                os << "LimitCycle," << s.period;
                break;
            case MapSample::Outcome::Divergent:
                os << "Divergent,";
                break;
            case MapSample::Outcome::NoCrossing:
                os << "NoCrossing,";
                break;
            case MapSample::Outcome::Unresolved:
                os << "Unresolved,";
                break;
        }
        os << '\n';
    }
}

}  // namespace cmc
