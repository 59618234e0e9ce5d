#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cmc/analysis.hpp"
#include "cmc/errors.hpp"
#include "cmc/scenario.hpp"
#include "cmc/sweep.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitPrecondition = 2;

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Flags {
    std::string command;
    std::string scenario;
    std::string preset;
    std::string out;
    std::string data;
    std::optional<std::uint64_t> seed;
    std::optional<int> cycles;
    std::string grid = "8x8";
    int samples = 16;
    int threads = 0;
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::ofstream open_output(const Flags& f, const cmc::Scenario& sc, const std::string& file) {
    const fs::path dir = f.out.empty() ? fs::path(sc.run.output_path) : fs::path(f.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir.string() + "'");
    const fs::path path = dir / file;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    return os;
}

void finish(std::ofstream& os, const std::string& file) {
    os.flush();
    if (!os) throw IoError("write failed for '" + file + "'");
}

void write_json(const Flags& f, const cmc::Scenario& sc, const std::string& file, const json& j) {
    std::ofstream os = open_output(f, sc, file);
    os << j.dump(2) << '\n';
    finish(os, file);
}

std::pair<int, int> parse_grid(const std::string& grid) {
    const auto x = grid.find('x');
    int a = 0;
    int b = 0;
    if (x == std::string::npos || std::sscanf(grid.c_str(), "%dx%d", &a, &b) != 2 || a < 1 ||
        b < 1)
        throw cmc::PreconditionError("--grid expects AxB with positive integers, got '" + grid +
                                     "'");
    return {a, b};
}

json spectral_json(const cmc::SpectralBounds& s) {
    return {{"a_ub", s.a_ub},
            {"lambda_ub", s.lambda_ub},
            {"b_integral", s.b_integral},
            {"omega_l", s.omega_l},
            {"omega_ub", s.omega_ub}};
}

// Large-signal bound on lambda_ub for unfiltered loops.
double slope_bound(const cmc::Scenario& sc) {
    const cmc::LoopConfig& c = sc.loop;
    const double ms = sc.conditioning.kind == cmc::Conditioning::Kind::SlopeComp
                          ? sc.conditioning.m_s
                          : 0.0;
    switch (c.topology) {
        case cmc::Topology::ConstOffTimePeak:
            return 0.5 * c.m1 + ms;
        case cmc::Topology::ConstOnTimeValley:
            return 0.5 * c.m2 + ms;
        case cmc::Topology::FixedFreqPeak:
            return 0.5 * (c.m1 - c.m2) + ms;
        case cmc::Topology::FixedFreqValley:
            return 0.5 * (c.m2 - c.m1) + ms;
    }
    return 0.0;
}

int cmd_simulate(const Flags& f, const cmc::Scenario& sc) {
    const int n = f.cycles.value_or(sc.run.n_cycles);
    const std::uint64_t seed = f.seed.value_or(sc.run.seed);
    // Step from the interference-free steady state one transient step below the command.
    const cmc::Trace tr =
        cmc::simulate(sc.loop, {sc.i_command}, sc.conditioning, sc.interference, n, seed,
                      cmc::initial_state(sc.loop, sc.i_command - sc.step));
    std::ofstream os = open_output(f, sc, "trace.csv");
    cmc::write_trace_csv(os, tr);
    finish(os, "trace.csv");
    const double last = tr.states.empty() ? tr.initial.i_extremum : tr.states.back().i_extremum;
    std::cout << "simulate: " << tr.verdict.str() << " cycles=" << tr.states.size()
              << " i_command=" << fmt(sc.i_command) << " A last_i_extremum=" << fmt(last)
              << " A\n";
    return kExitOk;
}

int cmd_static_map(const Flags& f, const cmc::Scenario& sc) {
    std::vector<double> grid(sc.map_points);
    for (int k = 0; k < sc.map_points; ++k)
        grid[k] = sc.map_lo + (sc.map_hi - sc.map_lo) * k / (sc.map_points - 1);
    cmc::StaticMapOptions opt;
    opt.mode = sc.map_mode;
    if (opt.mode == cmc::StaticMapMode::FixedRamp) {
        const double rip = cmc::ripple(sc.loop);
        opt.ramp_origin = sc.loop.is_peak() ? sc.i_command - rip : sc.i_command + rip;
    }
    if (f.cycles) opt.max_cycles = *f.cycles;
    const cmc::StaticMap map =
        cmc::static_map(sc.loop, grid, sc.conditioning, sc.interference, opt);
    std::ofstream os = open_output(f, sc, "static_map.csv");
    cmc::write_static_map_csv(os, map);
    finish(os, "static_map.csv");
    int reached = 0;
    for (const cmc::MapSample& s : map.samples)
        if (s.outcome == cmc::MapSample::Outcome::Reached) ++reached;
    const double disc = cmc::discontinuity_measure(map);
    std::cout << "static-map: " << (disc > 0.0 ? "Discontinuous" : "Continuous")
              << " discontinuity=" << fmt(disc) << " A reached=" << reached << "/"
              << map.samples.size();
    if (reached >= 2) std::cout << " nonlinearity=" << fmt(cmc::nonlinearity_degree(map));
    std::cout << '\n';
    return kExitOk;
}

int cmd_stability(const Flags& f, const cmc::Scenario& sc) {
    const cmc::SpectralBounds& sp = sc.spectral;
    const cmc::NormalizedDesign nd = cmc::normalize(sc.loop, sc.conditioning, sp);
    json j;
    j["scenario"] = sc.name;
    j["topology"] = cmc::to_string(sc.loop.topology);
    j["spectral_bounds"] = spectral_json(sp);
    j["normalized"] = nd;
    std::string verdict;
    std::ostringstream detail;
    switch (sc.conditioning.kind) {
        case cmc::Conditioning::Kind::Filter:
            verdict = cmc::filter_stability_ok(nd) ? "GuaranteedStable" : "NotGuaranteed";
            detail << "a_hat=" << fmt(nd.a_hat) << " omega_hat=" << fmt(nd.omega_hat)
                   << " tau_hat=" << fmt(nd.tau_hat);
            break;
        case cmc::Conditioning::Kind::Overdrive: {
            const double m = sc.loop.search_slope();
            const double area = sc.conditioning.overdrive_area();
            verdict = cmc::comparator_stability_ok(sp.a_ub, sp.b_integral, m, area)
                          ? "GuaranteedStable"
                          : "NotGuaranteed";
            const double need = 4.0 * sp.a_ub * sp.a_ub / m + sp.b_integral;
            j["integrator_area"] = area;
            j["required_area"] = need;
            j["max_overdrive_delay"] = cmc::comparator_max_delay(sp.a_ub, sp.b_integral, m, area);
            detail << "area=" << fmt(area) << " A*s required=" << fmt(need) << " A*s";
            break;
        }
        default: {
            verdict = cmc::to_string(cmc::large_signal_verdict(
                sc.loop.topology, sc.loop.m1, sc.loop.m2, sp.lambda_ub, sc.conditioning));
            const double bound = slope_bound(sc);
            j["lambda_bound"] = bound;
            detail << "lambda_ub=" << fmt(sp.lambda_ub) << " A/s bound=" << fmt(bound) << " A/s";
            try {
                const cmc::PoleRange pr = cmc::pole_range(sc.loop.topology, sc.loop.m1,
                                                          sc.loop.m2, sp.lambda_ub,
                                                          sc.conditioning);
                j["transient"] = cmc::transient_report(pr);
            } catch (const cmc::UnstableLinearization&) {
                j["transient"] = nullptr;
            }
            break;
        }
    }
    j["verdict"] = verdict;
    write_json(f, sc, "stability.json", j);
    std::cout << "stability: " << verdict << " topology=" << cmc::to_string(sc.loop.topology)
              << ' ' << detail.str() << '\n';
    return kExitOk;
}

int cmd_transient(const Flags& f, const cmc::Scenario& sc) {
    json j;
    j["scenario"] = sc.name;
    j["step"] = sc.step;
    const cmc::StepMetrics sim =
        cmc::step_response(sc.loop, sc.conditioning, sc.interference, sc.i_command,
                            sc.i_command + sc.step, f.cycles.value_or(4000));
    j["simulated"] = {{"settled", sim.settled},
                      {"n_w", sim.settled ? json(sim.n_w) : json(nullptr)},
                      {"n_2pct", sim.n_2pct},
                      {"o_w", sim.o_w}};
    std::ostringstream line;
    line << "transient: " << (sim.settled ? "Settled" : "NotSettling");
    if (sim.settled) line << " n_w_sim=" << fmt(sim.n_w) << " o_w_sim=" << fmt(sim.o_w);
    if (sc.conditioning.kind == cmc::Conditioning::Kind::None ||
        sc.conditioning.kind == cmc::Conditioning::Kind::SlopeComp) {
        const cmc::PoleRange pr = cmc::pole_range(sc.loop.topology, sc.loop.m1, sc.loop.m2,
                                                  sc.spectral.lambda_ub, sc.conditioning);
        const cmc::TransientReport rep = cmc::transient_report(pr);
        j["theory"] = rep;
        line << " n_w_theory=" << fmt(rep.n_w) << " o_w_theory=" << fmt(rep.o_w);
    }
    write_json(f, sc, "transient.json", j);
    std::cout << line.str() << '\n';
    return kExitOk;
}

std::vector<double> axis(double lo, double hi, int n) {
    std::vector<double> v(n);
    for (int k = 0; k < n; ++k) v[k] = n == 1 ? lo : lo + (hi - lo) * k / (n - 1);
    return v;
}

int cmd_design_diagram(const Flags& f, const cmc::Scenario& sc) {
    const cmc::SweepSettings& sw = sc.sweep;
    cmc::DiagramOptions opt;
    opt.threads = f.threads;
    if (f.cycles) opt.max_cycles = *f.cycles;
    const std::vector<cmc::DesignCurve> curves =
        cmc::design_diagram(sw.method, sw.levels, axis(sw.param_lo, sw.param_hi, sw.param_points),
                            sc.loop.topology, opt);
    json j;
    j["method"] = cmc::to_string(sw.method);
    j["topology"] = cmc::to_string(sc.loop.topology);
    j["curves"] = json::array();
    std::size_t settled = 0;
    std::size_t total = 0;
    for (std::size_t k = 0; k < curves.size(); ++k) {
        const std::string file = "design_diagram_" + std::to_string(k) + ".csv";
        std::ofstream os = open_output(f, sc, file);
        cmc::write_design_curve_csv(os, curves[k]);
        finish(os, file);
        for (double v : curves[k].n_w_sim) {
            ++total;
            if (!std::isnan(v)) ++settled;
        }
        json front = json::array();
        for (const auto& [o, n] : cmc::pareto_front(cmc::tradeoff_points(curves[k])))
            front.push_back({{"o_w", o}, {"n_w", n}});
        j["curves"].push_back({{"level", curves[k].level}, {"file", file}, {"pareto", front}});
    }
    write_json(f, sc, "design_diagram.json", j);
    std::cout << "design-diagram: " << cmc::to_string(sw.method) << " curves=" << curves.size()
              << " settled_points=" << settled << "/" << total << '\n';
    return kExitOk;
}

int cmd_mc_region(const Flags& f, const cmc::Scenario& sc) {
    const auto [na, nw] = parse_grid(f.grid);
    if (f.samples < 1) throw cmc::PreconditionError("--samples must be positive");
    const cmc::NormalizedDesign nd = cmc::normalize(sc.loop, sc.conditioning, sc.spectral);
    const cmc::SweepSettings& sw = sc.sweep;
    double parameter = 0.0;
    switch (sw.method) {
        case cmc::DesignMethod::Slope:
            parameter = nd.m_s_hat;
            break;
        default:
            parameter = nd.tau_hat;
            break;
    }
    cmc::McOptions opt;
    opt.n_cycles = f.cycles.value_or(opt.n_cycles);
    opt.t_on_min_hat = nd.t_on_min_hat;
    opt.i_max_hat = nd.i_max_hat;
    opt.threads = f.threads;
    const cmc::GridSpec grid = cmc::GridSpec::linear(sw.mc_a_max / na, sw.mc_a_max, na,
                                                     sw.mc_omega_min, sw.mc_omega_max, nw);
    const std::uint64_t seed = f.seed.value_or(sc.run.seed);
    const cmc::DesignGrid g =
        cmc::mc_stability_region(sc.loop.topology, cmc::normalized_conditioning(sw.method, parameter),
                                 grid, f.samples, seed, opt);
    std::ofstream os = open_output(f, sc, "mc_region.csv");
    cmc::write_design_grid_csv(os, g);
    finish(os, "mc_region.csv");
    int theorem = 0;
    int theorem_unstable = 0;
    double fraction = 0.0;
    for (const cmc::GridCell& c : g.cells) {
        fraction += c.stable_fraction;
        if (c.theorem_flag) {
            ++theorem;
            if (c.stable_fraction < 1.0) ++theorem_unstable;
        }
    }
    std::cout << "mc-region: " << (theorem_unstable == 0 ? "Consistent" : "Inconsistent")
              << " method=" << cmc::to_string(sw.method) << " parameter=" << fmt(parameter)
              << " cells=" << g.cells.size() << " theorem_cells=" << theorem
              << " theorem_cells_with_failures=" << theorem_unstable
              << " mean_stable_fraction=" << fmt(fraction / g.cells.size()) << '\n';
    return kExitOk;
}

std::vector<std::pair<double, double>> read_delay_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read comparator data '" + path + "'");
    std::vector<std::pair<double, double>> pts;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        double od = 0.0;
        double d = 0.0;
        char extra = 0;
        if (std::sscanf(line.c_str(), "%lf,%lf%c", &od, &d, &extra) != 2) {
            if (n == 1) continue;  // header
            throw cmc::ParseError("expected 'overdrive,delay' in '" + path + "'", n);
        }
        pts.emplace_back(od, d);
    }
    return pts;
}

int cmd_fit_comparator(const Flags& f, const cmc::Scenario& sc) {
    const std::string path = f.data.empty() ? sc.fit_data : f.data;
    if (path.empty()) throw IoError("fit-comparator needs --data PATH or fit_data in the scenario");
    const cmc::DelayFit fit = cmc::overdrive_delay_fit(read_delay_csv(path));
    json j = {{"p1_v_s", fit.p1}, {"p2_s", fit.p2}, {"rms_residual_s", fit.rms_residual}};
    write_json(f, sc, "comparator_fit.json", j);
    std::cout << "fit-comparator: p1=" << fmt(fit.p1) << " V*s p2=" << fmt(fit.p2)
              << " s rms=" << fmt(fit.rms_residual) << " s\n";
    return kExitOk;
}

int dispatch(const Flags& f) {
    cmc::Scenario sc;
    if (!f.scenario.empty())
        sc = cmc::load_scenario_file(f.scenario);
    else
        sc = cmc::load_preset(f.preset.empty() ? "buck-prototype" : f.preset);
    if (f.command == "simulate") return cmd_simulate(f, sc);
    if (f.command == "static-map") return cmd_static_map(f, sc);
    if (f.command == "stability") return cmd_stability(f, sc);
    if (f.command == "transient") return cmd_transient(f, sc);
    if (f.command == "design-diagram") return cmd_design_diagram(f, sc);
    if (f.command == "mc-region") return cmd_mc_region(f, sc);
    if (f.command == "fit-comparator") return cmd_fit_comparator(f, sc);
    throw cmc::PreconditionError("unknown command '" + f.command + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Current-mode control loops under sensor interference"};
    Flags f;
    app.add_option("command", f.command, "Command to run")
        ->required()
        ->check(CLI::IsMember({"simulate", "static-map", "stability", "transient",
                               "design-diagram", "mc-region", "fit-comparator"}));
    app.add_option("--scenario", f.scenario, "Scenario file (key = value)");
    app.add_option("--preset", f.preset, "Bundled scenario preset")->excludes("--scenario");
    app.add_option("--seed", f.seed, "Random seed");
    app.add_option("--out", f.out, "Output directory");
    app.add_option("--cycles", f.cycles, "Cycle count or cycle limit");
    app.add_option("--grid", f.grid, "Monte Carlo grid AxB (amplitude x frequency)");
    app.add_option("--samples", f.samples, "Monte Carlo samples per cell");
    app.add_option("--data", f.data, "Comparator delay CSV (overdrive,delay)");
    app.add_option("--threads", f.threads, "Worker threads, 0 for all cores");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitIo;
    }

    try {
        return dispatch(f);
    } catch (const cmc::PreconditionError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitPrecondition;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    }
}
