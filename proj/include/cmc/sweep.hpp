#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <utility>
#include <vector>

#include "cmc/analysis.hpp"
#include "cmc/conditioning.hpp"
#include "cmc/interference.hpp"
#include "cmc/loop.hpp"

namespace cmc {

enum class DesignMethod { Slope, Filter, Comparator };
const char* to_string(DesignMethod m);
DesignMethod parse_design_method(const std::string& name);

// Loop in normalized units: sensed slope 1 and steady-state sensed duration 1.
LoopConfig normalized_loop(Topology topology, double t_on_min_hat = 0.0, double i_max_hat = 10.0);

// Conditioning for a normalized design parameter (m_s_hat, tau_hat or comparator tau_hat).
Conditioning normalized_conditioning(DesignMethod method, double parameter);

struct GridSpec {
    std::vector<double> a_hat_axis;
    std::vector<double> omega_hat_axis;

    static GridSpec linear(double a_lo, double a_hi, int na, double w_lo, double w_hi, int nw);
};

struct GridCell {
    double stable_fraction = 0.0;
    bool theorem_flag = false;
};

struct DesignGrid {
    std::vector<double> a_hat_axis;
    std::vector<double> omega_hat_axis;
    std::vector<GridCell> cells;  // row-major: a_hat index, then omega_hat index

    const GridCell& at(std::size_t ia, std::size_t iw) const {
        return cells[ia * omega_hat_axis.size() + iw];
    }
};

struct McOptions {
    int n_cycles = 500;
    double t_on_min_hat = 0.0;
    double i_max_hat = 10.0;      // current bound used by the analysis predicates
    double divergence_factor = 10.0;  // simulations flag |i| > factor * i_max_hat
    double command_hat = 1.5;  // keeps the valley current positive
    double omega_span = 2.0;  // omega_ub / omega_l
    FrequencyConvention convention = FrequencyConvention::AsPrinted;
    int threads = 0;  // 0 selects the hardware concurrency
};

// Spectral class of one grid cell: trapezoids of amplitude up to a_hat, fundamental in
// [omega_l, omega_span*omega_l] and slew a_hat*omega_ub.
SpectralBounds cell_bounds(double a_hat, double omega_hat, double omega_span);

// Analysis predicate for the cell under the given (normalized) conditioning.
bool cell_theorem(Topology topology, const Conditioning& cond, double a_hat, double omega_hat,
                  const McOptions& opt);

// Fraction of random trapezoid samples per cell whose free-running simulation converges.
DesignGrid mc_stability_region(Topology topology, const Conditioning& cond_template,
                               const GridSpec& grid, int n_samples, std::uint64_t seed,
                               const McOptions& opt = {});

struct StepMetrics {
    double n_w = 0.0;       // fractional cycles to reach exp(-4) of the initial error
    int n_2pct = 0;         // first cycle with |error| <= 2% of the initial error
    double o_w = 0.0;
    double t_od = 0.0;      // steady-state overdrive delay before the step
    bool settled = false;
};

// Cycle-synchronous step response from the steady state at i_c0 to i_c1.
StepMetrics step_response(const LoopConfig& cfg, const Conditioning& cond, const Signal& w,
                          double i_c0, double i_c1, int max_cycles = 4000);

// Cycle-synchronous recovery after the extremum current of the steady state at i_c is
// displaced by delta, with the command held.
StepMetrics disturbance_response(const LoopConfig& cfg, const Conditioning& cond,
                                 const Signal& w, double i_c, double delta,
                                 int max_cycles = 4000);

// Command steps through a filter also carry the previous command into the next cycle;
// a current disturbance isolates the closed-loop pole.
enum class ResponseKind { Disturbance, CommandStep };

struct DesignCurve {
    DesignMethod method = DesignMethod::Slope;
    double level = 0.0;  // lambda_hat for Slope, a_hat otherwise
    std::vector<double> parameter_axis;
    std::vector<double> n_w_theory;
    std::vector<double> n_w_sim;
    std::vector<double> o_w_theory;
    std::vector<double> o_w_sim;
    std::vector<double> t_od_theory;  // Comparator only
    std::vector<double> t_od_sim;     // Comparator only
};

struct DiagramOptions {
    double omega_hat = 2.0;  // Filter and Comparator: lower frequency bound
    double omega_span = 2.0;  // worst case taken over [omega_hat, omega_span*omega_hat]
    int frequencies = 8;
    double command = 1.5;    // operating command, normalized
    double step = 1e-3;      // disturbance or command step, normalized
    ResponseKind response = ResponseKind::Disturbance;
    int phases = 16;
    int golden_iterations = 24;
    int max_cycles = 4000;
    int threads = 0;
};

// NaN entries mark points that do not settle.
std::vector<DesignCurve> design_diagram(DesignMethod method, const std::vector<double>& levels,
                                        const std::vector<double>& parameter_axis,
                                        Topology topology, const DiagramOptions& opt = {});

// One (o_w, n_w) point per parameter value with finite simulated values.
std::vector<std::pair<double, double>> tradeoff_points(const DesignCurve& curve);
// Points not dominated in both overshoot and settling.
std::vector<std::pair<double, double>> pareto_front(std::vector<std::pair<double, double>> points);

void write_design_grid_csv(std::ostream& os, const DesignGrid& grid);
void write_design_curve_csv(std::ostream& os, const DesignCurve& curve);

// Runs f(0..n-1) on a pool of worker threads.
void parallel_for(int n, int threads, const std::function<void(int)>& f);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace cmc
