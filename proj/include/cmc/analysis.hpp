#pragma once

#include <string>

#include "json.hpp"

#include "cmc/conditioning.hpp"
#include "cmc/interference.hpp"
#include "cmc/loop.hpp"

namespace cmc {

enum class StabilityVerdict { GuaranteedStable, NotGuaranteed };
const char* to_string(StabilityVerdict v);

// Sufficient large-signal condition for the topology; Filter and Overdrive
// conditioning have their own predicates below and return NotGuaranteed here.
StabilityVerdict large_signal_verdict(Topology topology, double m1, double m2, double lambda_ub,
                                      const Conditioning& cond);

struct PoleRange {
    double a_min = 0.0;
    double a_max = 0.0;
    double b = 0.0;
    double beta = 1.0;
};

PoleRange pole_range(Topology topology, double m1, double m2, double lambda_ub,
                     const Conditioning& cond);

// Linearized pole for a local interference slope sigma = w'(t_event).
double linearized_pole(Topology topology, double m1, double m2, double sigma, double m_s);

double settling(const PoleRange& pr);
double overshoot(const PoleRange& pr);

struct TransientReport {
    PoleRange pole_range;
    double n_w = 0.0;
    double o_w = 0.0;
    bool stable_small_signal = false;
};

TransientReport transient_report(const PoleRange& pr);

struct OptimalSlope {
    double m_s_hat = 0.0;
    double n_w = 0.0;
};

OptimalSlope optimal_slope(double lambda_hat);

struct NormalizedDesign {
    double a_hat = 0.0;
    double omega_hat = 0.0;
    double tau_hat = 0.0;
    double t_on_min_hat = 0.0;
    double m_s_hat = 0.0;
    double lambda_hat = 0.0;
    double i_max_hat = 0.0;
    double t_min_hat = 0.0;  // 0 selects t_on_min_hat + 1
};

// Physical quantities recovered from a normalized design.
struct PhysicalDesign {
    double a_ub = 0.0;
    double omega_l = 0.0;
    double tau = 0.0;     // filter time constant, or comparator area v_trig*tau_c/r_sample
    double t_on_min = 0.0;
    double m_s = 0.0;
    double lambda_ub = 0.0;
    double i_max = 0.0;
    double t_min = 0.0;
};

// Normalizes by the sensed ramp slope and the steady-state duration of the sensed phase.
NormalizedDesign normalize(const LoopConfig& cfg, const Conditioning& cond,
                           const SpectralBounds& spec);
PhysicalDesign denormalize(const NormalizedDesign& n, Conditioning::Kind kind, double m1,
                           double t_on);

// How the filter theorems read the 2*pi factor next to the normalized frequency.
enum class FrequencyConvention { AsPrinted, Unscaled };

bool filter_continuity_ok(const NormalizedDesign& n,
                          FrequencyConvention conv = FrequencyConvention::AsPrinted);
bool filter_stability_ok(const NormalizedDesign& n,
                         FrequencyConvention conv = FrequencyConvention::AsPrinted);

struct FilterParams {
    double m1 = 0.0;
    double m2 = 0.0;
    double t_sensed = 0.0;  // duration of the filtered ramp at the operating point
    double t_gap = 0.0;     // unsensed interval before it
    double tau = 0.0;
};

struct FilterClosedLoop {
    double a = 0.0;
    double b = 0.0;
    double d = 0.0;
    double beta = 0.0;
    double psi1 = 0.0;
    double psi2 = 0.0;
};

// Linearized filter loop at an operating point. i_ramp_start is the valley current for
// peak loops and the peak current for valley loops. w is read with its phase at the start
// of the sensed ramp. For fixed-frequency loops a is the dominant closed-loop pole.
FilterClosedLoop filter_closed_loop(Topology topology, const FilterParams& p, double i_c_op,
                                    double i_ramp_start, const Signal& w);

bool comparator_stability_ok(double a_ub, double b_integral, double m1, double v_trig_tau);
double comparator_max_delay(double a_ub, double b_integral, double m1, double v_trig_tau);
PoleRange comparator_psi_pole_range(double a_hat, double omega_hat, double tau_hat, double m1);
// Smallest integrator area (current domain) that keeps the static map continuous.
double comparator_continuity_threshold(const Signal& w, double m1);

void to_json(nlohmann::json& j, const PoleRange& p);
void to_json(nlohmann::json& j, const TransientReport& r);
void to_json(nlohmann::json& j, const NormalizedDesign& n);

}  // namespace cmc
