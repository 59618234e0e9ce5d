#pragma once

#include <utility>
#include <vector>

#include "cmc/interference.hpp"

namespace cmc {

struct Conditioning {
    enum class Kind { None, SlopeComp, Filter, Overdrive };

    Kind kind = Kind::None;
    double m_s = 0.0;        // compensation slope [A/s]
    double tau = 0.0;        // low-pass time constant [s]
    double tau_c = 0.0;      // comparator time constant C_eff/G [s]
    double v_trig = 0.0;     // comparator trigger voltage [V]
    double t_d_const = 0.0;  // input-independent comparator delay [s]
    double r_sample = 1.0;   // sense resistance [ohm]
    double t_blank = 0.0;    // integrator held in reset until this time [s]

    static Conditioning none() { return {}; }
    static Conditioning slope(double m_s);
    static Conditioning filter(double tau);
    static Conditioning overdrive(double tau_c, double v_trig, double t_d_const = 0.0,
                                  double r_sample = 1.0);

    // Integrator threshold in the current domain: v_trig * tau_c / r_sample [A s].
    double overdrive_area() const { return v_trig * tau_c / r_sample; }

    void validate() const;
};

struct RampSegment {
    double offset = 0.0;  // current at the segment start [A]
    double slope = 0.0;   // [A/s]
};

struct RegionBoundaries {
    double t_a = 0.0;
    double t_b = 0.0;
    double t_d = 0.0;
    double t_b_trigger = 0.0;  // upper-envelope trigger t_b'
    double t_d_trigger = 0.0;  // lower-envelope trigger t_d'
};

struct OverdriveEvent {
    double t_trigger = 0.0;  // integrator reaches its threshold
    double t_event = 0.0;    // trigger plus the constant delay
    double t_fi = 0.0;       // last instant the integrator state was zero
};

double slope_command(double i_c, double m_s, double t);

// Filter output at time t within a segment whose input is offset + slope*s + w(t0+s),
// starting from the carried filter state.
double filter_output(double carried_state, const RampSegment& segment, const Signal& w,
                     double tau, double t, double t0 = 0.0);

// Saturating-integrator comparator. Integrates (i_v + m1 t + w - i_c), clamped at zero,
// from the blanking time and fires when the area reaches v_trig*tau_c/r_sample.
OverdriveEvent overdrive_trigger_detail(const RampSegment& ramp, double i_c, const Signal& w,
                                        const Conditioning& comp, double window,
                                        double w_origin = 0.0);

double overdrive_trigger(const RampSegment& ramp, double i_c, const Signal& w,
                         const Conditioning& comp, double window, double w_origin = 0.0);

// Envelope crossings of (ideal ramp +/- a_ub) with the command and their triggers.
RegionBoundaries region_boundaries(const RampSegment& ramp, double i_c, double a_ub,
                                   const Conditioning& comp);

struct DelayFit {
    double p1 = 0.0;  // v_trig * tau product [V s]
    double p2 = 0.0;  // constant delay [s]
    double rms_residual = 0.0;
};

// Least-squares fit of delay = p1 / overdrive + p2.
DelayFit overdrive_delay_fit(const std::vector<std::pair<double, double>>& points);

}  // namespace cmc
