#pragma once

#include <cstdint>
#include <vector>

namespace cmc {

struct Tone {
    double amplitude = 0.0;
    double omega = 0.0;  // rad/s
    double phase = 0.0;  // rad
};

struct TrapezoidShape {
    double amplitude = 0.0;
    double omega_l = 0.0;  // fundamental, rad/s
    double slew = 0.0;     // |dw/dt| on the transitions
    double phase = 0.0;    // rad
};

struct SpectralBounds {
    double a_ub = 0.0;
    double lambda_ub = 0.0;
    double b_integral = 0.0;
    double omega_l = 0.0;
    double omega_ub = 0.0;
};

// Bounded, zero-mean, band-limited additive sensor interference w(t).
// Immutable after construction.
class Signal {
public:
    enum class Kind { Zero, Sinusoid, Trapezoid, SumOfSinusoids };

    Signal() = default;

    static Signal zero();
    static Signal sinusoid(double amplitude, double omega, double phase = 0.0);
    // Symmetric rise/plateau/fall/plateau wave; requires slew*pi/omega_l >= 2|A|.
    static Signal trapezoid(double amplitude, double omega_l, double slew, double phase = 0.0);
    static Signal sum(std::vector<Tone> tones);

    Kind kind() const { return kind_; }
    bool is_zero() const { return kind_ == Kind::Zero; }
    const std::vector<Tone>& tones() const { return tones_; }
    const TrapezoidShape& trapezoid_shape() const { return trap_; }

    double operator()(double t) const;
    double derivative(double t) const;

    // First-order low-pass response at time t of an input w(t0 + s), s in [0, t],
    // starting from zero state: int_0^t exp(-(t-s)/tau)/tau * w(t0+s) ds.
    double lowpass(double t0, double t, double tau) const;

    // Fundamental period (0 for the zero signal).
    double period() const;

    Signal negated() const;
    Signal scaled(double k) const;

    // Rise (or fall) duration of a trapezoid.
    double rise_time() const;

    // sup |w|, cheap (no quadrature).
    double peak_bound() const;
    // Largest angular frequency present (transition rate for a trapezoid).
    double max_omega() const;

private:
    Kind kind_ = Kind::Zero;
    std::vector<Tone> tones_;
    TrapezoidShape trap_;
    double half_rise_angle_ = 0.0;

    double trap_shape(double theta) const;
    double trap_lowpass(double t0, double t, double tau) const;
};

using InterferenceSignal = Signal;

double eval(const Signal& w, double t);

SpectralBounds bounds(const Signal& w);

Signal worst_case_trapezoid(double a_ub, double omega_l, double lambda_ub, double phase = 0.0);

enum class SampleShape { Trapezoid, Sinusoid };

// Draws a signal whose bounds() stay inside `spec`: amplitude in (0, a_ub],
// frequency in [omega_l, omega_ub], phase uniform on [0, 2pi).
Signal sample_random(const SpectralBounds& spec, std::uint64_t seed,
                     SampleShape shape = SampleShape::Trapezoid);

// Half peak-to-peak of the running integral of w over one period, by composite Simpson.
double running_integral_halfspan(const Signal& w, int points_per_period = 4096);

}  // namespace cmc
