#include "cmc/interference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "cmc/errors.hpp"

namespace cmc {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_angle(double theta) {
    double r = std::fmod(theta, kTwoPi);
    if (r < 0.0) r += kTwoPi;
    return r;
}

// Zero-state response of the first-order lag over [0, t] to A sin(omega (t0+s) + phase).
double tone_lowpass(const Tone& tone, double t0, double t, double tau) {
    const double wt = tone.omega * tau;
    const double gain = tone.amplitude / std::sqrt(1.0 + wt * wt);
    const double lag = std::atan(wt);
    const double theta0 = tone.omega * t0 + tone.phase;
    const double theta1 = theta0 + tone.omega * t;
    return gain * (std::sin(theta1 - lag) - std::exp(-t / tau) * std::sin(theta0 - lag));
}

}  // namespace

Signal Signal::zero() { return Signal{}; }

Signal Signal::sinusoid(double amplitude, double omega, double phase) {
    if (!(omega > 0.0) || !std::isfinite(omega))
        throw InvalidSignal("sinusoid frequency must be positive (no dc component)");
    if (amplitude == 0.0) return zero();
    Signal s;
    s.kind_ = Kind::Sinusoid;
    s.tones_.push_back({amplitude, omega, phase});
    return s;
}

Signal Signal::trapezoid(double amplitude, double omega_l, double slew, double phase) {
    if (!(omega_l > 0.0) || !std::isfinite(omega_l))
        throw InvalidSignal("trapezoid fundamental must be positive");
    if (amplitude == 0.0) return zero();
    if (!(slew > 0.0) || slew * kPi / omega_l < 2.0 * std::abs(amplitude))
        throw InfeasibleTrapezoid("slew * pi / omega_l must be at least 2A");
    Signal s;
    s.kind_ = Kind::Trapezoid;
    s.trap_ = {amplitude, omega_l, slew, phase};
    s.half_rise_angle_ = omega_l * std::abs(amplitude) / slew;
    return s;
}

Signal Signal::sum(std::vector<Tone> tones) {
    std::vector<Tone> kept;
    for (const Tone& t : tones) {
        if (!(t.omega > 0.0) || !std::isfinite(t.omega))
            throw InvalidSignal("sum component with non-positive frequency");
        if (t.amplitude != 0.0) kept.push_back(t);
    }
    if (kept.empty()) return zero();
    Signal s;
    s.kind_ = kept.size() == 1 ? Kind::Sinusoid : Kind::SumOfSinusoids;
    s.tones_ = std::move(kept);
    return s;
}

double Signal::trap_shape(double theta) const {
    const double h = half_rise_angle_;
    const double th = wrap_angle(theta);
    if (th < h) return th / h;
    if (th < kPi - h) return 1.0;
    if (th < kPi + h) return (kPi - th) / h;
    if (th < kTwoPi - h) return -1.0;
    return (th - kTwoPi) / h;
}

double Signal::operator()(double t) const {
    switch (kind_) {
        case Kind::Zero:
            return 0.0;
        case Kind::Trapezoid:
            return trap_.amplitude * trap_shape(trap_.omega_l * t + trap_.phase);
        default: {
            double v = 0.0;
            for (const Tone& tone : tones_) v += tone.amplitude * std::sin(tone.omega * t + tone.phase);
            return v;
        }
    }
}

double Signal::derivative(double t) const {
    switch (kind_) {
        case Kind::Zero:
            return 0.0;
        case Kind::Trapezoid: {
            const double h = half_rise_angle_;
            const double th = wrap_angle(trap_.omega_l * t + trap_.phase);
            const double k = trap_.amplitude * trap_.omega_l / h;
            if (th < h || th >= kTwoPi - h) return k;
            if (th >= kPi - h && th < kPi + h) return -k;
            return 0.0;
        }
        default: {
            double v = 0.0;
            for (const Tone& tone : tones_)
                v += tone.amplitude * tone.omega * std::cos(tone.omega * t + tone.phase);
            return v;
        }
    }
}

double Signal::trap_lowpass(double t0, double t, double tau) const {
    // Exact convolution of the piecewise-linear wave with the exponential kernel.
    const double s_begin = std::max(0.0, t - 60.0 * tau);
    const double w = trap_.omega_l;
    const double h = half_rise_angle_;
    const double breaks[4] = {h, kPi - h, kPi + h, kTwoPi - h};

    double acc = 0.0;
    double sa = s_begin;
    while (sa < t) {
        const double theta = w * (t0 + sa) + trap_.phase;
        const double th = wrap_angle(theta);
        double next = kTwoPi + h;
        for (double b : breaks) {
            if (b > th + 1e-12) {
                next = b;
                break;
            }
        }
        double sb = sa + (next - th) / w;
        if (sb > t) sb = t;
        if (sb <= sa) sb = std::min(t, sa + 1e-12 / w);
        const double fa = (*this)(t0 + sa);
        const double k = derivative(t0 + 0.5 * (sa + sb));
        const double ea = std::exp(-(t - sa) / tau);
        const double eb = std::exp(-(t - sb) / tau);
        acc += fa * (eb - ea) + k * (eb * (sb - sa) - tau * (eb - ea));
        sa = sb;
    }
    return acc;
}

double Signal::lowpass(double t0, double t, double tau) const {
    if (t <= 0.0) return 0.0;
    switch (kind_) {
        case Kind::Zero:
            return 0.0;
        case Kind::Trapezoid:
            return trap_lowpass(t0, t, tau);
        default: {
            double v = 0.0;
            for (const Tone& tone : tones_) v += tone_lowpass(tone, t0, t, tau);
            return v;
        }
    }
}

double Signal::period() const {
    switch (kind_) {
        case Kind::Zero:
            return 0.0;
        case Kind::Trapezoid:
            return kTwoPi / trap_.omega_l;
        default: {
            double wmin = tones_.front().omega;
            for (const Tone& tone : tones_) wmin = std::min(wmin, tone.omega);
            return kTwoPi / wmin;
        }
    }
}

double Signal::rise_time() const {
    if (kind_ != Kind::Trapezoid) return 0.0;
    return 2.0 * std::abs(trap_.amplitude) / trap_.slew;
}

double Signal::peak_bound() const {
    if (kind_ == Kind::Trapezoid) return std::abs(trap_.amplitude);
    double a = 0.0;
    for (const Tone& tone : tones_) a += std::abs(tone.amplitude);
    return a;
}

double Signal::max_omega() const {
    switch (kind_) {
        case Kind::Zero:
            return 0.0;
        case Kind::Trapezoid:
            return std::max(trap_.omega_l, kPi / rise_time());
        default: {
            double wmax = 0.0;
            for (const Tone& tone : tones_) wmax = std::max(wmax, tone.omega);
            return wmax;
        }
    }
}

Signal Signal::negated() const { return scaled(-1.0); }

Signal Signal::scaled(double k) const {
    if (k == 0.0) return zero();
    Signal s = *this;
    for (Tone& tone : s.tones_) tone.amplitude *= k;
    if (kind_ == Kind::Trapezoid) {
        s.trap_.amplitude *= k;
        s.trap_.slew *= std::abs(k);
    }
    return s;
}

double eval(const Signal& w, double t) { return w(t); }

double running_integral_halfspan(const Signal& w, int points_per_period) {
    if (w.is_zero()) return 0.0;
    int n = std::max(points_per_period, 4);
    if (n % 2) ++n;
    const double period = w.period();
    const double h = period / n;
    std::vector<double> f(n + 1);
    for (int i = 0; i <= n; ++i) f[i] = w(i * h);
    double g = 0.0, gmin = 0.0, gmax = 0.0;
    for (int i = 0; i + 2 <= n; i += 2) {
        // Interior node by the half-interval Simpson rule, then the full panel.
        const double mid = g + h / 12.0 * (5.0 * f[i] + 8.0 * f[i + 1] - f[i + 2]);
        g += h / 3.0 * (f[i] + 4.0 * f[i + 1] + f[i + 2]);
        gmin = std::min({gmin, mid, g});
        gmax = std::max({gmax, mid, g});
    }
    return 0.5 * (gmax - gmin);
}

SpectralBounds bounds(const Signal& w) {
    SpectralBounds b;
    switch (w.kind()) {
        case Signal::Kind::Zero:
            return b;
        case Signal::Kind::Trapezoid: {
            const auto& tr = w.trapezoid_shape();
            b.a_ub = std::abs(tr.amplitude);
            b.lambda_ub = tr.slew;
            b.b_integral = running_integral_halfspan(w, 4096);
            b.omega_l = tr.omega_l;
            // The transitions carry the fastest content; a scan pitch below the rise
            // time cannot step over a crossing.
            b.omega_ub = w.max_omega();
            return b;
        }
        default: {
            b.omega_l = w.tones().front().omega;
            b.omega_ub = b.omega_l;
            for (const Tone& t : w.tones()) {
                b.a_ub += std::abs(t.amplitude);
                b.lambda_ub += std::abs(t.amplitude * t.omega);
                b.b_integral += std::abs(t.amplitude / t.omega);
                b.omega_l = std::min(b.omega_l, t.omega);
                b.omega_ub = std::max(b.omega_ub, t.omega);
            }
            return b;
        }
    }
}

Signal worst_case_trapezoid(double a_ub, double omega_l, double lambda_ub, double phase) {
    if (a_ub < 0.0) throw InvalidSignal("a_ub must be non-negative");
    if (a_ub == 0.0) return Signal::zero();
    if (lambda_ub * (kPi / omega_l) < 2.0 * a_ub)
        throw InfeasibleTrapezoid("lambda_ub * pi / omega_l < 2 a_ub");
    return Signal::trapezoid(a_ub, omega_l, lambda_ub, phase);
}

Signal sample_random(const SpectralBounds& spec, std::uint64_t seed, SampleShape shape) {
    if (spec.a_ub <= 0.0 || spec.omega_ub <= 0.0) return Signal::zero();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double wl = spec.omega_l > 0.0 ? spec.omega_l : spec.omega_ub;
    const double omega = wl + (spec.omega_ub - wl) * unit(rng);
    const double phase = kTwoPi * unit(rng);
    const double frac = 1.0 - unit(rng);  // (0, 1]
    if (shape == SampleShape::Sinusoid) {
        double amax = spec.a_ub;
        if (spec.lambda_ub > 0.0) amax = std::min(amax, spec.lambda_ub / omega);
        return Signal::sinusoid(amax * frac, omega, phase);
    }
    double slew = spec.lambda_ub;
    double amax = spec.a_ub;
    if (slew > 0.0) {
        amax = std::min(amax, slew * kPi / (2.0 * omega));
    } else {
        slew = 8.0 * amax * omega / kPi;
    }
    return Signal::trapezoid(amax * frac, omega, slew, phase);
}

}  // namespace cmc
