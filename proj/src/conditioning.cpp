#include "cmc/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cmc/errors.hpp"

namespace cmc {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Saturating integrator fed with a piecewise-linear integrand, one linear piece at a time.
struct SaturatingIntegrator {
    double threshold = 0.0;
    double state = 0.0;
    double t_fi = 0.0;
    bool fired = false;
    double t_fire = 0.0;

    void rise(double t0, double t1, double e0, double e1) {
        if (state <= 0.0) {
            state = 0.0;
            t_fi = t0;
        }
        const double dt = t1 - t0;
        const double area = 0.5 * (e0 + e1) * dt;
        if (state + area < threshold) {
            state += area;
            return;
        }
        const double need = threshold - state;
        const double k = dt > 0.0 ? (e1 - e0) / dt : 0.0;
        double s = 0.0;
        if (need > 0.0) {
            const double disc = std::max(0.0, e0 * e0 + 2.0 * k * need);
            const double den = e0 + std::sqrt(disc);
            s = den > 0.0 ? 2.0 * need / den : dt;
        }
        fired = true;
        t_fire = t0 + std::clamp(s, 0.0, dt);
        state = threshold;
    }

    void fall(double t0, double t1, double e0, double e1) {
        state = std::max(0.0, state + 0.5 * (e0 + e1) * (t1 - t0));
    }

    // Linear piece from (ta, ea) to (tb, eb); splits at the sign change.
    void piece(double ta, double tb, double ea, double eb) {
        if (fired || tb <= ta) return;
        if (ea >= 0.0 && eb >= 0.0) {
            rise(ta, tb, ea, eb);
        } else if (ea <= 0.0 && eb <= 0.0) {
            fall(ta, tb, ea, eb);
        } else {
            const double tz = ta + (tb - ta) * ea / (ea - eb);
            if (ea > 0.0) {
                rise(ta, tz, ea, 0.0);
                if (!fired) fall(tz, tb, 0.0, eb);
            } else {
                fall(ta, tz, ea, 0.0);
                rise(tz, tb, 0.0, eb);
            }
        }
    }
};

// Next time after t (strictly) at which a trapezoid changes slope.
double next_trapezoid_break(const Signal& w, double w_origin, double t) {
    const auto& tr = w.trapezoid_shape();
    const double h = tr.omega_l * std::abs(tr.amplitude) / tr.slew;
    const double breaks[5] = {h, std::numbers::pi - h, std::numbers::pi + h, kTwoPi - h, kTwoPi + h};
    const double theta = tr.omega_l * (w_origin + t) + tr.phase;
    const double base = std::floor(theta / kTwoPi) * kTwoPi;
    const double th = theta - base;
    double next = kTwoPi + h;
    for (double b : breaks) {
        if (b > th + 1e-12) {
            next = b;
            break;
        }
    }
    return t + (next - th) / tr.omega_l;
}

}  // namespace

Conditioning Conditioning::slope(double m_s) {
    Conditioning c;
    c.kind = Kind::SlopeComp;
    c.m_s = m_s;
    c.validate();
    return c;
}

Conditioning Conditioning::filter(double tau) {
    Conditioning c;
    c.kind = Kind::Filter;
    c.tau = tau;
    c.validate();
    return c;
}

Conditioning Conditioning::overdrive(double tau_c, double v_trig, double t_d_const, double r_sample) {
    Conditioning c;
    c.kind = Kind::Overdrive;
    c.tau_c = tau_c;
    c.v_trig = v_trig;
    c.t_d_const = t_d_const;
    c.r_sample = r_sample;
    c.validate();
    return c;
}

void Conditioning::validate() const {
    switch (kind) {
        case Kind::None:
            return;
        case Kind::SlopeComp:
            if (!(m_s >= 0.0) || !std::isfinite(m_s))
                throw PreconditionError("compensation slope must be non-negative");
            return;
        case Kind::Filter:
            if (!(tau > 0.0) || !std::isfinite(tau))
                throw PreconditionError("filter time constant must be positive");
            return;
        case Kind::Overdrive:
            if (!(tau_c > 0.0) || !(v_trig > 0.0) || !(r_sample > 0.0))
                throw PreconditionError("overdrive needs tau_c > 0, v_trig > 0, r_sample > 0");
            if (t_d_const < 0.0 || t_blank < 0.0)
                throw PreconditionError("overdrive delays must be non-negative");
            return;
    }
}

double slope_command(double i_c, double m_s, double t) {
    if (t < 0.0) throw PreconditionError("slope_command needs t >= 0");
    return i_c - m_s * t;
}

double filter_output(double carried_state, const RampSegment& segment, const Signal& w,
                     double tau, double t, double t0) {
    if (!(tau > 0.0)) throw PreconditionError("filter time constant must be positive");
    if (t <= 0.0) return carried_state;
    const double decay = std::exp(-t / tau);
    const double one_minus = -std::expm1(-t / tau);
    return carried_state * decay + segment.offset * one_minus +
           segment.slope * (t - tau * one_minus) + w.lowpass(t0, t, tau);
}

OverdriveEvent overdrive_trigger_detail(const RampSegment& ramp, double i_c, const Signal& w,
                                        const Conditioning& comp, double window,
                                        double w_origin) {
    if (!(window > 0.0)) throw PreconditionError("window must be positive");
    if (comp.kind != Conditioning::Kind::Overdrive)
        throw PreconditionError("overdrive_trigger needs an Overdrive conditioning");

    SaturatingIntegrator integ;
    integ.threshold = comp.overdrive_area();

    const double a_ub = w.peak_bound();
    const auto error = [&](double t) { return ramp.offset + ramp.slope * t + w(w_origin + t) - i_c; };

    double t = std::max(0.0, comp.t_blank);
    integ.t_fi = t;
    // The integrand cannot be positive before the upper envelope meets the command.
    if (ramp.slope > 0.0) {
        const double t_upper = (i_c - ramp.offset - a_ub) / ramp.slope;
        if (t_upper > t) t = t_upper;
    }
    if (t >= window) throw NoCrossing("overdrive integrator cannot trigger within the window");

    const bool piecewise_linear = w.is_zero() || w.kind() == Signal::Kind::Trapezoid;
    const double w_period = w.max_omega() > 0.0 ? 2.0 * std::numbers::pi / w.max_omega() : window;
    const double pitch = std::min(window / 8192.0, std::max(0.05 * comp.tau_c, w_period / 256.0));

    double e_prev = error(t);
    while (!integ.fired && t < window) {
        double t_next;
        if (w.is_zero()) {
            t_next = window;
        } else if (piecewise_linear) {
            t_next = std::min(window, next_trapezoid_break(w, w_origin, t));
        } else {
            t_next = std::min(window, t + pitch);
        }
        const double e_next = error(t_next);
        integ.piece(t, t_next, e_prev, e_next);
        t = t_next;
        e_prev = e_next;
    }
    if (!integ.fired) throw NoCrossing("overdrive integrator did not reach its threshold");

    OverdriveEvent ev;
    ev.t_trigger = integ.t_fire;
    ev.t_event = integ.t_fire + comp.t_d_const;
    ev.t_fi = integ.t_fi;
    return ev;
}

double overdrive_trigger(const RampSegment& ramp, double i_c, const Signal& w,
                         const Conditioning& comp, double window, double w_origin) {
    return overdrive_trigger_detail(ramp, i_c, w, comp, window, w_origin).t_event;
}

RegionBoundaries region_boundaries(const RampSegment& ramp, double i_c, double a_ub,
                                   const Conditioning& comp) {
    if (!(ramp.slope > 0.0)) throw PreconditionError("ramp slope must be positive");
    if (a_ub < 0.0) throw PreconditionError("a_ub must be non-negative");
    RegionBoundaries r;
    r.t_a = std::max(0.0, comp.t_blank);
    const double raw_b = (i_c - ramp.offset - a_ub) / ramp.slope;
    const double raw_d = (i_c - ramp.offset + a_ub) / ramp.slope;
    r.t_b = std::max(r.t_a, raw_b);
    r.t_d = std::max(r.t_b, raw_d);
    const double k = comp.kind == Conditioning::Kind::Overdrive ? comp.overdrive_area() : 0.0;
    // Area of m1 (t - t_x) accumulated from max(t_a, t_x) reaches k.
    const auto trigger = [&](double t_x) {
        const double lead = std::max(0.0, r.t_a - t_x);
        return t_x + std::sqrt(2.0 * k / ramp.slope + lead * lead);
    };
    r.t_b_trigger = trigger(raw_b) + comp.t_d_const;
    r.t_d_trigger = trigger(raw_d) + comp.t_d_const;
    return r;
}

DelayFit overdrive_delay_fit(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 2) throw InsufficientData("need at least two (overdrive, delay) points");
    double xm = 0.0, ym = 0.0;
    for (const auto& [dv, delay] : points) {
        if (!(dv > 0.0)) throw PreconditionError("overdrive must be positive");
        xm += 1.0 / dv;
        ym += delay;
    }
    const double n = static_cast<double>(points.size());
    xm /= n;
    ym /= n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [dv, delay] : points) {
        const double dx = 1.0 / dv - xm;
        sxx += dx * dx;
        sxy += dx * (delay - ym);
    }
    if (!(sxx > 1e-300) || sxx <= 1e-24 * xm * xm * n)
        throw SingularFit("all overdrive values are equal");
    DelayFit fit;
    fit.p1 = sxy / sxx;
    fit.p2 = ym - fit.p1 * xm;
    double ss = 0.0;
    for (const auto& [dv, delay] : points) {
        const double r = delay - (fit.p1 / dv + fit.p2);
        ss += r * r;
    }
    fit.rms_residual = std::sqrt(ss / n);
    return fit;
}

}  // namespace cmc
