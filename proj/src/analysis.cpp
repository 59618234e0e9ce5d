#include "cmc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

#include "cmc/errors.hpp"

namespace cmc {

namespace {

constexpr double kPi = std::numbers::pi;

double search_slope_of(Topology t, double m1, double m2) {
    return (t == Topology::ConstOffTimePeak || t == Topology::FixedFreqPeak) ? m1 : m2;
}

double other_slope_of(Topology t, double m1, double m2) {
    return (t == Topology::ConstOffTimePeak || t == Topology::FixedFreqPeak) ? m2 : m1;
}

bool fixed_frequency(Topology t) {
    return t == Topology::FixedFreqPeak || t == Topology::FixedFreqValley;
}

double slope_of(const Conditioning& cond) {
    return cond.kind == Conditioning::Kind::SlopeComp ? cond.m_s : 0.0;
}

// Steady-state S(t) = g sin(omega t + phase - lag) of a tone through the filter, and the
// derivative at t of the zero-state response: S'(t) + exp(-t/tau) S(0) / tau.
double tone_psi1(const Tone& tone, double t, double tau) {
    const double wt = tone.omega * tau;
    const double g = tone.amplitude / std::sqrt(1.0 + wt * wt);
    const double lag = std::atan(wt);
    return g * tone.omega * std::cos(tone.omega * t + tone.phase - lag) +
           std::exp(-t / tau) / tau * g * std::sin(tone.phase - lag);
}

// Odd-harmonic sine series of the symmetric trapezoid.
std::vector<Tone> trapezoid_harmonics(const Signal& w, int count) {
    const auto& tr = w.trapezoid_shape();
    const double h = tr.omega_l * std::abs(tr.amplitude) / tr.slew;
    std::vector<Tone> tones;
    for (int j = 0; j < count; ++j) {
        const int k = 2 * j + 1;
        const double bk = 4.0 * std::sin(k * h) / (kPi * k * k * h);
        tones.push_back({tr.amplitude * bk, k * tr.omega_l, k * tr.phase});
    }
    return tones;
}

double psi1_of(const Signal& w, double t_sensed, double tau) {
    switch (w.kind()) {
        case Signal::Kind::Zero:
            return 0.0;
        case Signal::Kind::Trapezoid: {
            double v = 0.0;
            for (const Tone& tone : trapezoid_harmonics(w, 64)) v += tone_psi1(tone, t_sensed, tau);
            return v;
        }
        default: {
            double v = 0.0;
            for (const Tone& tone : w.tones()) v += tone_psi1(tone, t_sensed, tau);
            return v;
        }
    }
}

// Largest saturating-integral value of m1 t + w(t + shift) - c reached before the
// integrand's last upward zero crossing.
double saturating_peak_before_last_root(const Signal& w, double m1, double a, double shift,
                                        double c, double pitch) {
    const double t0 = (c - a) / m1;
    const double t1 = (c + a) / m1;
    const int n = std::max(16, static_cast<int>(std::ceil((t1 - t0) / pitch)));
    const double h = (t1 - t0) / n;
    double state = 0.0;
    double running_max = 0.0;
    double result = 0.0;
    double e_prev = m1 * t0 + w(t0 + shift) - c;
    for (int k = 1; k <= n; ++k) {
        const double t = t0 + k * h;
        const double e = m1 * t + w(t + shift) - c;
        if (e_prev < 0.0 && e >= 0.0) {
            // Upward root inside this step: close the negative part first.
            const double tz = h * (-e_prev) / (e - e_prev);
            state = std::max(0.0, state + 0.5 * e_prev * tz);
            result = running_max;
            state += 0.5 * e * (h - tz);
        } else if (e_prev >= 0.0 && e < 0.0) {
            const double tz = h * e_prev / (e_prev - e);
            state += 0.5 * e_prev * tz;
            running_max = std::max(running_max, state);
            state = std::max(0.0, state + 0.5 * e * (h - tz));
        } else {
            state = std::max(0.0, state + 0.5 * (e_prev + e) * h);
        }
        running_max = std::max(running_max, state);
        e_prev = e;
    }
    return result;
}

}  // namespace

const char* to_string(StabilityVerdict v) {
    return v == StabilityVerdict::GuaranteedStable ? "GuaranteedStable" : "NotGuaranteed";
}

StabilityVerdict large_signal_verdict(Topology topology, double m1, double m2, double lambda_ub,
                                      const Conditioning& cond) {
    if (lambda_ub < 0.0) throw PreconditionError("lambda_ub must be non-negative");
    if (cond.kind == Conditioning::Kind::Filter || cond.kind == Conditioning::Kind::Overdrive)
        return StabilityVerdict::NotGuaranteed;
    const double ms = slope_of(cond);
    double bound = 0.0;
    switch (topology) {
        case Topology::ConstOffTimePeak:
            bound = 0.5 * m1 + ms;
            break;
        case Topology::ConstOnTimeValley:
            bound = 0.5 * m2 + ms;
            break;
        case Topology::FixedFreqPeak:
            bound = 0.5 * (m1 - m2) + ms;
            break;
        case Topology::FixedFreqValley:
            bound = 0.5 * (m2 - m1) + ms;
            break;
    }
    return lambda_ub < bound ? StabilityVerdict::GuaranteedStable : StabilityVerdict::NotGuaranteed;
}

double linearized_pole(Topology topology, double m1, double m2, double sigma, double m_s) {
    const double m = search_slope_of(topology, m1, m2);
    const double mo = other_slope_of(topology, m1, m2);
    const double den = m + m_s + sigma;
    if (!(den > 0.0)) throw UnstableLinearization("m + m_s + sigma must be positive");
    if (fixed_frequency(topology)) return (m_s + sigma - mo) / den;
    return (m_s + sigma) / den;
}

PoleRange pole_range(Topology topology, double m1, double m2, double lambda_ub,
                     const Conditioning& cond) {
    if (!(m1 > 0.0) || !(m2 > 0.0)) throw PreconditionError("slopes must be positive");
    if (lambda_ub < 0.0) throw PreconditionError("lambda_ub must be non-negative");
    const double ms = slope_of(cond);
    const double m = search_slope_of(topology, m1, m2);
    if (!(m + ms - lambda_ub > 0.0))
        throw UnstableLinearization("m + m_s - lambda_ub must be positive");
    PoleRange pr;
    // The pole is increasing in the local interference slope.
    pr.a_min = linearized_pole(topology, m1, m2, -lambda_ub, ms);
    pr.a_max = linearized_pole(topology, m1, m2, lambda_ub, ms);
    pr.b = fixed_frequency(topology) ? -other_slope_of(topology, m1, m2) / m : 0.0;
    pr.beta = m / (m + ms);
    return pr;
}

double settling(const PoleRange& pr) {
    double n = 0.0;
    for (double a : {pr.a_min, pr.a_max}) {
        if (!(std::abs(a) < 1.0)) throw NotSettling("pole on or outside the unit circle");
        if (a == 0.0) continue;
        n = std::max(n, std::abs(4.0 / std::log(std::abs(a))));
    }
    return n;
}

double overshoot(const PoleRange& pr) {
    if (pr.b == 0.0) return std::max(0.0 - pr.a_min, 0.0) + 0.0;
    return std::max((pr.b - pr.a_min) / (1.0 - pr.b), 0.0) + 0.0;
}

TransientReport transient_report(const PoleRange& pr) {
    TransientReport r;
    r.pole_range = pr;
    r.stable_small_signal = std::abs(pr.a_min) < 1.0 && std::abs(pr.a_max) < 1.0;
    r.n_w = settling(pr);
    r.o_w = overshoot(pr);
    return r;
}

OptimalSlope optimal_slope(double lambda_hat) {
    if (lambda_hat < 0.0) throw PreconditionError("lambda_hat must be non-negative");
    OptimalSlope o;
    const double root = std::sqrt(0.25 + lambda_hat * lambda_hat);
    o.m_s_hat = root - 0.5;
    // Worst pole at the optimum equals a_max = 1 - 1/(1/2 + root + lambda_hat).
    const double a = 1.0 - 1.0 / (0.5 + root + lambda_hat);
    o.n_w = a == 0.0 ? 0.0 : std::abs(4.0 / std::log(std::abs(a)));
    return o;
}

NormalizedDesign normalize(const LoopConfig& cfg, const Conditioning& cond,
                           const SpectralBounds& spec) {
    cfg.validate();
    const double m = cfg.search_slope();
    const double ts = cfg.nominal_event_time();
    if (!(ts > 0.0)) throw PreconditionError("steady-state sensed duration must be positive");
    NormalizedDesign n;
    n.a_hat = spec.a_ub / (m * ts);
    n.omega_hat = spec.omega_l * ts / (2.0 * kPi);
    if (cond.kind == Conditioning::Kind::Filter) n.tau_hat = cond.tau / ts;
    if (cond.kind == Conditioning::Kind::Overdrive)
        n.tau_hat = 2.0 * cond.overdrive_area() / (m * ts * ts);
    n.t_on_min_hat = cfg.t_on_min / ts;
    n.m_s_hat = slope_of(cond) / m;
    n.lambda_hat = spec.lambda_ub / m;
    n.i_max_hat = cfg.i_max / (m * ts);
    double t_min = 0.0;
    switch (cfg.topology) {
        case Topology::ConstOffTimePeak:
            t_min = cfg.t_on_min + cfg.t_off;
            break;
        case Topology::ConstOnTimeValley:
            t_min = cfg.t_on_min + cfg.t_on;
            break;
        default:
            t_min = cfg.t_period;
            break;
    }
    n.t_min_hat = t_min / ts;
    return n;
}

PhysicalDesign denormalize(const NormalizedDesign& n, Conditioning::Kind kind, double m1,
                           double t_on) {
    PhysicalDesign p;
    p.a_ub = n.a_hat * m1 * t_on;
    p.omega_l = n.omega_hat * 2.0 * kPi / t_on;
    if (kind == Conditioning::Kind::Filter) p.tau = n.tau_hat * t_on;
    if (kind == Conditioning::Kind::Overdrive) p.tau = n.tau_hat * m1 * t_on * t_on / 2.0;
    p.t_on_min = n.t_on_min_hat * t_on;
    p.m_s = n.m_s_hat * m1;
    p.lambda_ub = n.lambda_hat * m1;
    p.i_max = n.i_max_hat * m1 * t_on;
    p.t_min = n.t_min_hat * t_on;
    return p;
}

namespace {

struct FilterTerms {
    double d = 0.0;
    double b = 0.0;
    double atten = 1.0;  // 1 / sqrt(1 + (omega tau)^2)
};

FilterTerms filter_terms(const NormalizedDesign& n, FrequencyConvention conv) {
    if (!(n.tau_hat > 0.0)) throw PreconditionError("tau_hat must be positive");
    FilterTerms f;
    const double tau = n.tau_hat;
    const double t_min = n.t_min_hat > 0.0 ? n.t_min_hat : n.t_on_min_hat + 1.0;
    f.d = std::exp(-n.t_on_min_hat / tau);
    f.b = std::exp(-t_min / tau);
    const double x = (conv == FrequencyConvention::AsPrinted ? 2.0 * kPi : 1.0) * n.omega_hat * tau;
    f.atten = 1.0 / std::sqrt(1.0 + x * x);
    return f;
}

}  // namespace

bool filter_continuity_ok(const NormalizedDesign& n, FrequencyConvention conv) {
    const FilterTerms f = filter_terms(n, conv);
    const double tau = n.tau_hat;
    if (n.a_hat == 0.0 && n.i_max_hat == 0.0) return true;
    if (!(f.d < 1.0)) return false;
    const double lhs = n.a_hat / ((1.0 - f.d) * tau) * (1.0 + f.d * f.atten) +
                       f.b * n.i_max_hat / ((1.0 - f.d) * tau);
    return lhs < 1.0;
}

bool filter_stability_ok(const NormalizedDesign& n, FrequencyConvention conv) {
    const FilterTerms f = filter_terms(n, conv);
    const double tau = n.tau_hat;
    const double d = f.d;
    if (!(d < 1.0)) return false;
    const double omd = 1.0 - d;
    const double k0 = d * (n.t_on_min_hat + tau * d - tau) / (omd * omd);
    const double k1 = 1.0 / omd;
    const double k2 = 1.0 + (1.0 + d) * d / (omd * omd);
    const double k3 = (d - f.b) / (omd * omd);
    const double lhs1 = k0 / tau + k1 * n.a_hat / tau + k2 * n.a_hat * f.atten / tau;
    const double lhs2 = k3 * n.i_max_hat / tau + n.a_hat / tau + n.a_hat * f.atten / tau;
    return lhs1 < 0.5 && lhs2 < 0.5;
}

FilterClosedLoop filter_closed_loop(Topology topology, const FilterParams& p, double i_c_op,
                                    double i_ramp_start, const Signal& w) {
    if (!(p.tau > 0.0)) throw PreconditionError("filter time constant must be positive");
    if (!(p.t_sensed > 0.0) || p.t_gap < 0.0)
        throw PreconditionError("operating-point durations must be positive");
    const bool peak = topology == Topology::ConstOffTimePeak || topology == Topology::FixedFreqPeak;
    const double m = search_slope_of(topology, p.m1, p.m2);
    const double mo = other_slope_of(topology, p.m1, p.m2);

    // Everything below is in search coordinates (currents and w negated for valley loops).
    const double offset = peak ? i_ramp_start : -i_ramp_start;
    const double command = peak ? i_c_op : -i_c_op;
    const Signal ws = peak ? w : w.negated();

    FilterClosedLoop r;
    r.d = std::exp(-p.t_sensed / p.tau);
    r.b = std::exp(-(p.t_sensed + p.t_gap) / p.tau);
    r.psi1 = psi1_of(ws, p.t_sensed, p.tau);
    r.psi2 = (r.d * offset - r.b * command) / p.tau;
    const double omd = 1.0 - r.d;
    const double big_p = m * omd + r.psi1 + r.psi2;
    if (big_p == 0.0 || m + (r.psi1 + r.psi2) / omd == 0.0)
        throw DegenerateDenominator("m + (psi1 + psi2)/(1 - d) vanishes");
    r.beta = m / big_p;
    if (!fixed_frequency(topology)) {
        r.a = 1.0 - m / (m + (r.psi1 + r.psi2) / omd);
        return r;
    }
    // The carried state depends on the previous event time, adding a delayed term
    // q = b*command/tau; the characteristic polynomial becomes quadratic.
    const double q = r.b * command / p.tau;
    const double c1 = q - big_p + omd * (m + mo);
    const double disc = c1 * c1 + 4.0 * big_p * q;
    if (disc >= 0.0) {
        const double s = std::sqrt(disc);
        const double z1 = (-c1 + s) / (2.0 * big_p);
        const double z2 = (-c1 - s) / (2.0 * big_p);
        r.a = std::abs(z1) >= std::abs(z2) ? z1 : z2;
    } else {
        r.a = std::sqrt(-q / big_p);  // modulus of the complex pair
    }
    return r;
}

bool comparator_stability_ok(double a_ub, double b_integral, double m1, double v_trig_tau) {
    if (a_ub < 0.0 || b_integral < 0.0 || v_trig_tau < 0.0 || !(m1 > 0.0))
        throw PreconditionError("comparator inputs must be non-negative with m1 > 0");
    return v_trig_tau >= 4.0 * a_ub * a_ub / m1 + b_integral;
}

double comparator_max_delay(double a_ub, double b_integral, double m1, double v_trig_tau) {
    if (a_ub < 0.0 || b_integral < 0.0 || v_trig_tau < 0.0 || !(m1 > 0.0))
        throw PreconditionError("comparator inputs must be non-negative with m1 > 0");
    const double r = a_ub / m1;
    return r + std::sqrt(r * r + 2.0 / m1 * (v_trig_tau + b_integral));
}

PoleRange comparator_psi_pole_range(double a_hat, double omega_hat, double tau_hat, double m1) {
    if (!(m1 > 0.0)) throw PreconditionError("m1 must be positive");
    PoleRange pr;
    if (a_hat == 0.0) return pr;
    if (!(omega_hat > 0.0)) throw PreconditionError("omega_hat must be positive");
    const double radicand = 1.0 + (tau_hat - a_hat / omega_hat) / (a_hat * a_hat);
    if (radicand < 0.0) throw ComplexRadicand("1 + (tau_hat - a_hat/omega_hat)/a_hat^2 < 0");
    const double root = std::sqrt(radicand);
    if (!(root > 1.0)) throw DegenerateDenominator("psi_max denominator is not positive");
    const double psi_min = -2.0 * m1 / (1.0 + root);
    const double psi_max = 2.0 * m1 / (root - 1.0);
    pr.a_min = psi_min / (m1 + psi_min);
    pr.a_max = psi_max / (m1 + psi_max);
    pr.b = 0.0;
    pr.beta = 1.0;
    return pr;
}

double comparator_continuity_threshold(const Signal& w, double m1) {
    if (!(m1 > 0.0)) throw PreconditionError("m1 must be positive");
    if (w.is_zero()) return 0.0;
    const double a = w.peak_bound();
    const double period = w.period();
    const double w_fast = std::max(w.max_omega(), 2.0 * kPi / period);
    const double pitch = std::min(2.0 * kPi / w_fast / 256.0, 2.0 * a / m1 / 1024.0);

    const int n_phase = 64;
    const int n_offset = 33;
    double best = 0.0, best_s = 0.0, best_c = 0.0;
    for (int i = 0; i < n_phase; ++i) {
        const double s = period * i / n_phase;
        for (int j = 0; j < n_offset; ++j) {
            const double c = -a + 2.0 * a * j / (n_offset - 1);
            const double v = saturating_peak_before_last_root(w, m1, a, s, c, pitch);
            if (v > best) {
                best = v;
                best_s = s;
                best_c = c;
            }
        }
    }
    if (best == 0.0) return 0.0;
    // Local pattern search around the best grid cell.
    double ds = period / n_phase;
    double dc = 2.0 * a / (n_offset - 1);
    for (int it = 0; it < 30; ++it) {
        bool improved = false;
        for (auto [ks, kc] : {std::pair{1, 0}, std::pair{-1, 0}, std::pair{0, 1}, std::pair{0, -1}}) {
            const double s = best_s + ks * ds;
            const double c = std::clamp(best_c + kc * dc, -a, a);
            const double v = saturating_peak_before_last_root(w, m1, a, s, c, pitch);
            if (v > best) {
                best = v;
                best_s = s;
                best_c = c;
                improved = true;
            }
        }
        if (!improved) {
            ds *= 0.5;
            dc *= 0.5;
        }
    }
    return best;
}

void to_json(nlohmann::json& j, const PoleRange& p) {
    j = nlohmann::json{{"a_min", p.a_min}, {"a_max", p.a_max}, {"b", p.b}, {"beta", p.beta}};
}

void to_json(nlohmann::json& j, const TransientReport& r) {
    j = nlohmann::json{{"pole_range", r.pole_range},
                       {"n_w", r.n_w},
                       {"o_w", r.o_w},
                       {"stable_small_signal", r.stable_small_signal}};
}

void to_json(nlohmann::json& j, const NormalizedDesign& n) {
    j = nlohmann::json{{"a_hat", n.a_hat},
                       {"omega_hat", n.omega_hat},
                       {"tau_hat", n.tau_hat},
                       {"t_on_min_hat", n.t_on_min_hat},
                       {"m_s_hat", n.m_s_hat},
                       {"lambda_hat", n.lambda_hat},
                       {"i_max_hat", n.i_max_hat},
                       {"t_min_hat", n.t_min_hat}};
}

}  // namespace cmc
