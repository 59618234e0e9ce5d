#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"

#include "cmc/conditioning.hpp"
#include "cmc/errors.hpp"
#include "cmc/loop.hpp"

using namespace cmc;
using std::numbers::pi;

TEST_CASE("slope-compensated command") {
    CHECK(slope_command(1.3, 0.0, 0.7) == 1.3);
    CHECK(slope_command(1.0, 2.0, 0.25) == doctest::Approx(0.5));
}

TEST_CASE("slope compensation triggers like a steeper ramp against a constant command") {
    const Signal w = Signal::sinusoid(0.05, 9.0, 0.4);
    for (double ms : {0.1, 0.3, 0.8}) {
        const double a = first_crossing(0.2, 1.0, 1.4, w, Detector::ideal(ms), 10.0);
        const double b = first_crossing(0.2, 1.0 + ms, 1.4, w, Detector::ideal(), 10.0);
        CHECK(a == doctest::Approx(b).epsilon(1e-10));
    }
}

TEST_CASE("filter output against closed forms") {
    const double tau = 0.2;
    const RampSegment ramp{0.0, 3.0};
    CHECK(filter_output(0.0, ramp, Signal::zero(), tau, 0.0) == 0.0);
    const double t = 40.0 * tau;
    CHECK(filter_output(0.0, ramp, Signal::zero(), tau, t) ==
          doctest::Approx(3.0 * (t - tau)).epsilon(1e-12));
    // Zero-input decay of the carried state plus the unit-step response.
    const RampSegment step{1.0, 0.0};
    const double s = 0.15;
    CHECK(filter_output(2.0, step, Signal::zero(), tau, s) ==
          doctest::Approx(2.0 * std::exp(-s / tau) + (1.0 - std::exp(-s / tau))).epsilon(1e-12));
}

TEST_CASE("filtered sinusoid settles to the first-order attenuation") {
    const double tau = 0.05;
    const double omega = 30.0;
    const Signal w = Signal::sinusoid(1.0, omega);
    const RampSegment flat{0.0, 0.0};
    double peak = 0.0;
    const double t0 = 60.0 * tau;
    const double period = 2.0 * pi / omega;
    for (int k = 0; k < 20000; ++k)
        peak = std::max(peak, std::abs(filter_output(0.0, flat, w, tau, t0 + period * k / 20000.0)));
    CHECK(peak == doctest::Approx(1.0 / std::sqrt(1.0 + omega * omega * tau * tau)).epsilon(1e-6));
}

TEST_CASE("filter attenuation grows with the time constant") {
    const Signal w = Signal::sinusoid(1.0, 12.0);
    const RampSegment flat{0.0, 0.0};
    double prev = 2.0;
    for (double tau : {0.01, 0.03, 0.1, 0.3}) {
        double peak = 0.0;
        const double t0 = 40.0 * tau + 2.0;
        for (int k = 0; k < 4000; ++k)
            peak = std::max(peak, std::abs(filter_output(0.0, flat, w, tau, t0 + k * 1e-4 * 2.0 * pi / 1.2)));
        CHECK(peak < prev);
        prev = peak;
    }
}

TEST_CASE("overdrive delay on a clean ramp is the triangle-area delay") {
    const double m1 = 2.0;
    const double ic = 1.0;
    const Conditioning comp = Conditioning::overdrive(0.01, 0.5, 3e-3);
    const OverdriveEvent ev =
        overdrive_trigger_detail({0.0, m1}, ic, Signal::zero(), comp, 10.0);
    const double t0 = ic / m1;
    CHECK(ev.t_fi == doctest::Approx(t0).epsilon(1e-12));
    CHECK(ev.t_trigger - t0 == doctest::Approx(std::sqrt(2.0 * 0.5 * 0.01 / m1)).epsilon(1e-10));
    CHECK(ev.t_event == doctest::Approx(ev.t_trigger + 3e-3).epsilon(1e-12));
}

TEST_CASE("a vanishing integrator threshold recovers the ideal crossing") {
    const Signal w = Signal::sinusoid(0.05, 3.0, 0.2);
    const double ideal = first_crossing(0.1, 1.0, 1.2, w, Detector::ideal(), 10.0);
    const double od = overdrive_trigger({0.1, 1.0}, 1.2, w, Conditioning::overdrive(1e-12, 1e-6),
                                        10.0);
    CHECK(od == doctest::Approx(ideal).epsilon(1e-5));
}

TEST_CASE("overdrive trigger lies between the envelope triggers") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double a_ub = 0.2;
    const Conditioning comp = Conditioning::overdrive(0.05, 1.0);
    const RampSegment ramp{0.0, 1.0};
    const RegionBoundaries rb = region_boundaries(ramp, 1.0, a_ub, comp);
    for (int k = 0; k < 200; ++k) {
        const double omega = 1.0 + 20.0 * u(rng);
        const Signal w = k % 2 ? Signal::sinusoid(a_ub * u(rng), omega, 2.0 * pi * u(rng))
                               : Signal::trapezoid(a_ub * u(rng), omega, a_ub * omega * 4.0,
                                                   2.0 * pi * u(rng));
        const double t = overdrive_trigger(ramp, 1.0, w, comp, 10.0);
        CHECK(t >= rb.t_b_trigger - 1e-9);
        CHECK(t <= rb.t_d_trigger + 1e-9);
    }
}

TEST_CASE("overdrive trigger is non-decreasing in the integrator threshold") {
    const Signal w = Signal::trapezoid(0.15, 6.0, 3.0, 0.7);
    double prev = 0.0;
    for (double v : {0.001, 0.01, 0.03, 0.1, 0.3, 1.0}) {
        const double t = overdrive_trigger({0.0, 1.0}, 1.0, w, Conditioning::overdrive(0.1, v), 20.0);
        CHECK(t >= prev);
        prev = t;
    }
}

TEST_CASE("delay fit recovers exact model data") {
    const double p1 = 6.102e-12;
    const double p2 = 4.198e-9;
    std::vector<std::pair<double, double>> pts;
    for (double od : {2e-3, 5e-3, 10e-3, 20e-3, 50e-3, 100e-3}) pts.emplace_back(od, p1 / od + p2);
    const DelayFit fit = overdrive_delay_fit(pts);
    CHECK(std::abs(fit.p1 - p1) <= 1e-12 * p1);
    CHECK(std::abs(fit.p2 - p2) <= 1e-12 * p2);

    const double q1 = 113.3e-12;
    const double q2 = 24.75e-9;
    pts.clear();
    for (double od : {2e-3, 5e-3, 10e-3, 20e-3, 50e-3, 100e-3}) pts.emplace_back(od, q1 / od + q2);
    const DelayFit fit2 = overdrive_delay_fit(pts);
    CHECK(fit2.p1 == doctest::Approx(q1).epsilon(1e-12));
    CHECK(fit2.p2 == doctest::Approx(q2).epsilon(1e-12));
}

TEST_CASE("delay fit rejects degenerate data") {
    CHECK_THROWS_AS(overdrive_delay_fit({{0.01, 1e-9}, {0.01, 2e-9}, {0.01, 3e-9}}), SingularFit);
    CHECK_THROWS_AS(overdrive_delay_fit({{0.01, 1e-9}}), InsufficientData);
}
