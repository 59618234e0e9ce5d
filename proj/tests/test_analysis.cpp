#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"

#include "cmc/analysis.hpp"
#include "cmc/errors.hpp"
#include "cmc/scenario.hpp"
#include "cmc/sweep.hpp"

using namespace cmc;
using std::numbers::pi;

TEST_CASE("large-signal verdicts") {
    CHECK(large_signal_verdict(Topology::ConstOffTimePeak, 1.0, 1.0, 0.4, Conditioning::none()) ==
          StabilityVerdict::GuaranteedStable);
    CHECK(large_signal_verdict(Topology::FixedFreqPeak, 1.0, 1.5, 0.0, Conditioning::none()) ==
          StabilityVerdict::NotGuaranteed);
    CHECK(large_signal_verdict(Topology::ConstOffTimePeak, 1.0, 1.0, 0.6,
                               Conditioning::slope(0.2)) == StabilityVerdict::GuaranteedStable);
    CHECK(large_signal_verdict(Topology::ConstOffTimePeak, 1.0, 1.0, 0.6, Conditioning::none()) ==
          StabilityVerdict::NotGuaranteed);
}

TEST_CASE("guaranteed-stable loops never diverge under random admissible interference") {
    const LoopConfig cfg = normalized_loop(Topology::ConstOffTimePeak, 0.0, 20.0);
    const double lambda_ub = 0.45;
    REQUIRE(large_signal_verdict(cfg.topology, 1.0, 1.0, lambda_ub, Conditioning::none()) ==
            StabilityVerdict::GuaranteedStable);
    SpectralBounds spec;
    spec.a_ub = 0.2;
    spec.omega_l = 0.5;
    spec.omega_ub = 6.0;
    spec.lambda_ub = lambda_ub;
    for (std::uint64_t s = 0; s < 200; ++s) {
        const Signal w = sample_random(spec, s);
        const Trace tr = simulate(cfg, {1.5}, Conditioning::none(), w, 300, s);
        CHECK(tr.verdict.kind != Verdict::Kind::Divergent);
    }
}

TEST_CASE("pole ranges") {
    const PoleRange dead = pole_range(Topology::ConstOffTimePeak, 1.0, 1.0, 0.0, Conditioning::none());
    CHECK(dead.a_min == 0.0);
    CHECK(dead.a_max == 0.0);
    CHECK(dead.b == 0.0);
    // a = sigma/(1 + sigma) for sigma in [-1/3, 1/3].
    const PoleRange third =
        pole_range(Topology::ConstOffTimePeak, 3.0, 1.0, 1.0, Conditioning::none());
    CHECK(third.a_min == doctest::Approx(-0.5));
    CHECK(third.a_max == doctest::Approx(0.25));
    const PoleRange ff = pole_range(Topology::FixedFreqPeak, 2.0, 1.5, 0.0, Conditioning::none());
    CHECK(ff.a_min == doctest::Approx(-0.75));
    CHECK(ff.a_max == doctest::Approx(-0.75));
    CHECK(ff.b == doctest::Approx(-0.75));
    CHECK_THROWS_AS(pole_range(Topology::ConstOffTimePeak, 1.0, 1.0, 1.0, Conditioning::none()),
                    UnstableLinearization);
}

TEST_CASE("pole range contains the linearized pole at measured interference slopes") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double lambda_ub = 0.4;
    const PoleRange pr =
        pole_range(Topology::ConstOffTimePeak, 1.0, 1.0, lambda_ub, Conditioning::none());
    for (int k = 0; k < 100; ++k) {
        const double omega = 0.5 + 5.0 * u(rng);
        const Signal w = Signal::sinusoid(lambda_ub / omega * u(rng), omega, 2.0 * pi * u(rng));
        const double t = 0.5 + u(rng);
        const double sigma = (w(t + 1e-7) - w(t - 1e-7)) / 2e-7;
        const double a = linearized_pole(Topology::ConstOffTimePeak, 1.0, 1.0, sigma, 0.0);
        CHECK(a == doctest::Approx(sigma / (1.0 + sigma)).epsilon(1e-12));
        CHECK(a >= pr.a_min - 1e-9);
        CHECK(a <= pr.a_max + 1e-9);
    }
}

TEST_CASE("worst-case settling") {
    PoleRange pr;
    CHECK(settling(pr) == 0.0);
    pr.a_min = 0.0;
    pr.a_max = std::exp(-1.0);
    CHECK(settling(pr) == doctest::Approx(4.0));
    pr.a_min = -0.5;
    pr.a_max = 0.25;
    CHECK(settling(pr) == doctest::Approx(4.0 / std::log(2.0)));
    pr.a_max = 1.0;
    CHECK_THROWS_AS(settling(pr), NotSettling);
}

TEST_CASE("worst-case overshoot") {
    PoleRange pr;
    pr.a_min = 0.1;
    CHECK(overshoot(pr) == 0.0);
    pr.a_min = -0.25;
    CHECK(overshoot(pr) == doctest::Approx(0.25));
    pr.a_min = -0.5;
    pr.b = -0.4;
    CHECK(overshoot(pr) == doctest::Approx(0.1 / 1.4));
}

TEST_CASE("optimal compensation slope") {
    CHECK(optimal_slope(0.0).m_s_hat == 0.0);
    CHECK(optimal_slope(0.0).n_w == 0.0);
    CHECK(optimal_slope(1.0).m_s_hat == doctest::Approx(std::sqrt(1.25) - 0.5).epsilon(1e-12));
    for (double lam : {0.3, 1.0, 2.0}) {
        // Sweep oracle over the compensation slope.
        double best = 1e300, best_ms = 0.0;
        const double ms_lo = std::max(0.0, lam - 1.0) + 1e-9;
        for (int k = 0; k <= 200000; ++k) {
            const double ms = ms_lo + 3.0 * k / 200000.0;
            const PoleRange pr =
                pole_range(Topology::ConstOffTimePeak, 1.0, 1.0, lam, Conditioning::slope(ms));
            if (std::max(std::abs(pr.a_min), std::abs(pr.a_max)) >= 1.0) continue;
            const double n = settling(pr);
            if (n < best) {
                best = n;
                best_ms = ms;
            }
        }
        const OptimalSlope o = optimal_slope(lam);
        CHECK(o.m_s_hat == doctest::Approx(best_ms).epsilon(1e-3));
        CHECK(o.n_w <= best * (1.0 + 1e-12));
        CHECK(o.n_w == doctest::Approx(best).epsilon(1e-4));
        const PoleRange at =
            pole_range(Topology::ConstOffTimePeak, 1.0, 1.0, lam, Conditioning::slope(o.m_s_hat));
        CHECK(at.a_min == doctest::Approx(-at.a_max).epsilon(1e-9));
    }
    CHECK(optimal_slope(1e-6).n_w < 0.3);
}

TEST_CASE("filter continuity predicate") {
    NormalizedDesign n;
    n.omega_hat = 1.0;
    for (double tau : {0.01, 0.1, 1.0, 10.0}) {
        n.tau_hat = tau;
        CHECK(filter_continuity_ok(n));
    }
    n.a_hat = 0.05;
    n.i_max_hat = 2.0;
    n.tau_hat = 1e-3;
    CHECK_FALSE(filter_continuity_ok(n));
    for (double tau : {0.05, 0.2, 0.8, 3.0}) {
        n.tau_hat = tau;
        bool prev = true;
        for (double a : {0.0, 0.01, 0.05, 0.1, 0.3, 1.0}) {
            n.a_hat = a;
            const bool ok = filter_continuity_ok(n);
            CHECK(!(ok && !prev));
            prev = ok;
        }
    }
}

TEST_CASE("filter stability predicate") {
    NormalizedDesign n;
    n.omega_hat = 2.0;
    n.t_on_min_hat = 0.5;
    for (double tau : {2.0, 50.0, 500.0}) {
        n.tau_hat = tau;
        CHECK(filter_stability_ok(n));
    }
    // Without a minimum on-time the carried state never decays within the blanking.
    n.t_on_min_hat = 0.0;
    CHECK_FALSE(filter_stability_ok(n));
    n.a_hat = 5.0;
    n.i_max_hat = 2.0;
    for (double tau = 0.02; tau < 20.0; tau *= 1.3) {
        n.tau_hat = tau;
        CHECK_FALSE(filter_stability_ok(n));
    }
    n.t_on_min_hat = 0.5;
    for (double tau : {0.05, 0.2, 0.5}) {
        n.tau_hat = tau;
        bool prev = true;
        for (double a : {0.0, 0.005, 0.01, 0.03, 0.1}) {
            n.a_hat = a;
            const bool ok = filter_stability_ok(n);
            CHECK(!(ok && !prev));
            prev = ok;
        }
    }
}

TEST_CASE("filter closed loop") {
    const FilterParams p{1.0, 1.0, 1.0, 1.0, 0.3};
    const FilterClosedLoop z = filter_closed_loop(Topology::ConstOffTimePeak, p, 0.0, 0.0,
                                                  Signal::zero());
    CHECK(z.psi1 == 0.0);
    CHECK(z.psi2 == 0.0);
    CHECK(z.a == doctest::Approx(0.0).scale(1e-15));
    for (double ic : {1.0, 1.5, 3.0})
        for (double ripple : {0.2, 1.0}) {
            const FilterClosedLoop v = filter_closed_loop(Topology::ConstOnTimeValley, p, ic,
                                                          ic + ripple, Signal::zero());
            CHECK(v.psi2 < 0.0);
        }
}

TEST_CASE("filter closed-loop pole matches a perturb-and-simulate slope") {
    const double tau = 0.2;
    const LoopConfig cfg = normalized_loop(Topology::ConstOffTimePeak);
    const Conditioning cond = Conditioning::filter(tau);
    for (int k = 0; k < 8; ++k) {
        const Signal w = Signal::sinusoid(0.03, 4.0 * pi, k * 2.0 * pi / 8.0);
        SimOptions so;
        so.mode = InterferenceMode::CycleSynchronous;
        so.tol_rel = 1e-10;
        const Trace tr = simulate(cfg, {1.5}, cond, w, 4000, 0, initial_state(cfg, 1.5), so);
        REQUIRE(tr.verdict.kind == Verdict::Kind::Converged);
        const LoopState s = tr.states.back();
        LoopState p = s;
        const double d = 1e-6;
        p.i_extremum += d;
        const LoopState n1 = step_cycle(cfg, p, 1.5, cond, w, InterferenceMode::CycleSynchronous);
        const LoopState n2 = step_cycle(cfg, n1, 1.5, cond, w, InterferenceMode::CycleSynchronous);
        const double a_sim = (n2.i_extremum - s.i_extremum) / (n1.i_extremum - s.i_extremum);
        const FilterParams fp{1.0, 1.0, s.t_event, 1.0, tau};
        const FilterClosedLoop cl =
            filter_closed_loop(Topology::ConstOffTimePeak, fp, 1.5, s.i_extremum - 1.0, w);
        CHECK(cl.a == doctest::Approx(a_sim).epsilon(0.05).scale(0.05));
    }
}

TEST_CASE("comparator stability and delay bounds") {
    CHECK(comparator_stability_ok(0.0, 0.0, 1.0, 0.0));
    CHECK(comparator_stability_ok(0.0, 0.0, 1.0, 3.0));
    CHECK(comparator_stability_ok(1.0, 0.5, 1.0, 4.5));
    CHECK_FALSE(comparator_stability_ok(1.0, 0.5, 1.0, std::nextafter(4.5, 0.0)));
    CHECK(comparator_max_delay(0.0, 0.0, 2.0, 0.3) == doctest::Approx(std::sqrt(2.0 * 0.3 / 2.0)));
    CHECK(comparator_max_delay(1.0, 0.0, 1.0, 4.0) == doctest::Approx(4.0));
}

TEST_CASE("comparator pole range") {
    const PoleRange tiny = comparator_psi_pole_range(1e-9, 2.0, 0.6, 1.0);
    CHECK(std::abs(tiny.a_min) < 1e-6);
    CHECK(std::abs(tiny.a_max) < 1e-6);
    const PoleRange pr = comparator_psi_pole_range(0.02, 2.0, 0.6, 1.0);
    // Oracle: direct evaluation of the psi bounds.
    const double root = std::sqrt(1.0 + (0.6 - 0.01) / (0.02 * 0.02));
    const double psi_min = -2.0 / (1.0 + root);
    const double psi_max = 2.0 / (root - 1.0);
    CHECK(pr.a_min == doctest::Approx(psi_min / (1.0 + psi_min)));
    CHECK(pr.a_max == doctest::Approx(psi_max / (1.0 + psi_max)));
    CHECK(std::abs(pr.a_min) < 1.0);
    CHECK(std::abs(pr.a_max) < 1.0);
    CHECK_THROWS_AS(comparator_psi_pole_range(0.5, 0.5, 0.0, 1.0), ComplexRadicand);
}

TEST_CASE("comparator continuity threshold") {
    CHECK(comparator_continuity_threshold(Signal::zero(), 1.0) == 0.0);
    const Signal slow = Signal::sinusoid(0.05, 10.0, 0.2);
    REQUIRE(monotone_sensor_check(slow, 1.0, 5.0));
    CHECK(comparator_continuity_threshold(slow, 1.0) == 0.0);
    const Signal fast = Signal::sinusoid(0.2, 10.0, 0.2);
    const double k = comparator_continuity_threshold(fast, 1.0);
    CHECK(k > 0.0);

    // Bracket the threshold with fixed-ramp maps over a full interference period of phases.
    const LoopConfig cfg = normalized_loop(Topology::ConstOffTimePeak, 0.0, 10.0);
    std::vector<double> ic;
    for (int j = 0; j < 1201; ++j) ic.push_back(0.7 + 1.2 * j / 1200.0);
    StaticMapOptions opt;
    opt.mode = StaticMapMode::FixedRamp;
    const StaticMap above =
        static_map(cfg, ic, Conditioning::overdrive(1.5 * k, 1.0), fast, opt);
    CHECK(discontinuity_measure(above) == 0.0);
}

TEST_CASE("normalization of the buck prototype") {
    const Scenario sc = load_preset("buck-prototype");
    const NormalizedDesign n = normalize(sc.loop, sc.conditioning, sc.spectral);
    // Constant on-time loops sense the falling ramp: normalized by m2 and T_off.
    const double t_off = sc.loop.t_on * sc.loop.m1 / sc.loop.m2;
    CHECK(t_off == doctest::Approx(500e-9).epsilon(1e-12));
    CHECK(n.omega_hat == doctest::Approx(5e6 * t_off).epsilon(1e-12));
    CHECK(sc.spectral.omega_l * sc.loop.t_on / (2.0 * std::numbers::pi) ==
          doctest::Approx(0.5).epsilon(1e-12));
    SpectralBounds s;
    s.a_ub = sc.loop.m2 * t_off;
    CHECK(normalize(sc.loop, sc.conditioning, s).a_hat == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("normalize and denormalize round trip") {
    LoopConfig cfg;
    cfg.topology = Topology::ConstOffTimePeak;
    cfg.m1 = 3.0e6;
    cfg.m2 = 1.0e6;
    cfg.t_off = 2e-6;
    cfg.t_on_min = 1e-7;
    cfg.i_max = 30.0;
    SpectralBounds spec;
    spec.a_ub = 0.4;
    spec.lambda_ub = 1.2e6;
    spec.omega_l = 2.0 * pi * 3e5;
    for (const Conditioning& c : {Conditioning::slope(5e5), Conditioning::filter(2e-7),
                                  Conditioning::overdrive(1e-8, 0.02, 0.0, 0.01)}) {
        const NormalizedDesign n = normalize(cfg, c, spec);
        const double ts = cfg.nominal_event_time();
        const PhysicalDesign p = denormalize(n, c.kind, cfg.search_slope(), ts);
        CHECK(p.a_ub == doctest::Approx(spec.a_ub).epsilon(1e-12));
        CHECK(p.omega_l == doctest::Approx(spec.omega_l).epsilon(1e-12));
        CHECK(p.lambda_ub == doctest::Approx(spec.lambda_ub).epsilon(1e-12));
        CHECK(p.i_max == doctest::Approx(cfg.i_max).epsilon(1e-12));
        CHECK(p.t_on_min == doctest::Approx(cfg.t_on_min).epsilon(1e-12));
        if (c.kind == Conditioning::Kind::SlopeComp) CHECK(p.m_s == doctest::Approx(c.m_s).epsilon(1e-12));
        if (c.kind == Conditioning::Kind::Filter) CHECK(p.tau == doctest::Approx(c.tau).epsilon(1e-12));
        if (c.kind == Conditioning::Kind::Overdrive)
            CHECK(p.tau == doctest::Approx(c.overdrive_area()).epsilon(1e-12));
    }
}
