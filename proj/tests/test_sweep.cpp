#include <cmath>
#include <vector>

#include "doctest.h"

#include "cmc/sweep.hpp"

using namespace cmc;

namespace {

bool same_grid(const DesignGrid& a, const DesignGrid& b) {
    if (a.cells.size() != b.cells.size()) return false;
    for (std::size_t k = 0; k < a.cells.size(); ++k)
        if (a.cells[k].stable_fraction != b.cells[k].stable_fraction ||
            a.cells[k].theorem_flag != b.cells[k].theorem_flag)
            return false;
    return true;
}

}  // namespace

TEST_CASE("Monte Carlo grid: zero row, subset property and determinism") {
    const GridSpec g = GridSpec::linear(0.0, 1.2, 4, 0.5, 4.0, 4);
    McOptions opt;
    opt.n_cycles = 300;
    const Conditioning cond = normalized_conditioning(DesignMethod::Slope, 0.2);
    const DesignGrid a = mc_stability_region(Topology::ConstOffTimePeak, cond, g, 8, 99, opt);
    for (std::size_t j = 0; j < g.omega_hat_axis.size(); ++j)
        CHECK(a.at(0, j).stable_fraction == 1.0);
    int theorem = 0;
    for (const GridCell& c : a.cells)
        if (c.theorem_flag) {
            ++theorem;
            CHECK(c.stable_fraction == 1.0);
        }
    CHECK(theorem > 0);
    opt.threads = 1;
    const DesignGrid b = mc_stability_region(Topology::ConstOffTimePeak, cond, g, 8, 99, opt);
    CHECK(same_grid(a, b));
}

TEST_CASE("slope design curve without interference") {
    const std::vector<double> axis = {0.0, 0.1, 0.2, 0.4, 0.8};
    const std::vector<DesignCurve> curves =
        design_diagram(DesignMethod::Slope, {0.0}, axis, Topology::ConstOffTimePeak);
    REQUIRE(curves.size() == 1);
    const DesignCurve& c = curves[0];
    CHECK(c.n_w_theory[0] == 0.0);
    for (std::size_t k = 1; k < axis.size(); ++k) CHECK(c.n_w_theory[k] > c.n_w_theory[k - 1]);
    const auto pts = tradeoff_points(c);
    REQUIRE(!pts.empty());
    CHECK(pts[0].first == doctest::Approx(0.0).scale(1e-9));
    CHECK(pts[0].second == doctest::Approx(0.0).scale(1e-9));

    const std::vector<DesignCurve> again =
        design_diagram(DesignMethod::Slope, {0.0}, axis, Topology::ConstOffTimePeak);
    CHECK(tradeoff_points(again[0]) == pts);
}

TEST_CASE("every method has a non-empty Pareto front at a small amplitude") {
    DiagramOptions opt;
    opt.phases = 8;
    opt.golden_iterations = 8;
    opt.frequencies = 2;
    const std::vector<std::pair<DesignMethod, std::vector<double>>> cases = {
        {DesignMethod::Slope, {0.0, 0.1, 0.3}},
        {DesignMethod::Filter, {0.1, 0.5, 1.5}},
        {DesignMethod::Comparator, {0.1, 0.4, 0.8}},
    };
    for (const auto& [method, axis] : cases) {
        const double level = method == DesignMethod::Slope ? 0.04 : 0.02;
        const auto curves = design_diagram(method, {level}, axis, Topology::ConstOffTimePeak, opt);
        const auto front = pareto_front(tradeoff_points(curves[0]));
        CHECK(!front.empty());
        for (const auto& p : front)
            for (const auto& q : tradeoff_points(curves[0]))
                CHECK_FALSE((q.first < p.first && q.second < p.second));
    }
}

TEST_CASE("pareto front filters dominated points") {
    const auto f = pareto_front({{0.1, 5.0}, {0.2, 3.0}, {0.3, 4.0}, {0.05, 9.0}});
    CHECK(f.size() == 3);
    for (const auto& p : f) CHECK_FALSE((p.first == 0.3 && p.second == 4.0));
}

TEST_CASE("derived seeds differ per index and are stable") {
    CHECK(derive_seed(5, 1) == derive_seed(5, 1));
    CHECK(derive_seed(5, 1) != derive_seed(5, 2));
    CHECK(derive_seed(5, 1) != derive_seed(6, 1));
}
