#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "graphon_spde/experiments.hpp"
#include "graphon_spde/grid.hpp"

using namespace gspde;

namespace {

GridFunction random_grid(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    GridFunction g(n);
    for (auto& v : g.values()) v = u(rng);
    return g;
}

// ||f - u||_{L^2} by per-cell adaptive quadrature, independent of l2_distance.
template <class F>
double l2_error_by_quadrature(F f, const GridFunction& u) {
    double acc = 0.0;
    const Partition& p = u.partition();
    for (std::size_t i = 0; i < u.n(); ++i) {
        auto r = quadrature::integrate(
            [&](double x) {
                const double d = f(x) - u[i];
                return d * d;
            },
            p.left(i), p.right(i), {1e-14, 2000});
        acc += r.value;
    }
    return std::sqrt(acc);
}

}  // namespace

TEST(Partition, CellsAreLeftOpen) {
    Partition p(4);
    EXPECT_DOUBLE_EQ(p.h(), 0.25);
    EXPECT_EQ(p.cell_of(0.0), 0u);
    EXPECT_EQ(p.cell_of(0.25), 0u);
    EXPECT_EQ(p.cell_of(0.2500001), 1u);
    EXPECT_EQ(p.cell_of(1.0), 3u);
    EXPECT_THROW(Partition(0), InvalidArgument);
}

TEST(ProjectToGrid, PreservesConstants) {
    for (std::size_t n : {1u, 3u, 7u, 64u}) {
        auto g = project_to_grid([](double) { return 2.5; }, n);
        for (double v : g.values()) EXPECT_NEAR(v, 2.5, 1e-14);
    }
}

TEST(ProjectToGrid, LogisticCellAverages) {
    // Closed form: int_0^{1/2} x(1-x) dx = 1/8 - 1/24 = 1/12, so the mean is 1/6;
    // the right half follows by symmetry.
    const double expected = (1.0 / 8.0 - 1.0 / 24.0) / 0.5;
    auto g = project_to_grid([](double x) { return x * (1.0 - x); }, 2);
    EXPECT_NEAR(g[0], expected, 1e-14);
    EXPECT_NEAR(g[1], expected, 1e-14);
}

TEST(ProjectToGrid, AveragesBlocks) {
    GridFunction u(4, {1.0, 2.0, 3.0, 4.0});
    auto v = project_to_grid(u, 2);
    EXPECT_EQ(v, GridFunction(2, {1.5, 3.5}));
    EXPECT_EQ(project_to_grid(u, 4), u);
}

TEST(ProjectToGrid, Errors) {
    GridFunction u(6);
    EXPECT_THROW(project_to_grid(u, 4), IncommensurableGrids);
    EXPECT_THROW(project_to_grid(u, 0), InvalidArgument);
    EXPECT_THROW(project_to_grid([](double x) { return x; }, 0), InvalidArgument);
}

TEST(L2Distance, HandComputed) {
    GridFunction u(1, {0.0});
    GridFunction v(2, {1.0, -1.0});
    EXPECT_DOUBLE_EQ(l2_distance(u, v), 1.0);
    EXPECT_DOUBLE_EQ(l2_distance(v, v), 0.0);
    EXPECT_THROW(l2_distance(GridFunction(3), GridFunction(4)), IncommensurableGrids);
}

TEST(L2Distance, MatchesFineRiemannSum) {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        auto u = random_grid(4, rng);
        auto v = random_grid(8, rng);
        const std::size_t N = 10000;
        double acc = 0.0;
        for (std::size_t k = 0; k < N; ++k) {
            const double x = (static_cast<double>(k) + 0.5) / N;
            const double d = u(x) - v(x);
            acc += d * d;
        }
        EXPECT_NEAR(l2_distance(u, v), std::sqrt(acc / N), 1e-12);
    }
}

TEST(GridProperties, ProjectionIsAContraction) {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t m = std::size_t{1} << (1 + rep % 7);
        auto u = random_grid(m, rng);
        const std::size_t n = m >> (1 + rep % 2);
        if (n == 0) continue;
        EXPECT_LE(l2_norm(project_to_grid(u, n)), l2_norm(u) * (1 + 1e-15));
    }
}

TEST(GridProperties, NestedProjectionsCompose) {
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 50; ++rep) {
        auto u = random_grid(8, rng);
        auto two_step = project_to_grid(project_to_grid(u, 4), 2);
        auto direct = project_to_grid(u, 2);
        for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(two_step[i], direct[i], 1e-15);
    }
    // Dyadic data: both routes are exact.
    GridFunction ints(8, {1, 2, 3, 4, 5, 6, 7, 8});
    EXPECT_EQ(project_to_grid(project_to_grid(ints, 4), 2), project_to_grid(ints, 2));
}

TEST(GridProperties, ProjectionErrorRates) {
    // Indicator of [0, 1/3] lies in Lip(1/2, L^2); a smooth function in Lip(1, L^2).
    auto indicator = [](double x) { return x <= 1.0 / 3.0 ? 1.0 : 0.0; };
    auto smooth = [](double x) { return std::sin(2.0 * std::numbers::pi * x) + x * x; };
    std::vector<std::pair<double, double>> rough_pts, smooth_pts;
    for (std::size_t n = 8; n <= 512; n *= 2) {
        rough_pts.emplace_back(n, l2_error_by_quadrature(indicator, project_to_grid(indicator, n)));
        smooth_pts.emplace_back(n, l2_error_by_quadrature(smooth, project_to_grid(smooth, n)));
    }
    EXPECT_NEAR(fit_rate(rough_pts).slope, -0.5, 0.15);
    EXPECT_NEAR(fit_rate(smooth_pts).slope, -1.0, 0.15);
}

TEST(Modulus, LipschitzBound) {
    // |d/dx sin(3x)| <= 3.
    auto f = [](double x) { return std::sin(3.0 * x); };
    for (double delta : {0.01, 0.05, 0.2}) {
        auto m = modulus_of_continuity(f, 2.0, delta, 400);
        EXPECT_LE(m.value, 3.0 * delta + 1e-9);
        EXPECT_GT(m.value, 0.0);
    }
}

TEST(Modulus, ShiftedIndicatorIsExact) {
    GridFunction indicator(2, {1.0, 0.0});
    for (double h : {1.0 / 16, 1.0 / 64, 0.1}) {
        auto m = modulus_of_continuity(indicator, 2.0, h, 64);
        EXPECT_NEAR(m.value, std::sqrt(h), 1e-12);
    }
}

TEST(Modulus, TrigonometricBound) {
    for (int k : {1, 3, 8}) {
        auto e = [k](double x) { return std::numbers::sqrt2 * std::sin(std::numbers::pi * k * x); };
        for (double delta : {1.0 / 16, 1.0 / 128}) {
            auto m = modulus_of_continuity(e, 2.0, delta, 256);
            EXPECT_LE(m.value, std::numbers::pi * k * delta + 1e-9);
        }
    }
}

TEST(Modulus, MonotoneInDelta) {
    auto f = [](double x) { return std::exp(x) * std::cos(5.0 * x); };
    double prev = 0.0;
    for (double delta = 0.01; delta < 0.3; delta *= 1.5) {
        auto m = modulus_of_continuity(f, 1.5, delta, 200);
        EXPECT_GE(m.value, prev);
        prev = m.value;
    }
}

TEST(Modulus, RejectsBadArguments) {
    auto f = [](double x) { return x; };
    EXPECT_THROW(modulus_of_continuity(f, 0.5, 0.1, 10), InvalidArgument);
    EXPECT_THROW(modulus_of_continuity(f, 2.0, 0.0, 10), InvalidArgument);
    EXPECT_THROW(modulus_of_continuity(GridFunction(4), 0.9, 0.1, 10), InvalidArgument);
}

TEST(GridCsv, RoundTripsBitExactly) {
    std::mt19937_64 rng(5);
    auto u = random_grid(17, rng);
    u[3] = 1.0 / 3.0;
    u[4] = -0.0;
    u[5] = 5e-324;
    std::stringstream ss;
    write_csv(ss, u);
    EXPECT_EQ(ss.str().substr(0, 4), "n,h\n");
    auto v = read_grid_csv(ss);
    ASSERT_EQ(v.n(), u.n());
    for (std::size_t i = 0; i < u.n(); ++i) EXPECT_EQ(std::bit_cast<std::uint64_t>(v[i]), std::bit_cast<std::uint64_t>(u[i]));
}
