#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "graphon_spde/experiments.hpp"

using namespace gspde;

namespace {

double quad_sq_norm(const Mode& m, std::size_t n) {
    auto g = project_to_grid([&](double x) { return eigenfunction(m, x); }, n, {1e-12, 2000});
    const double l = l2_norm(g);
    return l * l;
}

Problem noise_only(QWienerSpec q) {
    Problem p;
    p.interaction = Interaction::zero();
    p.noise = std::move(q);
    return p;
}

ExperimentConfig small_vary_n(Problem p) {
    ExperimentConfig cfg;
    cfg.problem = std::move(p);
    cfg.mode = StudyMode::vary_n;
    cfg.n_list = {4, 8, 16};
    cfg.n_star = 64;
    cfg.dt = 0.05;
    cfg.trials = 24;
    cfg.seed = 17;
    return cfg;
}

}  // namespace

TEST(FitRate, ExactPowerLaw) {
    std::vector<std::pair<double, double>> pts;
    for (double x : {2.0, 4.0, 8.0, 16.0}) pts.emplace_back(x, 3.0 / x);
    auto f = fit_rate(pts);
    EXPECT_NEAR(f.slope, -1.0, 1e-14);
    EXPECT_NEAR(f.stderr_slope, 0.0, 1e-14);
    EXPECT_NEAR(std::exp(f.intercept), 3.0, 1e-13);
}

TEST(FitRate, PerturbedPowerLaw) {
    // |eps| <= 0.01 moves log y by at most 0.01; over x in [1, 1000] the
    // slope can shift by at most 0.02 / log(1000) * (a few) < 0.05.
    std::vector<std::pair<double, double>> pts;
    const double eps[] = {0.01, -0.01, 0.01, -0.01, 0.01, -0.01, 0.01};
    int k = 0;
    for (double x = 1.0; x <= 1000.0; x *= 3.0) pts.emplace_back(x, (1.0 / x) * (1.0 + eps[k++]));
    auto f = fit_rate(pts);
    EXPECT_GE(f.slope, -1.05);
    EXPECT_LE(f.slope, -0.95);
}

TEST(FitRate, Preconditions) {
    EXPECT_THROW(fit_rate({{1, 1}, {2, 2}}), InvalidArgument);
    EXPECT_THROW(fit_rate({{1, 1}, {2, 0}, {3, 1}}), InvalidArgument);
    EXPECT_THROW(fit_rate({{1, 1}, {1, 2}, {1, 3}}), InvalidArgument);
}

TEST(Summarize, Conventions) {
    auto one = summarize({8, 0.1}, {0.5}, 3);
    EXPECT_EQ(one.trials(), 1u);
    EXPECT_DOUBLE_EQ(one.mse, 0.25);
    EXPECT_EQ(one.std_error, 0.0);
    auto two = summarize({8, 0.1}, {1.0, 3.0}, 3);
    EXPECT_DOUBLE_EQ(two.mse, 5.0);
    // squared errors 1 and 9: unbiased std = sqrt(32).
    EXPECT_DOUBLE_EQ(two.std, std::sqrt(32.0));
    EXPECT_DOUBLE_EQ(two.std_error, 4.0);
}

TEST(Ensemble, SingleTrial) {
    auto cfg = small_vary_n(kuramoto_band_problem(2.0, 16));
    cfg.trials = 1;
    auto st = run_ensemble(cfg, {8, 0.05});
    EXPECT_EQ(st.errors.size(), 1u);
    EXPECT_EQ(st.std_error, 0.0);
    EXPECT_GT(st.mse, 0.0);
}

TEST(Ensemble, NoiseOnlyProjectionVariance) {
    // E||P_n W(T) - P_{n*} W(T)||^2 = T sum_k lambda_k (||P_{n*} e_k||^2 - ||P_n e_k||^2).
    auto spec = QWienerSpec::periodic_fourier(2.0, 32);
    auto cfg = small_vary_n(noise_only(spec));
    cfg.problem.horizon = 0.5;
    cfg.problem.initial = InitialCondition::constant(0.3);  // no deterministic projection error
    cfg.dt = 0.1;
    cfg.trials = 2000;
    for (std::size_t n : {4u, 16u}) {
        double expected = 0.0;
        for (const auto& m : spec.modes())
            expected += m.lambda * cfg.problem.horizon * (quad_sq_norm(m, 64) - quad_sq_norm(m, n));
        auto st = run_ensemble(cfg, {n, 0.1});
        EXPECT_LT(std::abs(st.mse - expected), 4.0 * st.std_error) << "n=" << n;
    }
}

TEST(Ensemble, TrialFailureCarriesSeed) {
    auto p = kuramoto_band_problem(2.0, 16, 0.25, 0.5);
    p.drift = Drift::custom([](double t, double u) { return t > 0.2 ? std::nan("") : u; }, 1.0, 0.0, 1.0);
    auto cfg = small_vary_n(p);
    cfg.seed = 40;
    cfg.trials = 3;
    try {
        run_ensemble(cfg, {8, 0.05});
        FAIL() << "expected TrialError";
    } catch (const TrialError& e) {
        EXPECT_EQ(e.trial(), 0u);
        EXPECT_EQ(e.seed(), 40u);
        EXPECT_NE(std::string(e.what()).find("seed 40"), std::string::npos);
    }
}

TEST(Study, ZeroDynamicsGiveZeroErrors) {
    Problem p = noise_only(QWienerSpec::zero());
    ExperimentConfig cfg;
    cfg.problem = p;
    cfg.mode = StudyMode::vary_dt;
    cfg.n = 16;
    cfg.dt_list = {0.1, 0.05, 0.025};
    cfg.dt_star = 0.005;
    cfg.trials = 3;
    auto t = convergence_in_dt(cfg);
    for (const auto& r : t.rows)
        for (double e : r.errors) EXPECT_EQ(e, 0.0);
    EXPECT_FALSE(t.fit.has_value());
    ASSERT_TRUE(t.guard.has_value());
    EXPECT_TRUE(t.guard->passed);
}

TEST(Study, NoiseOnlyTelescopesAcrossSteps) {
    // Coarse increments are sums of the fine ones, so the states differ only
    // by the order of floating-point additions.
    ExperimentConfig cfg;
    cfg.problem = noise_only(QWienerSpec::periodic_fourier(2.0, 8));
    cfg.mode = StudyMode::vary_dt;
    cfg.n = 16;
    cfg.dt_list = {0.1, 0.05, 0.025};
    cfg.dt_star = 0.005;
    cfg.trials = 5;
    auto t = convergence_in_dt(cfg);
    for (const auto& r : t.rows)
        for (double e : r.errors) EXPECT_LT(e, 1e-14);
}

TEST(Study, DeterministicAcrossThreadCounts) {
    auto cfg = small_vary_n(kuramoto_band_problem(2.0, 32));
    cfg.problem.horizon = 0.5;
    std::string reference;
    for (std::size_t threads : {1u, 2u, 5u}) {
        cfg.threads = threads;
        std::ostringstream os;
        write_results_csv(os, convergence_in_n(cfg));
        if (reference.empty())
            reference = os.str();
        else
            EXPECT_EQ(os.str(), reference) << "threads=" << threads;
    }
    EXPECT_NE(reference.find("mode,s,n,dt,trials,mse,std,stderr,seed\n"), std::string::npos);
    EXPECT_NE(reference.find("# slope="), std::string::npos);
}

TEST(Study, MaxOverCheckpointsDominatesFinal) {
    auto cfg = small_vary_n(kuramoto_band_problem(2.0, 32));
    cfg.trials = 6;
    auto final_only = convergence_in_n(cfg);
    cfg.checkpoints = 10;
    auto maxed = convergence_in_n(cfg);
    for (std::size_t k = 0; k < final_only.rows.size(); ++k)
        for (std::size_t t = 0; t < cfg.trials; ++t)
            EXPECT_GE(maxed.rows[k].errors[t], final_only.rows[k].errors[t]);
}

TEST(Study, ConfigValidation) {
    auto cfg = small_vary_n(kuramoto_band_problem(2.0, 16));
    cfg.n_list = {};
    EXPECT_THROW(convergence_in_n(cfg), InvalidArgument);
    cfg.n_list = {6};
    EXPECT_THROW(convergence_in_n(cfg), IncommensurableGrids);
    cfg.n_list = {64};
    EXPECT_THROW(convergence_in_n(cfg), InvalidArgument);
    cfg.n_list = {8};
    EXPECT_THROW(convergence_in_dt(cfg), InvalidArgument);
    cfg.dt = 0.3;
    EXPECT_THROW(convergence_in_n(cfg), InvalidArgument);

    ExperimentConfig d;
    d.problem = kuramoto_band_problem(2.0, 16);
    d.mode = StudyMode::vary_dt;
    d.n = 32;
    d.dt_list = {0.01, 0.002};
    d.dt_star = 0.001;
    EXPECT_NO_THROW(d.validate());
    d.dt_list = {0.01, 0.0025};
    EXPECT_THROW(d.validate(), IncommensurableGrids);
}

TEST(Moments, SineMeanVanishes) {
    auto zero = sine_moment_check(QWienerSpec::zero(), 1.0, 16, 1000);
    EXPECT_EQ(zero.norm_of_mean, 0.0);
    EXPECT_TRUE(zero.passed());
    auto c = sine_moment_check(QWienerSpec::periodic_fourier(2.0, 32), 1.0, 64, 10000, 5);
    EXPECT_TRUE(c.passed()) << c.norm_of_mean << " vs " << c.threshold;
    EXPECT_GT(c.threshold, 0.0);
    EXPECT_THROW(sine_moment_check(QWienerSpec::zero(), 1.0, 16, 999), InvalidArgument);
}

TEST(Moments, CosineMeanMatchesCharacteristicFunction) {
    // Cell value of W(t) is N(0, sigma_i^2) with sigma_i^2 = t sum_k lambda_k (P_n e_k)_i^2,
    // so E cos(2 pi W) = exp(-2 pi^2 sigma_i^2).
    auto spec = QWienerSpec::dirichlet_sine(2.0, 6);
    const std::size_t n = 16;
    const double t = 0.8;
    auto m = trig_moment(spec, t, n, 20000, 2, std::numbers::pi / 2.0);
    for (std::size_t i = 0; i < n; ++i) {
        double var = 0.0;
        for (const auto& mode : spec.modes()) {
            auto e = project_to_grid([&](double x) { return eigenfunction(mode, x); }, n, {1e-12, 2000});
            var += mode.lambda * t * e[i] * e[i];
        }
        const double expected = std::exp(-2.0 * std::numbers::pi * std::numbers::pi * var);
        const double se = std::sqrt(m.variance[i] / 20000.0);
        EXPECT_LT(std::abs(m.mean[i] - expected), 4.0 * se + 1e-15) << "cell " << i;
    }
}

TEST(Moments, IncrementEnergyMatchesProjectedTrace) {
    auto spec = QWienerSpec::periodic_fourier(2.0, 16);
    auto e = increment_energy(spec, 64, 0.01, 10000, 1);
    double expected = 0.0;
    for (const auto& m : spec.modes()) expected += m.lambda * quad_sq_norm(m, 64);
    EXPECT_NEAR(e.expected, expected, 1e-13);
    EXPECT_LT(std::abs(e.mean - e.expected), 4.0 * e.std_error);
    EXPECT_DOUBLE_EQ(e.trace, trace(spec));
}

TEST(Moments, TemporalIncrementsOfBrownianMotion) {
    // Noise only: ||u(t0+L dt) - u(t0)|| is an increment of P_n W, RMS ~ sqrt(L dt).
    auto p = noise_only(QWienerSpec::periodic_fourier(2.0, 16));
    const std::vector<std::size_t> lags{1, 2, 4, 8, 16};
    auto rms = temporal_increment_rms(p, 32, 0.01, 0.1, lags, 400, 3);
    std::vector<std::pair<double, double>> pts;
    for (std::size_t k = 0; k < lags.size(); ++k) pts.emplace_back(lags[k] * 0.01, rms[k]);
    EXPECT_NEAR(fit_rate(pts).slope, 0.5, 0.05);
    auto single = temporal_increment_rms(p, 32, 0.01, 0.1, lags, 400, 3, 3);
    EXPECT_EQ(single, rms);
}
