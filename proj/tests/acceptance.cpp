// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Criteria 1-3 are Monte Carlo studies and take a few minutes on one core.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "graphon_spde/graphon_spde.hpp"

using namespace gspde;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& detail, double seconds) {
    std::printf("criterion %d: %s  %s  [%.1fs]\n", id, pass ? "PASS" : "FAIL", detail.c_str(), seconds);
    std::fflush(stdout);
    if (!pass) ++failures;
}

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

std::size_t threads() { return std::max<std::size_t>(1, default_thread_count()); }

std::string guard_note(const ConvergenceTable& t) {
    if (!t.guard) return "";
    return " guard_ratio=" + fmt(t.guard->ratio, 3) + (t.guard->passed ? "" : "(tripped)");
}

// 1. MSE against dt.
void time_rate() {
    Timer tm;
    ExperimentConfig cfg;
    cfg.problem = kuramoto_band_problem(2.0, 128, 0.25, 1.0);
    cfg.mode = StudyMode::vary_dt;
    cfg.n = 256;
    cfg.dt_list = {4e-3, 2e-3, 1e-3, 5e-4};
    cfg.dt_star = 1e-5;
    cfg.trials = 100;
    cfg.seed = 1001;
    cfg.threads = threads();
    auto t = convergence_in_dt(cfg);
    const double slope = t.fit ? t.fit->slope : NAN;
    report(1, std::abs(slope - 2.0) <= 0.3,
           "dt slope=" + fmt(slope) + " (target 2 +/- 0.3)" + guard_note(t), tm.seconds());
}

// 2 and 3. MSE against n, noise synthesised at 8192 cells and averaged down.
ConvergenceTable space_study(double s) {
    ExperimentConfig cfg;
    cfg.problem = kuramoto_band_problem(s, 4096, 0.25, 1.0);
    cfg.mode = StudyMode::vary_n;
    cfg.n_list = {16, 32, 64, 128, 256};
    cfg.n_star = 2048;
    cfg.n_fine = 8192;
    cfg.dt = 1e-3;
    cfg.trials = 100;
    cfg.seed = 2002;
    cfg.threads = threads();
    return convergence_in_n(cfg);
}

void space_rate_rough() {
    Timer tm;
    auto a = space_study(1.5);
    auto b = space_study(2.0);
    const double sa = a.fit ? a.fit->slope : NAN, sb = b.fit ? b.fit->slope : NAN;
    const bool pass = std::abs(sa + 0.5) <= 0.15 && std::abs(sb + 1.0) <= 0.2;
    report(2, pass,
           "s=1.5 slope=" + fmt(sa) + " (target -0.5 +/- 0.15)" + guard_note(a) + "; s=2 slope=" + fmt(sb) +
               " (target -1 +/- 0.2)" + guard_note(b),
           tm.seconds());
}

void space_rate_smooth() {
    Timer tm;
    auto t = space_study(4.0);
    const double slope = t.fit ? t.fit->slope : NAN;
    report(3, std::abs(slope + 2.0) <= 0.3, "s=4 slope=" + fmt(slope) + " (target -2 +/- 0.3)" + guard_note(t),
           tm.seconds());
}

// 4. Band kernel projection errors.
void kernel_rates() {
    Timer tm;
    auto K = Graphon::band(0.25);
    std::vector<std::pair<double, double>> l2, l1;
    for (std::size_t n = 16; n <= 256; n *= 2) {
        auto Kn = project_kernel(K, n);
        l2.emplace_back(n, projection_error(K, Kn, KernelNorm::L2xy, 8 * n));
        l1.emplace_back(n, projection_error(K, Kn, KernelNorm::L1y_Linfx, 8 * n));
    }
    const double a = fit_rate(l2).slope, b = fit_rate(l1).slope;
    report(4, std::abs(a + 0.5) <= 0.1 && std::abs(b + 1.0) <= 0.15,
           "L2 slope=" + fmt(a) + " (target -0.5 +/- 0.1); L1yLinfx slope=" + fmt(b) + " (target -1 +/- 0.15)",
           tm.seconds());
}

// 5. Psi(n).
void psi_scaling() {
    Timer tm;
    bool pass = true;
    std::string detail;
    std::vector<std::size_t> ns;
    for (std::size_t n = 16; n <= 4096; n *= 2) ns.push_back(n);
    for (double s : {1.5, 2.0, 2.5}) {
        auto spec = QWienerSpec::periodic_fourier(s, 1 << 16);
        std::vector<std::pair<double, double>> xy;
        for (auto n : ns) xy.emplace_back(n, psi(spec, n));
        const double slope = fit_rate(xy).slope;
        pass = pass && std::abs(slope + (s - 1.0) / 2.0) <= 0.1;
        detail += "s=" + fmt(s) + " slope=" + fmt(slope) + " (target " + fmt(-(s - 1.0) / 2.0) + "); ";
    }
    auto spec3 = QWienerSpec::periodic_fourier(3.0, 1 << 16);
    double lo = INFINITY, hi = 0.0;
    for (auto n : ns) {
        const double v = psi(spec3, n) * n / std::sqrt(std::log(double(n)));
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    pass = pass && hi / lo <= 3.0;
    detail += "s=3 max/min of psi*n/sqrt(log n)=" + fmt(hi / lo) + " (<= 3)";
    report(5, pass, detail, tm.seconds());
}

// 6. Increment energy and sine moment.
void noise_moments() {
    Timer tm;
    auto spec = QWienerSpec::periodic_fourier(2.0, 64);
    auto e = increment_energy(spec, 4096, 1e-3, 10000, 6006);
    const double z = std::abs(e.mean - e.trace) / e.std_error;
    auto m = sine_moment_check(spec, 1.0, 4096, 10000, 6007);
    report(6, z <= 4.0 && m.passed(),
           "energy mean=" + fmt(e.mean, 6) + " trace=" + fmt(e.trace, 6) + " |z|=" + fmt(z, 3) +
               " (<= 4); sine moment norm=" + fmt(m.norm_of_mean) + " threshold=" + fmt(m.threshold),
           tm.seconds());
}

// 7. Brute-force oracles.
//
// Band r = 0.25 on 8 cells: the cell offset m sees x - y spread over
// ((m-1)/8, (m+1)/8) with triangular density, so the averaged indicator of
// circular distance <= 2/8 is 1 for m = 0, 1, one half for m = 2, else 0.
double band_quarter_8(std::size_t i, std::size_t j) {
    const std::size_t d = (i + 8 - j) % 8;
    const std::size_t m = std::min(d, 8 - d);
    return m <= 1 ? 1.0 : (m == 2 ? 0.5 : 0.0);
}

std::vector<double> brute_force(const NoisePath& path, double dt, std::size_t steps) {
    const std::size_t n = 8;
    std::vector<double> u(n), next(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = double(i) / n, b = double(i + 1) / n;
        u[i] = (a + b) / 2.0 - (a * a + a * b + b * b) / 3.0;  // cell mean of x(1-x)
    }
    for (std::size_t k = 0; k < steps; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                acc += band_quarter_8(i, j) * std::sin(2.0 * std::numbers::pi * (u[i] - u[j]));
            next[i] = u[i] + dt * acc / n + path.increments[k * n + i];
        }
        u.swap(next);
    }
    return u;
}

void oracle_equivalence() {
    Timer tm;
    const double dt = 0.05;
    auto prob = kuramoto_band_problem(2.0, 4, 0.25, 4 * dt);
    double worst_int = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto path = sample_increments(prob.noise, 8, dt, 4, seed);
        auto got = integrate(prob, 8, dt, path).final_state;
        auto ref = brute_force(path, dt, 4);
        for (std::size_t i = 0; i < 8; ++i) worst_int = std::max(worst_int, std::abs(got[i] - ref[i]));
    }

    double worst_nl = 0.0;
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> U(-2.0, 2.0);
    for (std::size_t n : {2u, 8u, 32u}) {
        for (const auto& K : {Graphon::band(0.25), Graphon::product()}) {
            auto Kn = project_kernel(K, n);
            GridFunction u(n);
            for (std::size_t i = 0; i < n; ++i) u[i] = U(rng);
            auto got = apply_nonlocal(Kn, Interaction::kuramoto_sine(), u);
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j)
                    acc += Kn(i, j) * std::sin(2.0 * std::numbers::pi * (u[i] - u[j]));
                worst_nl = std::max(worst_nl, std::abs(got[i] - acc / n));
            }
        }
    }
    report(7, worst_int <= 1e-12 && worst_nl <= 1e-13,
           "integrate max diff=" + fmt(worst_int, 3) + " (<= 1e-12, 100 seeds); apply_nonlocal max diff=" +
               fmt(worst_nl, 3) + " (<= 1e-13)",
           tm.seconds());
}

// 8. RMS of u(t0 + tau) - u(t0) against tau.
void temporal_continuity() {
    Timer tm;
    auto prob = kuramoto_band_problem(2.0, 128, 0.25, 1.0);
    const double dt = 1e-4;
    std::vector<std::size_t> lags{1, 2, 4, 8, 16, 32, 64};
    auto rms = temporal_increment_rms(prob, 256, dt, 0.5, lags, 200, 8008, threads());
    std::vector<std::pair<double, double>> xy;
    for (std::size_t k = 0; k < lags.size(); ++k) xy.emplace_back(lags[k] * dt, rms[k]);
    const double slope = fit_rate(xy).slope;
    report(8, std::abs(slope - 0.5) <= 0.1, "slope=" + fmt(slope) + " (target 0.5 +/- 0.1)", tm.seconds());
}

// 9. Same config and seed, any thread count, same CSV bytes.
void determinism() {
    Timer tm;
    auto run = [](StudyMode mode, std::size_t th) {
        ExperimentConfig cfg;
        cfg.problem = kuramoto_band_problem(2.0, 32, 0.25, 0.2);
        cfg.mode = mode;
        cfg.n_list = {8, 16, 32};
        cfg.n_star = 128;
        cfg.dt = 0.01;
        cfg.dt_list = {0.05, 0.025, 0.0125};
        cfg.dt_star = 0.0025;
        cfg.n = 64;
        cfg.trials = 40;
        cfg.seed = 909;
        cfg.checkpoints = 2;
        cfg.threads = th;
        std::ostringstream os;
        write_results_csv(os, mode == StudyMode::vary_n ? convergence_in_n(cfg) : convergence_in_dt(cfg));
        return os.str();
    };
    bool pass = true;
    for (auto mode : {StudyMode::vary_n, StudyMode::vary_dt}) {
        const auto base = run(mode, 1);
        for (std::size_t th : {2u, 3u, 8u}) pass = pass && run(mode, th) == base;
        pass = pass && run(mode, 1) == base;
    }
    report(9, pass, "vary_n and vary_dt CSV identical for threads 1, 2, 3, 8 and on rerun", tm.seconds());
}

}  // namespace

int main() {
    std::printf("graphon_spde %s acceptance, %zu thread(s)\n", GRAPHON_SPDE_VERSION, threads());
    void (*criteria[])() = {time_rate,          space_rate_rough,    space_rate_smooth,
                            kernel_rates,       psi_scaling,         noise_moments,
                            oracle_equivalence, temporal_continuity, determinism};
    for (int k = 0; k < 9; ++k) {
        try {
            criteria[k]();
        } catch (const std::exception& e) {
            report(k + 1, false, std::string("threw: ") + e.what(), 0.0);
        }
    }
    std::printf("%s: %d of 9 criteria failed\n", failures ? "FAIL" : "PASS", failures);
    return failures ? 1 : 0;
}
