#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "error.hpp"
#include "format.hpp"
#include "grid.hpp"
#include "noise.hpp"
#include "parallel.hpp"

namespace gspde {

enum class StudyMode { vary_n, vary_dt };

inline const char* to_string(StudyMode m) { return m == StudyMode::vary_n ? "vary_n" : "vary_dt"; }

/// Monte Carlo convergence study. In vary_n mode every n in n_list is compared
/// with n_star at the common step dt; in vary_dt mode every dt in dt_list is
/// compared with dt_star at the common resolution n. All resolutions in a trial
/// are driven by coarsenings of one fine noise path.
struct ExperimentConfig {
    Problem problem;
    StudyMode mode = StudyMode::vary_n;

    std::vector<std::size_t> n_list;
    std::size_t n_star = 2048;
    double dt = 1e-3;

    std::vector<double> dt_list;
    double dt_star = 1e-5;
    std::size_t n = 256;

    /// Resolution the noise is synthesised at; 0 means the reference resolution.
    std::size_t n_fine = 0;
    std::size_t trials = 100;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    /// When positive, errors are the maximum over this many equally spaced
    /// checkpoints in (0, T] instead of the value at T.
    std::size_t checkpoints = 0;
    /// Compare against the half-resolution reference as well (validity guard).
    bool guard = true;

    double s() const { return problem.noise.s(); }

    Resolution reference() const {
        return mode == StudyMode::vary_n ? Resolution{n_star, dt} : Resolution{n, dt_star};
    }

    std::size_t synthesis_n() const { return n_fine ? n_fine : reference().n; }
    double synthesis_dt() const { return reference().dt; }

    std::vector<Resolution> points() const {
        std::vector<Resolution> out;
        if (mode == StudyMode::vary_n)
            for (auto m : n_list) out.push_back({m, dt});
        else
            for (auto d : dt_list) out.push_back({n, d});
        return out;
    }

    /// Resolution one refinement below the reference, used by the guard.
    Resolution guard_point() const {
        return mode == StudyMode::vary_n ? Resolution{n_star / 2, dt} : Resolution{n, 2.0 * dt_star};
    }

    void validate() const {
        problem.validate();
        if (trials == 0) throw InvalidArgument("trials must be positive");
        if (mode == StudyMode::vary_n) {
            if (n_list.empty()) throw InvalidArgument("n_list is empty");
            for (auto m : n_list) {
                if (m == 0 || m >= n_star)
                    throw InvalidArgument("every n must lie below n_star = " + std::to_string(n_star));
                if (n_star % m != 0)
                    throw IncommensurableGrids(std::to_string(m) + " does not divide n_star = " +
                                               std::to_string(n_star));
            }
            if (guard && n_star % 2 != 0) throw InvalidArgument("guard needs an even n_star");
            step_count(problem.horizon, dt);
        } else {
            if (dt_list.empty()) throw InvalidArgument("dt_list is empty");
            for (auto d : dt_list) {
                if (!(d > dt_star)) throw InvalidArgument("every dt must exceed dt_star");
                step_ratio(d, dt_star);
                step_count(problem.horizon, d);
            }
            step_count(problem.horizon, dt_star);
        }
        if (synthesis_n() % reference().n != 0)
            throw IncommensurableGrids("synthesis resolution " + std::to_string(synthesis_n()) +
                                       " is not a multiple of " + std::to_string(reference().n));
        if (checkpoints > 0) {
            const double every = problem.horizon / static_cast<double>(checkpoints);
            for (const auto& p : points()) step_count(every, p.dt);
            step_count(every, reference().dt);
        }
    }
};

struct EnsembleStats {
    Resolution point{};
    std::vector<double> errors;  // per-trial L^2 error
    double mse = 0.0;            // mean of squared errors
    double std = 0.0;            // unbiased std of squared errors
    double std_error = 0.0;      // std / sqrt(trials)
    std::uint64_t seed = 0;

    std::size_t trials() const noexcept { return errors.size(); }
};

inline EnsembleStats summarize(Resolution point, std::vector<double> errors, std::uint64_t seed) {
    EnsembleStats st;
    st.point = point;
    st.seed = seed;
    const double count = static_cast<double>(errors.size());
    double sum = 0.0;
    for (double e : errors) sum += e * e;
    st.mse = errors.empty() ? 0.0 : sum / count;
    if (errors.size() > 1) {
        double ss = 0.0;
        for (double e : errors) {
            const double d = e * e - st.mse;
            ss += d * d;
        }
        st.std = std::sqrt(ss / (count - 1.0));
        st.std_error = st.std / std::sqrt(count);
    }
    st.errors = std::move(errors);
    return st;
}

namespace detail {

// Solves every point plus the reference for each trial; returns errors indexed
// [point][trial]. Trials run in parallel, each with its own stream and state;
// results land in fixed slots, so output is independent of scheduling.
inline std::vector<std::vector<double>> ensemble_errors(const ExperimentConfig& cfg,
                                                        const std::vector<Resolution>& points) {
    const Resolution ref = cfg.reference();
    const std::size_t n_fine = cfg.synthesis_n();
    const double dt_fine = cfg.synthesis_dt();
    const double T = cfg.problem.horizon;

    IncrementSynthesizer synth(cfg.problem.noise, n_fine, dt_fine);

    std::map<std::size_t, std::shared_ptr<const Discretization>> discs;
    auto disc_for = [&](std::size_t m) {
        auto& d = discs[m];
        if (!d) d = std::make_shared<const Discretization>(cfg.problem, m);
        return d;
    };
    disc_for(ref.n);
    for (const auto& p : points) disc_for(p.n);

    auto record_every = [&](double dt) -> std::size_t {
        if (cfg.checkpoints == 0) return 0;
        return step_count(T / static_cast<double>(cfg.checkpoints), dt);
    };

    std::vector<std::vector<double>> errors(points.size(), std::vector<double>(cfg.trials, 0.0));
    parallel_for(cfg.trials, cfg.threads, [&](std::size_t trial) {
        const std::uint64_t seed = stream_seed(cfg.seed, trial);
        try {
            NoiseStream stream(synth, seed);
            std::vector<CoupledSolver> solvers;
            solvers.reserve(points.size() + 1);
            solvers.emplace_back(discs.at(ref.n), ref.dt, n_fine, dt_fine, T, record_every(ref.dt));
            for (const auto& p : points)
                solvers.emplace_back(discs.at(p.n), p.dt, n_fine, dt_fine, T, record_every(p.dt));
            std::size_t needed = 0;
            for (const auto& s : solvers) needed = std::max(needed, s.fine_steps_needed());
            std::vector<double> fine(n_fine);
            for (std::size_t j = 0; j < needed; ++j) {
                stream.next(fine);
                for (auto& s : solvers) s.push(fine);
            }
            const auto& reference = solvers.front();
            for (std::size_t k = 0; k < points.size(); ++k) {
                const auto& s = solvers[k + 1];
                double e = 0.0;
                if (cfg.checkpoints == 0) {
                    e = l2_distance(s.state(), reference.state());
                } else {
                    // Index 0 is t = 0, where both start from projections of g.
                    for (std::size_t c = 1; c < s.trajectory().size(); ++c)
                        e = std::max(e, l2_distance(s.trajectory()[c], reference.trajectory()[c]));
                }
                if (!std::isfinite(e)) throw Error("non-finite strong error");
                errors[k][trial] = e;
            }
        } catch (const Error& ex) {
            throw TrialError("trial " + std::to_string(trial) + " (seed " + std::to_string(seed) +
                                 ") failed: " + ex.what(),
                             trial, seed);
        }
    });
    return errors;
}

}  // namespace detail

/// Strong error statistics at one point against the configured reference.
inline EnsembleStats run_ensemble(const ExperimentConfig& cfg, Resolution point) {
    auto errors = detail::ensemble_errors(cfg, {point});
    return summarize(point, std::move(errors.front()), cfg.seed);
}

/// Least-squares line through (log x, log y).
struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double stderr_slope = 0.0;
    std::vector<std::pair<double, double>> points;
};

inline RateFit fit_rate(const std::vector<std::pair<double, double>>& xy) {
    if (xy.size() < 3) throw InvalidArgument("rate fit needs at least 3 points");
    RateFit fit;
    for (const auto& [x, y] : xy) {
        if (!(x > 0.0) || !(y > 0.0)) throw InvalidArgument("rate fit needs positive values");
        fit.points.emplace_back(std::log(x), std::log(y));
    }
    const double m = static_cast<double>(fit.points.size());
    double mx = 0.0, my = 0.0;
    for (const auto& [lx, ly] : fit.points) {
        mx += lx;
        my += ly;
    }
    mx /= m;
    my /= m;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [lx, ly] : fit.points) {
        sxx += (lx - mx) * (lx - mx);
        sxy += (lx - mx) * (ly - my);
    }
    if (sxx == 0.0) throw InvalidArgument("rate fit needs distinct x values");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ssr = 0.0;
    for (const auto& [lx, ly] : fit.points) {
        const double r = ly - (fit.intercept + fit.slope * lx);
        ssr += r * r;
    }
    fit.stderr_slope = std::sqrt(ssr / (m - 2.0) / sxx);
    return fit;
}

/// Reference-validity guard: the error at the finest study point must exceed
/// five times the error between the reference and its half refinement.
struct GuardResult {
    double study_mse = 0.0;
    double reference_mse = 0.0;
    double ratio = 0.0;
    bool passed = true;
};

struct ConvergenceTable {
    StudyMode mode = StudyMode::vary_n;
    double s = 0.0;
    std::vector<EnsembleStats> rows;
    std::optional<RateFit> fit;  // absent when fewer than 3 positive MSE values
    std::optional<GuardResult> guard;
};

namespace detail {

inline ConvergenceTable run_study(const ExperimentConfig& cfg) {
    cfg.validate();
    auto points = cfg.points();
    const bool with_guard = cfg.guard;
    if (with_guard) points.push_back(cfg.guard_point());
    auto errors = ensemble_errors(cfg, points);

    ConvergenceTable table;
    table.mode = cfg.mode;
    table.s = cfg.s();
    const std::size_t study = points.size() - (with_guard ? 1 : 0);
    for (std::size_t k = 0; k < study; ++k)
        table.rows.push_back(summarize(points[k], std::move(errors[k]), cfg.seed));

    std::vector<std::pair<double, double>> xy;
    for (const auto& r : table.rows)
        if (r.mse > 0.0)
            xy.emplace_back(cfg.mode == StudyMode::vary_n ? static_cast<double>(r.point.n) : r.point.dt,
                            r.mse);
    if (xy.size() >= 3) table.fit = fit_rate(xy);

    if (with_guard) {
        auto g = summarize(points.back(), std::move(errors.back()), cfg.seed);
        // Finest study point: largest n, or smallest dt.
        const auto finest = std::min_element(table.rows.begin(), table.rows.end(), [&](auto& a, auto& b) {
            return cfg.mode == StudyMode::vary_n ? a.point.n > b.point.n : a.point.dt < b.point.dt;
        });
        GuardResult gr;
        gr.study_mse = finest->mse;
        gr.reference_mse = g.mse;
        if (g.mse > 0.0) {
            gr.ratio = finest->mse / g.mse;
            gr.passed = gr.ratio > 5.0;
        } else {
            gr.ratio = std::numeric_limits<double>::infinity();
            gr.passed = true;
        }
        table.guard = gr;
    }
    return table;
}

}  // namespace detail

inline ConvergenceTable convergence_in_n(ExperimentConfig cfg) {
    if (cfg.mode != StudyMode::vary_n) throw InvalidArgument("convergence_in_n needs mode vary_n");
    return detail::run_study(cfg);
}

inline ConvergenceTable convergence_in_dt(ExperimentConfig cfg) {
    if (cfg.mode != StudyMode::vary_dt) throw InvalidArgument("convergence_in_dt needs mode vary_dt");
    return detail::run_study(cfg);
}

/// Results CSV: `mode,s,n,dt,trials,mse,std,stderr,seed`, then the fit footer.
inline void write_results_csv(std::ostream& os, const ConvergenceTable& table) {
    os << "mode,s,n,dt,trials,mse,std,stderr,seed\n";
    for (const auto& r : table.rows) {
        os << to_string(table.mode) << ',' << format_double(table.s) << ',' << r.point.n << ','
           << format_double(r.point.dt) << ',' << r.trials() << ',' << format_double(r.mse) << ','
           << format_double(r.std) << ',' << format_double(r.std_error) << ',' << r.seed << '\n';
    }
    if (table.fit)
        os << "# slope=" << format_double(table.fit->slope)
           << ",stderr=" << format_double(table.fit->stderr_slope) << '\n';
}

/// Cellwise Monte Carlo mean of sin(2 pi W(t) + phase) at resolution n.
struct TrigMoment {
    GridFunction mean;
    GridFunction variance;  // unbiased sample variance per cell
    std::size_t trials;
};

inline TrigMoment trig_moment(const QWienerSpec& spec, double t, std::size_t n, std::size_t trials,
                              std::uint64_t seed, double phase = 0.0) {
    if (trials < 2) throw InvalidArgument("moment estimate needs at least 2 trials");
    IncrementSynthesizer synth(spec, n, t);
    NoiseStream stream(synth, seed);
    std::vector<double> w(n);
    std::vector<double> sum(n, 0.0), sumsq(n, 0.0);
    for (std::size_t k = 0; k < trials; ++k) {
        stream.next(w);
        for (std::size_t i = 0; i < n; ++i) {
            const double v = std::sin(2.0 * std::numbers::pi * w[i] + phase);
            sum[i] += v;
            sumsq[i] += v * v;
        }
    }
    const double m = static_cast<double>(trials);
    GridFunction mean(n), var(n);
    for (std::size_t i = 0; i < n; ++i) {
        mean[i] = sum[i] / m;
        var[i] = std::max(0.0, (sumsq[i] - m * mean[i] * mean[i]) / (m - 1.0));
    }
    return {std::move(mean), std::move(var), trials};
}

struct MomentCheck {
    double norm_of_mean;
    double threshold;
    bool passed() const noexcept { return norm_of_mean <= threshold; }
};

/// E sin(2 pi W(t)) = 0 cellwise for centred Gaussian W. Returns the L^2 norm
/// of the cellwise sample mean and four times its Monte Carlo standard error.
inline MomentCheck sine_moment_check(const QWienerSpec& spec, double t, std::size_t n,
                                     std::size_t trials, std::uint64_t seed = 0) {
    if (trials < 1000) throw InvalidArgument("sine moment check needs at least 1000 trials");
    auto m = trig_moment(spec, t, n, trials, seed);
    double var_sum = 0.0;
    for (double v : m.variance.values()) var_sum += v;
    const double threshold = 4.0 * std::sqrt(var_sum * m.mean.h() / static_cast<double>(trials));
    return {l2_norm(m.mean), threshold};
}

/// Sample mean of ||dW||^2 / dt over independent increments at resolution n,
/// with its standard error and the exact expectation sum_k lambda_k ||P_n e_k||^2.
struct EnergyCheck {
    double mean;
    double std_error;
    double expected;
    double trace;
};

inline EnergyCheck increment_energy(const QWienerSpec& spec, std::size_t n, double dt, std::size_t slices,
                                    std::uint64_t seed = 0) {
    if (slices < 2) throw InvalidArgument("energy check needs at least 2 slices");
    IncrementSynthesizer synth(spec, n, dt);
    NoiseStream stream(synth, seed);
    std::vector<double> w(n);
    double sum = 0.0, sumsq = 0.0;
    const double h = 1.0 / static_cast<double>(n);
    for (std::size_t k = 0; k < slices; ++k) {
        stream.next(w);
        double e = 0.0;
        for (double v : w) e += v * v;
        e *= h / dt;
        sum += e;
        sumsq += e * e;
    }
    const double m = static_cast<double>(slices);
    const double mean = sum / m;
    const double var = std::max(0.0, (sumsq - m * mean * mean) / (m - 1.0));
    double expected = 0.0;
    for (const auto& mode : spec.modes()) {
        const double nrm = l2_norm(project_mode(mode, n));
        expected += mode.lambda * nrm * nrm;
    }
    return {mean, std::sqrt(var / m), expected, trace(spec)};
}

/// RMS over trials of ||u(t0 + lag) - u(t0)|| for each lag (in steps of dt).
inline std::vector<double> temporal_increment_rms(Problem prob, std::size_t n, double dt, double t0,
                                                  const std::vector<std::size_t>& lags,
                                                  std::size_t trials, std::uint64_t seed,
                                                  std::size_t threads = 1) {
    if (lags.empty()) throw InvalidArgument("no lags given");
    const std::size_t start = step_count(t0, dt);
    const std::size_t max_lag = *std::max_element(lags.begin(), lags.end());
    prob.horizon = static_cast<double>(start + max_lag) * dt;
    auto disc = std::make_shared<const Discretization>(prob, n);
    IncrementSynthesizer synth(prob.noise, n, dt);
    std::vector<std::vector<double>> sq(lags.size(), std::vector<double>(trials, 0.0));
    parallel_for(trials, threads, [&](std::size_t trial) {
        NoiseStream stream(synth, stream_seed(seed, trial));
        CoupledSolver solver(disc, dt, n, dt, prob.horizon, 1);
        std::vector<double> fine(n);
        while (!solver.done()) {
            stream.next(fine);
            solver.push(fine);
        }
        const auto& traj = solver.trajectory();
        for (std::size_t k = 0; k < lags.size(); ++k) {
            const double d = l2_distance(traj[start + lags[k]], traj[start]);
            sq[k][trial] = d * d;
        }
    });
    std::vector<double> rms;
    for (const auto& v : sq)
        rms.push_back(std::sqrt(std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(trials)));
    return rms;
}

}  // namespace gspde
