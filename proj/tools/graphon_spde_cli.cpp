// graphon_spde command-line front end.
//
// Exit codes: 0 ok, 1 runtime failure, 2 bad config, 3 reference guard
// tripped, 4 a statistical check failed.

#include <CLI11.hpp>

#include <boost/math/special_functions/zeta.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "graphon_spde/graphon_spde.hpp"
#include "run_config.hpp"
#include "svg_plot.hpp"

namespace fs = std::filesystem;
using namespace gspde;
using namespace gspde::cli;

namespace {

enum Exit { ok = 0, runtime = 1, config = 2, guard = 3, check_failed = 4 };

struct Context {
    std::string command;
    RunConfig cfg;
    fs::path out;
};

std::string sidecar_text(const Context& ctx) {
    std::ostringstream os;
    os << "# graphon_spde " << GRAPHON_SPDE_VERSION << '\n'
       << "# command: " << ctx.command << '\n'
       << "# seed: " << ctx.cfg.seed << '\n'
       << to_toml(ctx.cfg);
    return os.str();
}

// Writes `name` under the output directory plus its .meta.toml sidecar.
void emit(const Context& ctx, const std::string& name, const std::string& body) {
    fs::create_directories(ctx.out);
    const fs::path file = ctx.out / name;
    {
        std::ofstream os(file, std::ios::binary);
        os << body;
        if (!os) throw std::runtime_error("cannot write " + file.string());
    }
    std::ofstream meta(file.string() + ".meta.toml", std::ios::binary);
    meta << sidecar_text(ctx);
    if (!meta) throw std::runtime_error("cannot write " + file.string() + ".meta.toml");
    std::cout << "wrote " << file.string() << '\n';
}

// ---- simulate ------------------------------------------------------------

int cmd_simulate(Context& ctx) {
    const auto& c = ctx.cfg;
    const Problem prob = c.problem();
    const std::size_t n = c.sim_n;
    const std::size_t n_fine = c.sim_n_fine ? c.sim_n_fine : n;
    NoisePath path;
    try {
        if (!(c.sim_dt > 0.0)) throw InvalidArgument("dt must be positive");
        if (n_fine % n != 0)
            throw IncommensurableGrids("n_fine = " + std::to_string(n_fine) + " is not a multiple of n = " +
                                       std::to_string(n));
        const std::size_t steps = step_count(prob.horizon, c.sim_dt);
        if (!c.noise_replay.empty()) {
            std::ifstream in(c.noise_replay, std::ios::binary);
            if (!in) throw InvalidArgument("cannot open noise_replay file '" + c.noise_replay + "'");
            path = read_noise_path(in);
            if (path.n_fine % n != 0) throw IncommensurableGrids("replayed noise does not refine n");
            if (path.steps * path.dt_fine + 1e-12 < prob.horizon)
                throw InvalidArgument("replayed noise is shorter than T");
        } else {
            IncrementSynthesizer probe(prob.noise, n_fine, c.sim_dt);
            path = sample_increments(prob.noise, n_fine, c.sim_dt, steps, stream_seed(c.seed, 0));
        }
    } catch (const Error& e) {
        c.fail("simulate", e.what());
    }
    if (!c.noise_dump.empty()) {
        std::ofstream dump(c.noise_dump, std::ios::binary);
        write_noise_path(dump, path);
        if (!dump) throw std::runtime_error("cannot write " + c.noise_dump);
    }
    const bool traj = c.record == "trajectory";
    auto result = integrate(prob, n, c.sim_dt, path, traj ? Record::trajectory : Record::final, c.stride);
    std::ostringstream os;
    if (traj)
        write_trajectory_csv(os, result.times, result.states);
    else
        write_csv(os, result.final_state);
    emit(ctx, traj ? "trajectory.csv" : "final.csv", os.str());
    return ok;
}

// ---- converge-n / converge-dt ---------------------------------------------

int cmd_converge(Context& ctx, StudyMode mode) {
    const ExperimentConfig ecfg = ctx.cfg.experiment(mode);
    const ConvergenceTable table =
        mode == StudyMode::vary_n ? convergence_in_n(ecfg) : convergence_in_dt(ecfg);

    const std::string stem = mode == StudyMode::vary_n ? "converge_n" : "converge_dt";
    std::ostringstream csv;
    write_results_csv(csv, table);

    std::cout << csv.str();
    if (ctx.cfg.wants("csv")) emit(ctx, stem + ".csv", csv.str());
    if (ctx.cfg.wants("svg")) {
        LogLogPlot plot;
        plot.title = std::string("MSE vs ") + (mode == StudyMode::vary_n ? "n" : "dt") +
                     " (s = " + format_double(table.s) + ", " + std::to_string(ecfg.trials) + " trials)";
        plot.xlabel = mode == StudyMode::vary_n ? "n" : "dt";
        plot.ylabel = "mean square error";
        for (const auto& r : table.rows) {
            plot.x.push_back(mode == StudyMode::vary_n ? static_cast<double>(r.point.n) : r.point.dt);
            plot.y.push_back(r.mse);
            plot.err.push_back(r.std);
        }
        if (table.fit) {
            plot.has_fit = true;
            plot.slope = table.fit->slope;
            plot.intercept = table.fit->intercept;
            plot.slope_stderr = table.fit->stderr_slope;
        }
        plot.metadata = sidecar_text(ctx);
        std::ostringstream svg;
        write_svg(svg, plot);
        emit(ctx, stem + ".svg", svg.str());
    }

    if (table.guard && !table.guard->passed) {
        std::cerr << "reference guard tripped: finest-point MSE " << format_double(table.guard->study_mse)
                  << " is only " << format_double(table.guard->ratio)
                  << "x the reference self-error " << format_double(table.guard->reference_mse) << " (need > 5).\n"
                  << (mode == StudyMode::vary_n ? "Raise n_star" : "Lower dt_star")
                  << " so the reference is closer to the exact solution; outputs were still written.\n";
        return guard;
    }
    return ok;
}

// ---- check -----------------------------------------------------------------

struct CheckRow {
    std::string name;
    double observed;
    double reference;
    double threshold;  // pass iff |observed - reference| <= threshold
    bool pass;
};

CheckRow make_row(std::string name, double observed, double reference, double threshold) {
    return {std::move(name), observed, reference, threshold, std::abs(observed - reference) <= threshold};
}

// sup over x of int K(x,y)^2 dy on a midpoint grid, and the same over y.
std::pair<double, double> row_mass_by_sum(const Graphon& K, std::size_t R) {
    double k1 = 0.0, k2 = 0.0;
    for (std::size_t a = 0; a < R; ++a) {
        double row = 0.0, col = 0.0;
        const double u = (a + 0.5) / R;
        for (std::size_t b = 0; b < R; ++b) {
            const double v = (b + 0.5) / R;
            row += K(u, v) * K(u, v);
            col += K(v, u) * K(v, u);
        }
        k1 = std::max(k1, row / R);
        k2 = std::max(k2, col / R);
    }
    return {k1, k2};
}

int cmd_check(Context& ctx) {
    const auto& c = ctx.cfg;
    const Problem prob = c.problem();
    const auto& spec = prob.noise;
    try {
        if (!(c.check_t > 0.0)) throw InvalidArgument("t must be positive");
        if (!(c.check_dt > 0.0)) throw InvalidArgument("dt must be positive");
        IncrementSynthesizer probe(spec, c.check_n, c.check_dt);
    } catch (const Error& e) {
        c.fail("check", e.what());
    }
    std::vector<CheckRow> rows;

    // Kernel row/column masses against a brute midpoint sum.
    {
        const std::size_t R = 2048;
        const auto b = kernel_bounds(prob.kernel, 4096);
        const auto [s1, s2] = row_mass_by_sum(prob.kernel, R);
        double scale = 1.0;
        if (prob.kernel.kind() == GraphonKind::constant) scale = std::max(1.0, b.k1);
        rows.push_back(make_row("kernel K1", b.k1, s1, 4.0 * scale / R));
        rows.push_back(make_row("kernel K2", b.k2, s2, 4.0 * scale / R));
    }

    // Retained trace plus analytic tail against the zeta closed form.
    {
        double closed = 0.0;
        if (spec.family() == NoiseFamily::periodic_fourier)
            closed = 2.0 * boost::math::zeta(spec.s()) * std::pow(2.0 * std::numbers::pi, -spec.s());
        else if (spec.family() == NoiseFamily::dirichlet_sine)
            closed = boost::math::zeta(spec.s()) * std::pow(std::numbers::pi, -spec.s());
        else
            closed = trace(spec) + spec.tail();
        const double full = trace(spec) + spec.tail();
        rows.push_back(make_row("trace + tail", full, closed, 1e-12 * std::max(1.0, closed)));
    }

    // Psi must not increase with n.
    {
        auto ns = c.psi_n_list;
        std::sort(ns.begin(), ns.end());
        double worst = 0.0;
        for (std::size_t k = 1; k < ns.size(); ++k)
            worst = std::max(worst, psi(spec, ns[k]) - psi(spec, ns[k - 1]));
        rows.push_back(make_row("psi increase", std::max(worst, 0.0), 0.0, 1e-15));
    }

    // E sin(2 pi W(t)) = 0.
    {
        const auto m = sine_moment_check(spec, c.check_t, c.check_n, c.check_trials, stream_seed(c.seed, 1));
        rows.push_back({"sine moment", m.norm_of_mean, 0.0, m.threshold, m.passed()});
    }

    // E ||dW||^2 / dt.
    {
        const auto e = increment_energy(spec, c.check_n, c.check_dt, c.check_slices, stream_seed(c.seed, 2));
        rows.push_back(make_row("increment energy", e.mean, e.expected, 4.0 * e.std_error));
    }

    // E cos(2 pi W_i(t)) = exp(-2 pi^2 Var W_i(t)).
    {
        const auto m = trig_moment(spec, c.check_t, c.check_n, c.check_trials, stream_seed(c.seed, 3),
                                   std::numbers::pi / 2);
        std::vector<double> var(c.check_n, 0.0);
        for (const auto& mode : spec.modes()) {
            const auto e = project_mode(mode, c.check_n);
            for (std::size_t i = 0; i < c.check_n; ++i) var[i] += mode.lambda * e[i] * e[i] * c.check_t;
        }
        const double h = 1.0 / static_cast<double>(c.check_n);
        double dist = 0.0, vsum = 0.0;
        for (std::size_t i = 0; i < c.check_n; ++i) {
            const double d = m.mean[i] - std::exp(-2.0 * std::numbers::pi * std::numbers::pi * var[i]);
            dist += d * d * h;
            vsum += m.variance[i] * h;
        }
        const double thr = 4.0 * std::sqrt(vsum / static_cast<double>(c.check_trials));
        rows.push_back({"cosine moment", std::sqrt(dist), 0.0, thr, std::sqrt(dist) <= std::max(thr, 1e-12)});
    }

    bool all = true;
    std::ostringstream csv;
    csv << "check,observed,reference,threshold,pass\n";
    std::cout << std::left << std::setw(18) << "check" << std::setw(24) << "observed" << std::setw(24)
              << "reference" << std::setw(24) << "threshold"
              << "result\n";
    for (const auto& r : rows) {
        all = all && r.pass;
        csv << r.name << ',' << format_double(r.observed) << ',' << format_double(r.reference) << ','
            << format_double(r.threshold) << ',' << (r.pass ? "PASS" : "FAIL") << '\n';
        std::cout << std::setw(18) << r.name << std::setw(24) << format_double(r.observed) << std::setw(24)
                  << format_double(r.reference) << std::setw(24) << format_double(r.threshold)
                  << (r.pass ? "PASS" : "FAIL") << '\n';
    }
    emit(ctx, "check.csv", csv.str());
    return all ? ok : check_failed;
}

// ---- psi -------------------------------------------------------------------

int cmd_psi(Context& ctx) {
    const auto& c = ctx.cfg;
    const Problem prob = c.problem();
    if (c.psi_n_list.empty()) c.fail("psi.n_list", "list is empty");
    std::ostringstream csv;
    csv << "n,psi\n";
    std::vector<std::pair<double, double>> xy;
    LogLogPlot plot;
    for (auto n : c.psi_n_list) {
        const double v = psi(prob.noise, n);
        csv << n << ',' << format_double(v) << '\n';
        if (v > 0.0) xy.emplace_back(static_cast<double>(n), v);
        plot.x.push_back(static_cast<double>(n));
        plot.y.push_back(v);
    }
    std::optional<RateFit> fit;
    if (xy.size() >= 3) {
        fit = fit_rate(xy);
        csv << "# slope=" << format_double(fit->slope) << ",stderr=" << format_double(fit->stderr_slope) << '\n';
    }
    std::cout << csv.str();
    if (c.wants("csv")) emit(ctx, "psi.csv", csv.str());
    if (c.wants("svg")) {
        plot.title = "Psi(n) for " + prob.noise.to_string();
        plot.xlabel = "n";
        plot.ylabel = "Psi(n)";
        if (fit) {
            plot.has_fit = true;
            plot.slope = fit->slope;
            plot.intercept = fit->intercept;
            plot.slope_stderr = fit->stderr_slope;
        }
        plot.metadata = sidecar_text(ctx);
        std::ostringstream svg;
        write_svg(svg, plot);
        emit(ctx, "psi.svg", svg.str());
    }
    return ok;
}

// ---- kernel-info -------------------------------------------------------------

int cmd_kernel_info(Context& ctx) {
    const auto& c = ctx.cfg;
    const Problem prob = c.problem();
    if (c.kernel_n_list.empty()) c.fail("kernel_info.n_list", "list is empty");
    const auto b = kernel_bounds(prob.kernel, 4096);
    std::cout << "kernel " << prob.kernel.to_string() << ": K1 = " << format_double(b.k1)
              << ", K2 = " << format_double(b.k2) << '\n';
    std::ostringstream csv;
    csv << "n,l2xy,l1y_linfx\n";
    std::vector<std::pair<double, double>> l2, l1;
    for (auto n : c.kernel_n_list) {
        const auto Kn = project_kernel(prob.kernel, n);
        const double e2 = projection_error(prob.kernel, Kn, KernelNorm::L2xy, c.resolution_factor * n);
        const double e1 = projection_error(prob.kernel, Kn, KernelNorm::L1y_Linfx, c.resolution_factor * n);
        csv << n << ',' << format_double(e2) << ',' << format_double(e1) << '\n';
        if (e2 > 0.0) l2.emplace_back(static_cast<double>(n), e2);
        if (e1 > 0.0) l1.emplace_back(static_cast<double>(n), e1);
    }
    csv << "# K1=" << format_double(b.k1) << ",K2=" << format_double(b.k2) << '\n';
    if (l2.size() >= 3) csv << "# l2xy_slope=" << format_double(fit_rate(l2).slope) << '\n';
    if (l1.size() >= 3) csv << "# l1y_linfx_slope=" << format_double(fit_rate(l1).slope) << '\n';
    std::cout << csv.str();
    emit(ctx, "kernel_info.csv", csv.str());
    if (c.matrix_n > 0) {
        std::ostringstream m;
        write_csv(m, project_kernel(prob.kernel, c.matrix_n));
        emit(ctx, "kernel_matrix.csv", m.str());
    }
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Galerkin / Euler-Maruyama solver for graphon-coupled stochastic evolution equations"};
    app.set_version_flag("--version", std::string("graphon_spde ") + GRAPHON_SPDE_VERSION);
    app.require_subcommand(1);

    std::string config_path;
    Overrides over;
    std::uint64_t seed = 0;
    std::size_t trials = 0, threads = 0;
    std::string out;

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"simulate", "integrate one realisation and write the final state or trajectory"},
        {"converge-n", "Monte Carlo mean-square error against n_star"},
        {"converge-dt", "Monte Carlo mean-square error against dt_star"},
        {"check", "statistical self-checks of kernel and noise"},
        {"psi", "noise rate functional over a list of n"},
        {"kernel-info", "kernel bounds and projection errors"},
    };
    std::vector<CLI::App*> subs;
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "TOML experiment file")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "root seed");
        sub->add_option("--trials", trials, "Monte Carlo trials")->check(CLI::PositiveNumber);
        sub->add_option("--out", out, "output directory");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_flag("--max-error", over.max_error, "error is the max over 10 checkpoints");
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? ok : config;
    }

    Context ctx;
    for (auto* sub : subs)
        if (sub->parsed()) {
            ctx.command = sub->get_name();
            if (sub->count("--seed")) over.seed = seed;
            if (sub->count("--trials")) over.trials = trials;
            if (sub->count("--out")) over.out = out;
            if (sub->count("--threads")) over.threads = threads;
        }

    try {
        if (!config_path.empty()) ctx.cfg = load_config(config_path);
        apply(ctx.cfg, over);
        ctx.out = ctx.cfg.out_dir;

        if (ctx.command == "simulate") return cmd_simulate(ctx);
        if (ctx.command == "converge-n") return cmd_converge(ctx, StudyMode::vary_n);
        if (ctx.command == "converge-dt") return cmd_converge(ctx, StudyMode::vary_dt);
        if (ctx.command == "check") return cmd_check(ctx);
        if (ctx.command == "psi") return cmd_psi(ctx);
        if (ctx.command == "kernel-info") return cmd_kernel_info(ctx);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config;
    } catch (const TrialError& e) {
        std::cerr << "error: " << e.what() << "\nreplay: trial " << e.trial() << " used seed " << e.seed()
                  << "; rerun with --seed " << ctx.cfg.seed << '\n';
        return runtime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\nreplay with --seed " << ctx.cfg.seed << '\n';
        return runtime;
    }
    return runtime;
}
