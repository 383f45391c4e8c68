#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "error.hpp"
#include "fft.hpp"
#include "format.hpp"
#include "grid.hpp"
#include "kernels.hpp"
#include "noise.hpp"

namespace gspde {

/// Local reaction term f(t, u), applied cellwise.
class Drift {
public:
    enum class Kind { zero, linear, custom };
    using Evaluator = std::function<double(double, double)>;

    static Drift zero() { return Drift(Kind::zero, 0.0, 0.0); }

    /// f(t, u) = a + b u.
    static Drift linear(double a, double b) {
        Drift d(Kind::linear, a, b);
        d.lipschitz_ = std::abs(b);
        d.growth_a_ = std::abs(a);
        d.growth_b_ = std::abs(b);
        return d;
    }

    /// Declared constants must satisfy |f| <= A + B|u| and
    /// |f(t,u) - f(t',u')| <= L (|t - t'| + |u - u'|).
    static Drift custom(Evaluator f, double lipschitz, double growth_a, double growth_b,
                        std::string name = "custom") {
        if (!f) throw InvalidArgument("custom drift needs an evaluator");
        Drift d(Kind::custom, 0.0, 0.0);
        d.eval_ = std::move(f);
        d.lipschitz_ = lipschitz;
        d.growth_a_ = growth_a;
        d.growth_b_ = growth_b;
        d.name_ = std::move(name);
        return d;
    }

    Kind kind() const noexcept { return kind_; }
    bool is_zero() const noexcept { return kind_ == Kind::zero; }
    double lipschitz() const noexcept { return lipschitz_; }
    double growth_a() const noexcept { return growth_a_; }
    double growth_b() const noexcept { return growth_b_; }

    double operator()(double t, double u) const {
        switch (kind_) {
            case Kind::zero:
                return 0.0;
            case Kind::linear:
                return a_ + b_ * u;
            case Kind::custom:
                return eval_(t, u);
        }
        return 0.0;
    }

    std::string to_string() const {
        switch (kind_) {
            case Kind::zero:
                return "zero";
            case Kind::linear:
                return "linear:a=" + format_double(a_) + ",b=" + format_double(b_);
            case Kind::custom:
                return name_;
        }
        return {};
    }

private:
    Drift(Kind kind, double a, double b) : kind_(kind), a_(a), b_(b) {}

    Kind kind_;
    double a_;
    double b_;
    double lipschitz_ = 0.0;
    double growth_a_ = 0.0;
    double growth_b_ = 0.0;
    Evaluator eval_;
    std::string name_;
};

/// Pairwise coupling S(u, v) with |S| <= A_S + B_S(|u| + |v|) and Lipschitz
/// constant L_S in each argument.
class Interaction {
public:
    enum class Kind { kuramoto_sine, zero, custom };
    using Evaluator = std::function<double(double, double)>;

    /// S(u, v) = sin(2 pi (u - v)).
    static Interaction kuramoto_sine() {
        return Interaction(Kind::kuramoto_sine, 1.0, 2.0 * std::numbers::pi, 0.0);
    }
    static Interaction zero() { return Interaction(Kind::zero, 0.0, 0.0, 0.0); }
    static Interaction custom(Evaluator f, double bound, double lipschitz, double growth_b = 0.0,
                              std::string name = "custom") {
        if (!f) throw InvalidArgument("custom interaction needs an evaluator");
        Interaction s(Kind::custom, bound, lipschitz, growth_b);
        s.eval_ = std::move(f);
        s.name_ = std::move(name);
        return s;
    }

    Kind kind() const noexcept { return kind_; }
    double bound() const noexcept { return bound_; }
    double lipschitz() const noexcept { return lipschitz_; }
    double growth_b() const noexcept { return growth_b_; }

    double operator()(double u, double v) const {
        switch (kind_) {
            case Kind::kuramoto_sine:
                return std::sin(2.0 * std::numbers::pi * (u - v));
            case Kind::zero:
                return 0.0;
            case Kind::custom:
                return eval_(u, v);
        }
        return 0.0;
    }

    std::string to_string() const {
        switch (kind_) {
            case Kind::kuramoto_sine:
                return "kuramoto_sine";
            case Kind::zero:
                return "zero";
            case Kind::custom:
                return name_;
        }
        return {};
    }

private:
    Interaction(Kind kind, double bound, double lipschitz, double growth_b)
        : kind_(kind), bound_(bound), lipschitz_(lipschitz), growth_b_(growth_b) {}

    Kind kind_;
    double bound_;
    double lipschitz_;
    double growth_b_;
    Evaluator eval_;
    std::string name_;
};

inline Drift parse_drift(std::string_view text) {
    auto [name, params] = detail::split_spec(text);
    if (name == "zero" || name == "none") return Drift::zero();
    if (name == "linear")
        return Drift::linear(detail::lookup(params, "a", text), detail::lookup(params, "b", text));
    throw InvalidArgument("unknown drift kind '" + name + "'");
}

inline Interaction parse_interaction(std::string_view text) {
    auto [name, params] = detail::split_spec(text);
    if (name == "kuramoto_sine" || name == "kuramoto") return Interaction::kuramoto_sine();
    if (name == "zero" || name == "none") return Interaction::zero();
    throw InvalidArgument("unknown interaction kind '" + name + "'");
}

/// Initial condition g on I with a config name.
struct InitialCondition {
    std::function<double(double)> g;
    std::string name;

    double operator()(double x) const { return g(x); }

    static InitialCondition logistic() {
        return {[](double x) { return x * (1.0 - x); }, "logistic"};
    }
    static InitialCondition constant(double c) {
        return {[c](double) { return c; }, "constant:c=" + format_double(c)};
    }
    /// a * sin(2 pi k x)
    static InitialCondition sine(double k, double a) {
        return {[k, a](double x) { return a * std::sin(2.0 * std::numbers::pi * k * x); },
                "sine:k=" + format_double(k) + ",a=" + format_double(a)};
    }
};

inline InitialCondition parse_initial(std::string_view text) {
    auto [name, params] = detail::split_spec(text);
    if (name == "logistic") return InitialCondition::logistic();
    if (name == "constant") return InitialCondition::constant(detail::lookup(params, "c", text));
    if (name == "sine")
        return InitialCondition::sine(detail::lookup(params, "k", text), detail::lookup(params, "a", text));
    throw InvalidArgument("unknown initial condition '" + name + "'");
}

/// du = { f(t,u) + int K(x,y) S(u(x), u(y)) dy } dt + dW on I x [0, T].
struct Problem {
    Drift drift = Drift::zero();
    Interaction interaction = Interaction::kuramoto_sine();
    Graphon kernel = Graphon::band(0.25);
    QWienerSpec noise = QWienerSpec::zero();
    InitialCondition initial = InitialCondition::logistic();
    double horizon = 1.0;

    void validate() const {
        if (!(horizon > 0.0)) throw InvalidArgument("time horizon T must be positive");
    }
};

/// The reference test problem: band kernel, Kuramoto sine coupling, no drift,
/// logistic initial condition, periodic noise with exponent s.
inline Problem kuramoto_band_problem(double s, std::size_t M, double r = 0.25, double T = 1.0) {
    Problem p;
    p.kernel = Graphon::band(r);
    p.interaction = Interaction::kuramoto_sine();
    p.noise = QWienerSpec::periodic_fourier(s, M);
    p.horizon = T;
    return p;
}

enum class NonlocalPath { automatic, dense, fft };

/// Scratch buffers for NonlocalOperator::apply; one per thread.
struct NonlocalWorkspace {
    std::vector<fft::complex> z;
    std::vector<double> c;
    std::vector<double> s;
};

/// Discrete nonlocal term  out_i = h sum_j K^n_ij S(u_i, u_j).
///
/// Kuramoto coupling factors as sin(a_i)(K cos a)_i - cos(a_i)(K sin a)_i with
/// a = 2 pi u, so the dense path is two matrix-vector products. When the
/// kernel matrix is declared circulant the same products are done by FFT.
class NonlocalOperator {
public:
    NonlocalOperator(KernelMatrix Kn, Interaction S, NonlocalPath path = NonlocalPath::automatic)
        : Kn_(std::move(Kn)), S_(std::move(S)) {
        use_fft_ = path == NonlocalPath::fft ||
                   (path == NonlocalPath::automatic && Kn_.circulant());
        if (path == NonlocalPath::fft && !Kn_.circulant())
            throw InvalidArgument("FFT nonlocal path requires a kernel declared circulant");
        if (S_.kind() != Interaction::Kind::kuramoto_sine) use_fft_ = false;
        if (use_fft_) {
            const std::size_t n = Kn_.n();
            // Row i of a circulant matrix is row 0 rotated by i, so
            // (K z)_i = sum_m a_m z_{i+m} and DFT(Kz) = conj(DFT(a)) DFT(z).
            std::vector<fft::complex> a(Kn_.row(0).begin(), Kn_.row(0).end());
            fft::transform(a, fft::Direction::forward);
            symbol_.resize(n);
            const double inv_n = 1.0 / static_cast<double>(n);
            for (std::size_t k = 0; k < n; ++k) symbol_[k] = std::conj(a[k]) * inv_n;
        }
    }

    const KernelMatrix& kernel() const noexcept { return Kn_; }
    const Interaction& interaction() const noexcept { return S_; }
    std::size_t n() const noexcept { return Kn_.n(); }
    bool uses_fft() const noexcept { return use_fft_; }

    void apply(std::span<const double> u, std::span<double> out, NonlocalWorkspace& ws) const {
        const std::size_t n = Kn_.n();
        if (u.size() != n || out.size() != n)
            throw InvalidArgument("nonlocal operator of size " + std::to_string(n) +
                                  " applied to a vector of size " + std::to_string(u.size()));
        const double h = Kn_.h();
        switch (S_.kind()) {
            case Interaction::Kind::zero:
                std::fill(out.begin(), out.end(), 0.0);
                return;
            case Interaction::Kind::custom:
                for (std::size_t i = 0; i < n; ++i) {
                    auto row = Kn_.row(i);
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += row[j] * S_(u[i], u[j]);
                    out[i] = h * acc;
                }
                return;
            case Interaction::Kind::kuramoto_sine:
                break;
        }
        constexpr double two_pi = 2.0 * std::numbers::pi;
        if (use_fft_) {
            ws.z.resize(n);
            for (std::size_t i = 0; i < n; ++i) ws.z[i] = std::polar(1.0, two_pi * u[i]);
            ws.c.resize(n);
            ws.s.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                ws.c[i] = ws.z[i].real();
                ws.s[i] = ws.z[i].imag();
            }
            fft::transform(ws.z, fft::Direction::forward);
            for (std::size_t k = 0; k < n; ++k) ws.z[k] *= symbol_[k];
            fft::transform(ws.z, fft::Direction::backward);
            for (std::size_t i = 0; i < n; ++i)
                out[i] = h * (ws.s[i] * ws.z[i].real() - ws.c[i] * ws.z[i].imag());
            return;
        }
        ws.c.resize(n);
        ws.s.resize(n);
        for (std::size_t j = 0; j < n; ++j) {
            ws.c[j] = std::cos(two_pi * u[j]);
            ws.s[j] = std::sin(two_pi * u[j]);
        }
        for (std::size_t i = 0; i < n; ++i) {
            auto row = Kn_.row(i);
            double kc = 0.0;
            double ks = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                kc += row[j] * ws.c[j];
                ks += row[j] * ws.s[j];
            }
            out[i] = h * (ws.s[i] * kc - ws.c[i] * ks);
        }
    }

    /// max_i h sum_j (K^n_ij)^2, the discrete counterpart of K1.
    double discrete_row_mass() const {
        double best = 0.0;
        for (std::size_t i = 0; i < Kn_.n(); ++i) {
            double acc = 0.0;
            for (double v : Kn_.row(i)) acc += v * v;
            best = std::max(best, acc * Kn_.h());
        }
        return best;
    }

private:
    KernelMatrix Kn_;
    Interaction S_;
    bool use_fft_ = false;
    std::vector<fft::complex> symbol_;
};

inline GridFunction apply_nonlocal(const KernelMatrix& Kn, const Interaction& S, const GridFunction& u,
                                   NonlocalPath path = NonlocalPath::automatic) {
    if (u.n() != Kn.n())
        throw InvalidArgument("resolution mismatch: state has " + std::to_string(u.n()) +
                              " cells, kernel " + std::to_string(Kn.n()));
    NonlocalOperator op(Kn, S, path);
    NonlocalWorkspace ws;
    GridFunction out(u.n());
    op.apply(u.values(), out.values(), ws);
    return out;
}

namespace detail {

inline void require_finite(std::span<const double> v, const char* what) {
    for (std::size_t i = 0; i < v.size(); ++i)
        if (!std::isfinite(v[i]))
            throw NonFiniteError(std::string("non-finite ") + what + " in cell " + std::to_string(i), i);
}

}  // namespace detail

/// One Euler-Maruyama step in place:
/// u <- u + f(t, u) dt + N(u) dt + dW.
inline void em_step_inplace(std::span<double> u, double t, double dt, const Drift& f,
                            const NonlocalOperator& op, std::span<const double> dW,
                            NonlocalWorkspace& ws, std::vector<double>& scratch) {
    detail::require_finite(u, "state");
    detail::require_finite(dW, "increment");
    scratch.resize(u.size());
    op.apply(u, scratch, ws);
    if (f.is_zero()) {
        for (std::size_t i = 0; i < u.size(); ++i) u[i] += scratch[i] * dt + dW[i];
    } else {
        for (std::size_t i = 0; i < u.size(); ++i) u[i] += (f(t, u[i]) + scratch[i]) * dt + dW[i];
    }
}

inline GridFunction em_step(const GridFunction& u, double t, double dt, const Drift& f,
                            const Interaction& S, const KernelMatrix& Kn, const GridFunction& dW) {
    if (!(dt > 0.0)) throw InvalidArgument("time step must be positive");
    if (u.n() != Kn.n() || dW.n() != u.n())
        throw InvalidArgument("em_step: state, kernel and increment resolutions differ");
    NonlocalOperator op(Kn, S);
    NonlocalWorkspace ws;
    std::vector<double> scratch;
    GridFunction out = u;
    em_step_inplace(out.values(), t, dt, f, op, dW.values(), ws, scratch);
    return out;
}

/// Everything about a problem at one spatial resolution that does not change
/// between trials. Immutable; share across threads.
class Discretization {
public:
    Discretization(const Problem& prob, std::size_t n, NonlocalPath path = NonlocalPath::automatic,
                   const ProjectionOptions& kopts = {})
        : n_(n),
          drift_(prob.drift),
          op_(project_kernel(prob.kernel, n, kopts), prob.interaction, path),
          initial_(project_to_grid(prob.initial, n)) {}

    std::size_t n() const noexcept { return n_; }
    const Drift& drift() const noexcept { return drift_; }
    const NonlocalOperator& op() const noexcept { return op_; }
    const GridFunction& initial() const noexcept { return initial_; }

private:
    std::size_t n_;
    Drift drift_;
    NonlocalOperator op_;
    GridFunction initial_;
};

struct Resolution {
    std::size_t n;
    double dt;
    auto operator<=>(const Resolution&) const = default;
};

/// Number of steps M = T / dt; fractional step counts are rejected.
inline std::size_t step_count(double T, double dt) {
    try {
        return step_ratio(T, dt);
    } catch (const IncommensurableGrids&) {
        throw InvalidArgument("T / dt = " + format_double(T / dt) + " is not a whole number of steps");
    }
}

/// A running Euler-Maruyama solve fed by fine noise increments.
class CoupledSolver {
public:
    CoupledSolver(std::shared_ptr<const Discretization> disc, double dt, std::size_t n_fine,
                  double dt_fine, double horizon, std::size_t record_every = 0)
        : disc_(std::move(disc)),
          dt_(dt),
          steps_(step_count(horizon, dt)),
          coarsener_(n_fine, dt_fine, disc_->n(), dt),
          state_(disc_->initial()),
          record_every_(record_every) {
        if (record_every_ > 0) record();
    }

    /// Feeds one fine increment; advances when a coarse increment completes.
    void push(std::span<const double> fine) {
        if (done()) return;
        if (coarsener_.push(fine)) {
            const double t = static_cast<double>(step_) * dt_;
            em_step_inplace(state_.values(), t, dt_, disc_->drift(), disc_->op(), coarsener_.value(),
                            ws_, scratch_);
            ++step_;
            if (check_bound_) check_bound();
            if (record_every_ > 0 && step_ % record_every_ == 0) record();
        }
    }

    bool done() const noexcept { return step_ >= steps_; }
    std::size_t steps() const noexcept { return steps_; }
    std::size_t fine_steps_needed() const noexcept { return steps_ * coarsener_.ratio(); }
    const GridFunction& state() const noexcept { return state_; }
    std::size_t n() const noexcept { return disc_->n(); }
    double dt() const noexcept { return dt_; }
    const std::vector<double>& times() const noexcept { return times_; }
    const std::vector<GridFunction>& trajectory() const noexcept { return trajectory_; }

    /// Check ||N(u)|| <= A_S sqrt(K1^n) after every step.
    void enable_bound_check() {
        check_bound_ = true;
        bound_ = disc_->op().interaction().bound() * std::sqrt(disc_->op().discrete_row_mass());
    }

private:
    void record() {
        times_.push_back(static_cast<double>(step_) * dt_);
        trajectory_.push_back(state_);
    }

    void check_bound() {
        std::vector<double> out(state_.n());
        disc_->op().apply(state_.values(), out, ws_);
        double acc = 0.0;
        for (double v : out) acc += v * v;
        const double norm = std::sqrt(acc * state_.h());
        if (norm > bound_ * (1.0 + 1e-12) + 1e-14)
            throw Error("nonlocal term exceeds A_S sqrt(K1): " + format_double(norm) + " > " +
                        format_double(bound_));
    }

    std::shared_ptr<const Discretization> disc_;
    double dt_;
    std::size_t steps_;
    std::size_t step_ = 0;
    IncrementCoarsener coarsener_;
    GridFunction state_;
    NonlocalWorkspace ws_;
    std::vector<double> scratch_;
    std::size_t record_every_;
    std::vector<double> times_;
    std::vector<GridFunction> trajectory_;
    bool check_bound_ = false;
    double bound_ = 0.0;
};

enum class Record { final, trajectory };

struct Trajectory {
    std::vector<double> times;
    std::vector<GridFunction> states;
    GridFunction final_state;
};

/// Integrates from P_n g with M = T/dt Euler-Maruyama steps driven by the
/// coarsening of `path` to (n, dt). With Record::trajectory every
/// `stride`-th state (and the initial one) is kept.
inline Trajectory integrate(const Problem& prob, std::size_t n, double dt, const NoisePath& path,
                            Record record = Record::final, std::size_t stride = 1,
                            NonlocalPath nonlocal = NonlocalPath::automatic) {
    prob.validate();
    auto disc = std::make_shared<const Discretization>(prob, n, nonlocal);
    CoupledSolver solver(disc, dt, path.n_fine, path.dt_fine, prob.horizon,
                         record == Record::trajectory ? std::max<std::size_t>(stride, 1) : 0);
    if (path.steps < solver.fine_steps_needed())
        throw InvalidArgument("noise path covers " + std::to_string(path.steps) + " fine steps, " +
                              std::to_string(solver.fine_steps_needed()) + " needed");
    for (std::size_t j = 0; !solver.done(); ++j) solver.push(path.row(j));
    return Trajectory{solver.times(), solver.trajectory(), solver.state()};
}

/// Solves at every (n, dt) in `points` with increments coarsened from one
/// fine path, so pairwise differences measure discretisation error only.
inline std::map<Resolution, GridFunction> coupled_solve(const Problem& prob,
                                                        const std::vector<Resolution>& points,
                                                        const NoisePath& path) {
    prob.validate();
    std::map<std::size_t, std::shared_ptr<const Discretization>> discs;
    std::vector<CoupledSolver> solvers;
    std::size_t needed = 0;
    for (const auto& pt : points) {
        auto& d = discs[pt.n];
        if (!d) d = std::make_shared<const Discretization>(prob, pt.n);
        solvers.emplace_back(d, pt.dt, path.n_fine, path.dt_fine, prob.horizon);
        needed = std::max(needed, solvers.back().fine_steps_needed());
    }
    if (path.steps < needed)
        throw InvalidArgument("noise path covers " + std::to_string(path.steps) + " fine steps, " +
                              std::to_string(needed) + " needed");
    for (std::size_t j = 0; j < needed; ++j)
        for (auto& s : solvers) s.push(path.row(j));
    std::map<Resolution, GridFunction> out;
    for (std::size_t k = 0; k < points.size(); ++k) out.emplace(points[k], solvers[k].state());
    return out;
}

/// Streamed variant: fine increments are synthesised on the fly from
/// (spec, n_fine, dt_fine, seed) and never stored.
inline std::map<Resolution, GridFunction> coupled_solve(const Problem& prob,
                                                        const std::vector<Resolution>& points,
                                                        std::size_t n_fine, double dt_fine,
                                                        std::uint64_t seed) {
    prob.validate();
    IncrementSynthesizer synth(prob.noise, n_fine, dt_fine);
    NoiseStream stream(synth, seed);
    std::map<std::size_t, std::shared_ptr<const Discretization>> discs;
    std::vector<CoupledSolver> solvers;
    std::size_t needed = 0;
    for (const auto& pt : points) {
        auto& d = discs[pt.n];
        if (!d) d = std::make_shared<const Discretization>(prob, pt.n);
        solvers.emplace_back(d, pt.dt, n_fine, dt_fine, prob.horizon);
        needed = std::max(needed, solvers.back().fine_steps_needed());
    }
    std::vector<double> fine(n_fine);
    for (std::size_t j = 0; j < needed; ++j) {
        stream.next(fine);
        for (auto& s : solvers) s.push(fine);
    }
    std::map<Resolution, GridFunction> out;
    for (std::size_t k = 0; k < points.size(); ++k) out.emplace(points[k], solvers[k].state());
    return out;
}

/// CSV with columns t, cell_0 ... cell_{n-1}.
inline void write_trajectory_csv(std::ostream& os, const std::vector<double>& times,
                                 const std::vector<GridFunction>& states) {
    if (states.empty()) return;
    os << 't';
    for (std::size_t i = 0; i < states.front().n(); ++i) os << ",cell_" << i;
    os << '\n';
    for (std::size_t k = 0; k < states.size(); ++k) {
        os << format_double(times[k]);
        for (double v : states[k].values()) os << ',' << format_double(v);
        os << '\n';
    }
}

}  // namespace gspde
