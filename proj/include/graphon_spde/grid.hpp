#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "error.hpp"
#include "format.hpp"
#include "quadrature.hpp"

namespace gspde {

/// Uniform partition of I = [0, 1] into n half-open cells (x_{i-1}, x_i].
/// Cells are indexed from 0 here; cell i covers (i/n, (i+1)/n].
class Partition {
public:
    explicit Partition(std::size_t n) : n_(n) {
        if (n == 0) throw InvalidArgument("partition needs at least one cell");
    }

    std::size_t n() const noexcept { return n_; }
    double h() const noexcept { return 1.0 / static_cast<double>(n_); }

    /// Left and right endpoints of cell i.
    double left(std::size_t i) const noexcept { return static_cast<double>(i) / static_cast<double>(n_); }
    double right(std::size_t i) const noexcept { return static_cast<double>(i + 1) / static_cast<double>(n_); }
    double midpoint(std::size_t i) const noexcept {
        return (static_cast<double>(i) + 0.5) / static_cast<double>(n_);
    }

    /// Cell containing x. The point 0 belongs to the first cell.
    std::size_t cell_of(double x) const noexcept {
        if (!(x > 0.0)) return 0;
        const double scaled = std::ceil(x * static_cast<double>(n_));
        if (scaled < 1.0) return 0;
        return std::min(static_cast<std::size_t>(scaled) - 1, n_ - 1);
    }

    bool operator==(const Partition&) const = default;

private:
    std::size_t n_;
};

/// Piecewise-constant function sum_i u_i * chi_i(x) on a uniform partition.
class GridFunction {
public:
    explicit GridFunction(std::size_t n, double fill = 0.0) : partition_(n), values_(n, fill) {}

    GridFunction(std::size_t n, std::vector<double> values)
        : partition_(n), values_(std::move(values)) {
        if (values_.size() != n)
            throw InvalidArgument("grid function of resolution " + std::to_string(n) + " given " +
                                  std::to_string(values_.size()) + " values");
    }

    const Partition& partition() const noexcept { return partition_; }
    std::size_t n() const noexcept { return partition_.n(); }
    double h() const noexcept { return partition_.h(); }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }

    /// Point evaluation (left-open cells).
    double operator()(double x) const { return values_[partition_.cell_of(x)]; }

    GridFunction& operator+=(const GridFunction& other) {
        require_same(other);
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
        return *this;
    }
    GridFunction& operator-=(const GridFunction& other) {
        require_same(other);
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
        return *this;
    }
    GridFunction& operator*=(double a) {
        for (auto& v : values_) v *= a;
        return *this;
    }

    friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
    friend GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
    friend GridFunction operator*(double a, GridFunction b) { return b *= a; }

    bool operator==(const GridFunction&) const = default;

private:
    void require_same(const GridFunction& other) const {
        if (other.n() != n())
            throw InvalidArgument("resolution mismatch: " + std::to_string(n()) + " vs " +
                                  std::to_string(other.n()));
    }

    Partition partition_;
    std::vector<double> values_;
};

/// ||u||_{L^2(I)} of a step function.
inline double l2_norm(const GridFunction& u) {
    double acc = 0.0;
    for (double v : u.values()) acc += v * v;
    return std::sqrt(acc * u.h());
}

inline bool commensurable(std::size_t a, std::size_t b) noexcept {
    return a > 0 && b > 0 && (a % b == 0 || b % a == 0);
}

/// L^2 projection of a step function onto the n-cell grid. Coarsening averages
/// blocks; refining (n a multiple of the input resolution) is exact copying.
inline GridFunction project_to_grid(const GridFunction& u, std::size_t n) {
    if (n == 0) throw InvalidArgument("resolution must be positive");
    const std::size_t m = u.n();
    if (m == n) return u;
    if (m % n == 0) {
        const std::size_t block = m / n;
        GridFunction out(n);
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t k = 0; k < block; ++k) acc += u[i * block + k];
            out[i] = acc / static_cast<double>(block);
        }
        return out;
    }
    if (n % m == 0) {
        const std::size_t block = n / m;
        GridFunction out(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = u[i / block];
        return out;
    }
    throw IncommensurableGrids(std::to_string(m) + " and " + std::to_string(n));
}

/// L^2 projection of an evaluable function: adaptive Gauss-Kronrod cell means.
template <class F>
    requires(std::is_invocable_r_v<double, F, double> && !std::same_as<std::remove_cvref_t<F>, GridFunction>)
GridFunction project_to_grid(F&& f, std::size_t n, quadrature::Options opts = {1e-12, 1000}) {
    if (n == 0) throw InvalidArgument("resolution must be positive");
    Partition p(n);
    GridFunction out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = p.left(i);
        const double b = p.right(i);
        auto scaled = [&](double s) { return f(a + (b - a) * s); };
        auto r = quadrature::integrate(scaled, 0.0, 1.0, opts);
        if (!r.converged)
            throw QuadratureError("cell mean did not converge", i, i, r.error);
        out[i] = r.value;
    }
    return out;
}

/// Exact L^2(I) distance of two step functions on their common refinement.
inline double l2_distance(const GridFunction& u, const GridFunction& v) {
    if (!commensurable(u.n(), v.n()))
        throw IncommensurableGrids(std::to_string(u.n()) + " and " + std::to_string(v.n()));
    const GridFunction& fine = u.n() >= v.n() ? u : v;
    const GridFunction& coarse = u.n() >= v.n() ? v : u;
    const std::size_t block = fine.n() / coarse.n();
    double acc = 0.0;
    for (std::size_t i = 0; i < fine.n(); ++i) {
        const double d = fine[i] - coarse[i / block];
        acc += d * d;
    }
    return std::sqrt(acc * fine.h());
}

/// Numerical L^p modulus of continuity omega_p(f, delta).
struct Modulus {
    double p;
    double delta;
    double value;
};

namespace detail {

inline void check_modulus_args(double p, double delta, std::size_t n_samples) {
    if (!(p >= 1.0)) throw InvalidArgument("modulus exponent p must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("modulus shift bound must lie in (0, 1)");
    if (n_samples == 0) throw InvalidArgument("modulus needs at least one sample");
}

inline double lp_root(double acc, double p) { return p == 1.0 ? acc : std::pow(acc, 1.0 / p); }

}  // namespace detail

/// Modulus of a step function. The shift supremum is taken over the uniform
/// grid eta_j = j * delta / n_samples (j = 1..n_samples), so the result
/// under-approximates the true supremum; each shifted integral is exact.
/// Negative shifts give the same integrals by substitution and are skipped.
inline Modulus modulus_of_continuity(const GridFunction& f, double p, double delta,
                                     std::size_t n_samples) {
    detail::check_modulus_args(p, delta, n_samples);
    const std::size_t m = f.n();
    const double inv_m = 1.0 / static_cast<double>(m);
    double best = 0.0;
    std::vector<double> cuts;
    cuts.reserve(2 * m + 2);
    for (std::size_t j = 1; j <= n_samples; ++j) {
        const double eta = delta * static_cast<double>(j) / static_cast<double>(n_samples);
        const double end = 1.0 - eta;
        cuts.clear();
        cuts.push_back(0.0);
        cuts.push_back(end);
        for (std::size_t k = 1; k < m; ++k) {
            const double xk = static_cast<double>(k) * inv_m;
            if (xk < end) cuts.push_back(xk);
            const double shifted = xk - eta;
            if (shifted > 0.0 && shifted < end) cuts.push_back(shifted);
        }
        std::sort(cuts.begin(), cuts.end());
        double acc = 0.0;
        for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
            const double len = cuts[k + 1] - cuts[k];
            if (len <= 0.0) continue;
            const double mid = 0.5 * (cuts[k] + cuts[k + 1]);
            const double d = std::abs(f(mid + eta) - f(mid));
            acc += std::pow(d, p) * len;
        }
        best = std::max(best, detail::lp_root(acc, p));
    }
    return Modulus{p, delta, best};
}

/// Modulus of an evaluable function: same shift grid, midpoint rule with
/// n_samples points on each overlap interval [0, 1 - eta].
template <class F>
    requires(std::is_invocable_r_v<double, F, double> && !std::same_as<std::remove_cvref_t<F>, GridFunction>)
Modulus modulus_of_continuity(F&& f, double p, double delta, std::size_t n_samples) {
    detail::check_modulus_args(p, delta, n_samples);
    double best = 0.0;
    for (std::size_t j = 1; j <= n_samples; ++j) {
        const double eta = delta * static_cast<double>(j) / static_cast<double>(n_samples);
        const double len = (1.0 - eta) / static_cast<double>(n_samples);
        double acc = 0.0;
        for (std::size_t k = 0; k < n_samples; ++k) {
            const double x = (static_cast<double>(k) + 0.5) * len;
            acc += std::pow(std::abs(f(x + eta) - f(x)), p);
        }
        best = std::max(best, detail::lp_root(acc * len, p));
    }
    return Modulus{p, delta, best};
}

/// CSV layout: a `n,h` header, the values of n and h, then one cell value per line.
inline void write_csv(std::ostream& os, const GridFunction& u) {
    os << "n,h\n" << u.n() << ',' << format_double(u.h()) << '\n';
    for (double v : u.values()) os << format_double(v) << '\n';
}

inline GridFunction read_grid_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("n,h", 0) != 0)
        throw InvalidArgument("grid CSV: missing 'n,h' header");
    if (!std::getline(is, line)) throw InvalidArgument("grid CSV: missing size row");
    const auto comma = line.find(',');
    const auto n = parse_u64(line.substr(0, comma));
    if (n == 0) throw InvalidArgument("grid CSV: zero resolution");
    std::vector<double> values;
    values.reserve(n);
    while (values.size() < n && std::getline(is, line)) {
        if (line.empty()) continue;
        values.push_back(parse_double(line));
    }
    if (values.size() != n)
        throw InvalidArgument("grid CSV: expected " + std::to_string(n) + " values, got " +
                              std::to_string(values.size()));
    return GridFunction(n, std::move(values));
}

}  // namespace gspde
