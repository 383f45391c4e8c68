#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "error.hpp"
#include "format.hpp"
#include "grid.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"

namespace gspde {

enum class GraphonKind { band, constant, product, custom };

/// Interaction kernel K(x, y) on the unit square.
///
/// Built-in kinds:
///   band(r)      K = 1 when min(|x-y|, 1-|x-y|) < r  (periodic band)
///   constant(c)  K = c
///   product      K = x*y
/// Band and constant kernels are translation invariant on the circle, so their
/// projections are circulant; that property is declared, never detected.
class Graphon {
public:
    using Evaluator = std::function<double(double, double)>;

    static Graphon band(double r) {
        if (!(r > 0.0 && r < 1.0)) throw InvalidArgument("band radius must lie in (0, 1)");
        Graphon g(GraphonKind::band, r);
        g.beta_ = 0.5;
        g.circulant_ = true;
        g.bound_ = 1.0;
        return g;
    }

    static Graphon constant(double c) {
        if (!std::isfinite(c)) throw InvalidArgument("constant kernel value must be finite");
        Graphon g(GraphonKind::constant, c);
        g.beta_ = 1.0;
        g.circulant_ = true;
        g.bound_ = std::abs(c);
        return g;
    }

    static Graphon product() {
        Graphon g(GraphonKind::product, 0.0);
        g.beta_ = 1.0;
        g.bound_ = 1.0;
        return g;
    }

    /// A user kernel integrated by quadrature. `circulant` must only be set when
    /// K(x, y) depends on (y - x) mod 1 alone.
    static Graphon custom(Evaluator f, std::optional<double> beta = std::nullopt,
                          bool circulant = false, std::string name = "custom") {
        if (!f) throw InvalidArgument("custom kernel needs an evaluator");
        Graphon g(GraphonKind::custom, 0.0);
        g.eval_ = std::move(f);
        g.beta_ = beta;
        g.circulant_ = circulant;
        g.name_ = std::move(name);
        return g;
    }

    GraphonKind kind() const noexcept { return kind_; }
    /// r for band, c for constant, unused otherwise.
    double parameter() const noexcept { return param_; }
    std::optional<double> beta() const noexcept { return beta_; }
    bool analytic() const noexcept { return kind_ != GraphonKind::custom; }
    bool circulant() const noexcept { return circulant_; }
    std::optional<double> bound() const noexcept { return bound_; }

    double operator()(double x, double y) const {
        switch (kind_) {
            case GraphonKind::band: {
                const double d = std::abs(x - y);
                return std::min(d, 1.0 - d) < param_ ? 1.0 : 0.0;
            }
            case GraphonKind::constant:
                return param_;
            case GraphonKind::product:
                return x * y;
            case GraphonKind::custom:
                return eval_(x, y);
        }
        return 0.0;
    }

    /// Config-file name, e.g. `band:r=0.25`.
    std::string to_string() const {
        switch (kind_) {
            case GraphonKind::band:
                return "band:r=" + format_double(param_);
            case GraphonKind::constant:
                return "constant:c=" + format_double(param_);
            case GraphonKind::product:
                return "product";
            case GraphonKind::custom:
                return name_;
        }
        return {};
    }

private:
    Graphon(GraphonKind kind, double param) : kind_(kind), param_(param) {}

    GraphonKind kind_;
    double param_;
    std::optional<double> beta_;
    bool circulant_ = false;
    std::optional<double> bound_;
    Evaluator eval_;
    std::string name_;
};

namespace detail {

/// Splits "name:k1=v1,k2=v2" into the name and key/value pairs.
inline std::pair<std::string, std::vector<std::pair<std::string, std::string>>> split_spec(
    std::string_view text) {
    auto trim = [](std::string_view s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
        return s;
    };
    text = trim(text);
    const auto colon = text.find(':');
    std::string name(trim(text.substr(0, colon)));
    std::vector<std::pair<std::string, std::string>> params;
    if (colon != std::string_view::npos) {
        std::string_view rest = text.substr(colon + 1);
        while (!rest.empty()) {
            const auto comma = rest.find(',');
            std::string_view item = trim(rest.substr(0, comma));
            if (!item.empty()) {
                const auto eq = item.find('=');
                if (eq == std::string_view::npos)
                    throw InvalidArgument("expected key=value in '" + std::string(text) + "'");
                params.emplace_back(std::string(trim(item.substr(0, eq))),
                                    std::string(trim(item.substr(eq + 1))));
            }
            if (comma == std::string_view::npos) break;
            rest = rest.substr(comma + 1);
        }
    }
    return {name, params};
}

inline double lookup(const std::vector<std::pair<std::string, std::string>>& params,
                     const std::string& key, std::string_view context) {
    for (const auto& [k, v] : params)
        if (k == key) return parse_double(v);
    throw InvalidArgument("'" + std::string(context) + "' is missing parameter " + key);
}

}  // namespace detail

/// Parses `band:r=0.25`, `constant:c=1.0` or `product`.
inline Graphon parse_graphon(std::string_view text) {
    auto [name, params] = detail::split_spec(text);
    if (name == "band") return Graphon::band(detail::lookup(params, "r", text));
    if (name == "constant") return Graphon::constant(detail::lookup(params, "c", text));
    if (name == "product") return Graphon::product();
    throw InvalidArgument("unknown kernel kind '" + name + "'");
}

/// Galerkin coefficients K^n_ij = h^-2 * integral of K over cell_i x cell_j.
class KernelMatrix {
public:
    KernelMatrix(std::size_t n, std::vector<double> coeffs, std::optional<double> source_beta = {},
                 bool circulant = false)
        : n_(n), coeffs_(std::move(coeffs)), source_beta_(source_beta), circulant_(circulant) {
        if (n == 0) throw InvalidArgument("kernel matrix needs n >= 1");
        if (coeffs_.size() != n * n) throw InvalidArgument("kernel matrix needs n*n coefficients");
    }

    std::size_t n() const noexcept { return n_; }
    double h() const noexcept { return 1.0 / static_cast<double>(n_); }
    double operator()(std::size_t i, std::size_t j) const { return coeffs_[i * n_ + j]; }
    std::span<const double> row(std::size_t i) const { return {coeffs_.data() + i * n_, n_}; }
    std::span<const double> coeffs() const noexcept { return coeffs_; }
    std::optional<double> source_beta() const noexcept { return source_beta_; }
    /// Declared by the source kernel; enables the FFT product.
    bool circulant() const noexcept { return circulant_; }

private:
    std::size_t n_;
    std::vector<double> coeffs_;
    std::optional<double> source_beta_;
    bool circulant_;
};

namespace detail {

// Integral over [a, b] of the tent max(0, h - |d - c|).
inline double tent_integral(double a, double b, double c, double h) {
    auto antiderivative = [c, h](double x) {
        if (x <= c - h) return 0.0;
        if (x <= c) {
            const double t = x - c + h;
            return 0.5 * t * t;
        }
        if (x <= c + h) {
            const double t = c + h - x;
            return h * h - 0.5 * t * t;
        }
        return h * h;
    };
    if (b <= a) return 0.0;
    return antiderivative(b) - antiderivative(a);
}

// For x uniform on cell i and y uniform on cell j, d = y - x has the tent
// density centred at (j - i) h. The periodic band is {d : dist(d, Z) < r},
// which inside [-1, 1] is three intervals.
inline double band_cell_mean(double r, std::ptrdiff_t offset, std::size_t n) {
    if (r >= 0.5) return 1.0;
    const double h = 1.0 / static_cast<double>(n);
    const double c = static_cast<double>(offset) * h;
    const double area = tent_integral(-1.0, -1.0 + r, c, h) + tent_integral(-r, r, c, h) +
                        tent_integral(1.0 - r, 1.0, c, h);
    return area / (h * h);
}

// Length of {y in [lo, hi] : dist(y - x, Z) < r}.
inline double band_overlap(double r, double x, double lo, double hi) {
    if (r >= 0.5) return hi - lo;
    double len = 0.0;
    for (int shift = -1; shift <= 1; ++shift) {
        const double a = std::max(lo, x - r + shift);
        const double b = std::min(hi, x + r + shift);
        if (b > a) len += b - a;
    }
    return len;
}

}  // namespace detail

struct ProjectionOptions {
    double tol = 1e-10;
    std::size_t max_intervals = 1000;
    std::size_t threads = 1;
};

/// Projects K onto the n x n piecewise-constant coefficients. Band, constant and
/// product kernels use closed forms; custom kernels use adaptive Gauss-Kronrod
/// per cell pair and raise QuadratureError for the worst failing pair.
inline KernelMatrix project_kernel(const Graphon& K, std::size_t n, const ProjectionOptions& opts = {}) {
    if (n == 0) throw InvalidArgument("kernel projection needs n >= 1");
    if (!(opts.tol > 0.0)) throw InvalidArgument("quadrature tolerance must be positive");
    std::vector<double> coeffs(n * n);
    Partition p(n);
    switch (K.kind()) {
        case GraphonKind::constant:
            std::fill(coeffs.begin(), coeffs.end(), K.parameter());
            break;
        case GraphonKind::band: {
            // Entry depends on (j - i) mod n only; compute one row and rotate.
            std::vector<double> first(n);
            for (std::size_t j = 0; j < n; ++j)
                first[j] = detail::band_cell_mean(K.parameter(), static_cast<std::ptrdiff_t>(j), n);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) coeffs[i * n + j] = first[(j + n - i) % n];
            break;
        }
        case GraphonKind::product: {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) coeffs[i * n + j] = p.midpoint(i) * p.midpoint(j);
            break;
        }
        case GraphonKind::custom: {
            quadrature::Options q{opts.tol, opts.max_intervals};
            std::vector<double> errors(n * n, 0.0);
            std::vector<char> ok(n * n, 1);
            parallel_for(n, opts.threads, [&](std::size_t i) {
                for (std::size_t j = 0; j < n; ++j) {
                    auto r = quadrature::mean_over_square(K, p.left(i), p.right(i), p.left(j),
                                                          p.right(j), q);
                    coeffs[i * n + j] = r.value;
                    errors[i * n + j] = r.error;
                    ok[i * n + j] = r.converged ? 1 : 0;
                }
            });
            std::size_t worst = n * n;
            for (std::size_t k = 0; k < n * n; ++k)
                if (!ok[k] && (worst == n * n || errors[k] > errors[worst])) worst = k;
            if (worst != n * n)
                throw QuadratureError("kernel quadrature did not converge within budget", worst / n,
                                      worst % n, errors[worst]);
            break;
        }
    }
    return KernelMatrix(n, std::move(coeffs), K.beta(), K.circulant());
}

struct KernelBounds {
    double k1;  // ess sup_x  int K(x,y)^2 dy
    double k2;  // ess sup_y  int K(x,y)^2 dx
};

/// Row and column L^2 mass bounds. Exact for the analytic kinds; for custom
/// kernels the supremum is taken over `resolution` midpoints.
inline KernelBounds kernel_bounds(const Graphon& K, std::size_t resolution) {
    if (resolution == 0) throw InvalidArgument("kernel_bounds needs resolution >= 1");
    switch (K.kind()) {
        case GraphonKind::band: {
            const double v = std::min(2.0 * K.parameter(), 1.0);
            return {v, v};
        }
        case GraphonKind::constant: {
            const double v = K.parameter() * K.parameter();
            return {v, v};
        }
        case GraphonKind::product:
            return {1.0 / 3.0, 1.0 / 3.0};
        case GraphonKind::custom:
            break;
    }
    Partition p(resolution);
    bool finite = true;
    auto sq = [&](double x, double y) {
        const double v = K(x, y);
        if (!std::isfinite(v)) finite = false;
        return v * v;
    };
    quadrature::Options q{1e-10, 1000};
    double k1 = 0.0;
    double k2 = 0.0;
    for (std::size_t i = 0; i < resolution; ++i) {
        const double s = p.midpoint(i);
        k1 = std::max(k1, quadrature::integrate([&](double y) { return sq(s, y); }, 0.0, 1.0, q).value);
        k2 = std::max(k2, quadrature::integrate([&](double x) { return sq(x, s); }, 0.0, 1.0, q).value);
        if (!finite) throw InvalidArgument("kernel evaluator returned a non-finite value");
    }
    return {k1, k2};
}

enum class KernelNorm { L2xy, L1y_Linfx };

/// Distance between K and its projection Kn.
///
/// L2xy is exact per coarse cell: ||K - c||^2 over a cell equals
/// int K^2 - h^2 c^2, and int K^2 has a closed form for the analytic kinds.
/// L1y_Linfx takes the sup over the midpoints of a `resolution`-cell grid in x
/// of the exact (band) or quadrature (other kinds) row integral.
inline double projection_error(const Graphon& K, const KernelMatrix& Kn, KernelNorm norm,
                               std::size_t resolution) {
    const std::size_t n = Kn.n();
    if (resolution == 0 || resolution % n != 0)
        throw IncommensurableGrids("resolution " + std::to_string(resolution) +
                                   " is not a multiple of " + std::to_string(n));
    Partition p(n);
    const double h = p.h();
    quadrature::Options q{1e-12, 1000};

    if (norm == KernelNorm::L2xy) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const double c = Kn(i, j);
                double mean_sq = 0.0;
                switch (K.kind()) {
                    case GraphonKind::band:
                        mean_sq = detail::band_cell_mean(K.parameter(),
                                                         static_cast<std::ptrdiff_t>(j) -
                                                             static_cast<std::ptrdiff_t>(i),
                                                         n);
                        break;
                    case GraphonKind::constant:
                        mean_sq = K.parameter() * K.parameter();
                        break;
                    case GraphonKind::product: {
                        auto m2 = [&](std::size_t k) {
                            const double a = p.left(k), b = p.right(k);
                            return (b * b * b - a * a * a) / (3.0 * h);
                        };
                        mean_sq = m2(i) * m2(j);
                        break;
                    }
                    case GraphonKind::custom: {
                        auto sq = [&](double x, double y) {
                            const double v = K(x, y);
                            return v * v;
                        };
                        mean_sq = quadrature::mean_over_square(sq, p.left(i), p.right(i), p.left(j),
                                                               p.right(j), q)
                                      .value;
                        break;
                    }
                }
                acc += h * h * std::max(0.0, mean_sq - c * c);
            }
        }
        return std::sqrt(acc);
    }

    Partition fine(resolution);
    double worst = 0.0;
    for (std::size_t k = 0; k < resolution; ++k) {
        const double x = fine.midpoint(k);
        const std::size_t i = p.cell_of(x);
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double c = Kn(i, j);
            const double lo = p.left(j), hi = p.right(j);
            switch (K.kind()) {
                case GraphonKind::band: {
                    const double len = detail::band_overlap(K.parameter(), x, lo, hi);
                    row += std::abs(1.0 - c) * len + std::abs(c) * (h - len);
                    break;
                }
                case GraphonKind::constant:
                    row += std::abs(K.parameter() - c) * h;
                    break;
                default:
                    row += quadrature::integrate([&](double y) { return std::abs(K(x, y) - c); }, lo,
                                                 hi, q)
                               .value;
                    break;
            }
        }
        worst = std::max(worst, row);
    }
    return worst;
}

/// CSV layout: first line holds n, then n rows of n comma-separated values.
inline void write_csv(std::ostream& os, const KernelMatrix& K) {
    os << K.n() << '\n';
    for (std::size_t i = 0; i < K.n(); ++i) {
        auto row = K.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) os << ',';
            os << format_double(row[j]);
        }
        os << '\n';
    }
}

inline KernelMatrix read_kernel_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw InvalidArgument("kernel CSV: empty input");
    const auto n = parse_u64(line);
    if (n == 0) throw InvalidArgument("kernel CSV: zero resolution");
    std::vector<double> coeffs;
    coeffs.reserve(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::getline(is, line)) throw InvalidArgument("kernel CSV: missing row " + std::to_string(i));
        std::string_view rest = line;
        std::size_t count = 0;
        while (true) {
            const auto comma = rest.find(',');
            coeffs.push_back(parse_double(rest.substr(0, comma)));
            ++count;
            if (comma == std::string_view::npos) break;
            rest = rest.substr(comma + 1);
        }
        if (count != n) throw InvalidArgument("kernel CSV: row " + std::to_string(i) + " has wrong length");
    }
    return KernelMatrix(n, std::move(coeffs));
}

}  // namespace gspde
