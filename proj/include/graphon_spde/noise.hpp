#pragma once

#include <boost/random/normal_distribution.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "fft.hpp"
#include "format.hpp"
#include "grid.hpp"
#include "kernels.hpp"

namespace gspde {

/// Trigonometric eigenfunctions, all L^2-normalised:
///   periodic_cos  sqrt(2) cos(2 pi k x)
///   periodic_sin  sqrt(2) sin(2 pi k x)
///   dirichlet_sin sqrt(2) sin(pi k x)
enum class Basis { periodic_cos, periodic_sin, dirichlet_sin };

struct Mode {
    Basis basis;
    std::size_t k;
    double lambda;
};

inline double eigenfunction(const Mode& m, double x) {
    const double kk = static_cast<double>(m.k);
    switch (m.basis) {
        case Basis::periodic_cos:
            return std::numbers::sqrt2 * std::cos(2.0 * std::numbers::pi * kk * x);
        case Basis::periodic_sin:
            return std::numbers::sqrt2 * std::sin(2.0 * std::numbers::pi * kk * x);
        case Basis::dirichlet_sin:
            return std::numbers::sqrt2 * std::sin(std::numbers::pi * kk * x);
    }
    return 0.0;
}

namespace detail {

inline double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(x) / x; }

// Ratio of the cell average of e_k over a cell of width 1/n to the value of
// e_k at the cell midpoint.
inline double cell_average_factor(const Mode& m, std::size_t n) {
    const double kk = static_cast<double>(m.k);
    const double nn = static_cast<double>(n);
    return m.basis == Basis::dirichlet_sin ? sinc(std::numbers::pi * kk / (2.0 * nn))
                                           : sinc(std::numbers::pi * kk / nn);
}

}  // namespace detail

/// Exact cell averages P_n e_k.
inline GridFunction project_mode(const Mode& m, std::size_t n) {
    Partition p(n);
    GridFunction out(n);
    const double factor = detail::cell_average_factor(m, n);
    for (std::size_t i = 0; i < n; ++i) out[i] = factor * eigenfunction(m, p.midpoint(i));
    return out;
}

enum class NoiseFamily { periodic_fourier, dirichlet_sine, zero, custom };

/// Trace-class covariance Q given by an ordered list of eigenpairs.
///
/// periodic_fourier(s, M): Q = (-d^2/dx^2)^{-s/2} with periodic boundary
/// conditions on the zero-mean subspace. Retains M eigenpairs (M even): a cos
/// and a sin mode for k = 1..M/2, both with lambda = (2 pi k)^{-s}.
/// dirichlet_sine(s, M): lambda_k = (pi k)^{-s}, e_k = sqrt(2) sin(pi k x).
class QWienerSpec {
public:
    static QWienerSpec periodic_fourier(double s, std::size_t M) {
        check_s(s);
        if (M == 0 || M % 2 != 0)
            throw InvalidArgument("periodic spectrum needs an even, positive mode count M");
        QWienerSpec q(NoiseFamily::periodic_fourier, s, M);
        for (std::size_t k = 1; k <= M / 2; ++k) {
            const double lambda = std::pow(2.0 * std::numbers::pi * static_cast<double>(k), -s);
            q.modes_.push_back({Basis::periodic_cos, k, lambda});
            q.modes_.push_back({Basis::periodic_sin, k, lambda});
        }
        q.tail_ = 2.0 * std::pow(2.0 * std::numbers::pi, -s) * zeta_tail(s, M / 2);
        return q;
    }

    static QWienerSpec dirichlet_sine(double s, std::size_t M) {
        check_s(s);
        if (M == 0) throw InvalidArgument("dirichlet spectrum needs M >= 1");
        QWienerSpec q(NoiseFamily::dirichlet_sine, s, M);
        for (std::size_t k = 1; k <= M; ++k)
            q.modes_.push_back(
                {Basis::dirichlet_sin, k, std::pow(std::numbers::pi * static_cast<double>(k), -s)});
        q.tail_ = std::pow(std::numbers::pi, -s) * zeta_tail(s, M);
        return q;
    }

    static QWienerSpec zero() { return QWienerSpec(NoiseFamily::zero, 0.0, 0); }

    /// Explicit eigenpairs; eigenvalues must be positive and nonincreasing.
    static QWienerSpec custom(std::vector<Mode> modes) {
        for (std::size_t i = 0; i < modes.size(); ++i) {
            if (!(modes[i].lambda > 0.0)) throw InvalidArgument("eigenvalues must be positive");
            if (modes[i].k == 0) throw InvalidArgument("mode wavenumbers start at 1");
            if (i > 0 && modes[i].lambda > modes[i - 1].lambda)
                throw InvalidArgument("eigenvalues must be nonincreasing");
        }
        QWienerSpec q(NoiseFamily::custom, 0.0, modes.size());
        q.modes_ = std::move(modes);
        return q;
    }

    NoiseFamily family() const noexcept { return family_; }
    double s() const noexcept { return s_; }
    std::size_t M() const noexcept { return M_; }
    std::span<const Mode> modes() const noexcept { return modes_; }
    /// Sum of the eigenvalues beyond the truncation (exact, via zeta).
    double tail() const noexcept { return tail_; }

    std::string to_string() const {
        switch (family_) {
            case NoiseFamily::periodic_fourier:
                return "periodic:s=" + format_double(s_) + ",M=" + std::to_string(M_);
            case NoiseFamily::dirichlet_sine:
                return "dirichlet:s=" + format_double(s_) + ",M=" + std::to_string(M_);
            case NoiseFamily::zero:
                return "zero";
            case NoiseFamily::custom:
                return "custom:M=" + std::to_string(M_);
        }
        return {};
    }

private:
    QWienerSpec(NoiseFamily family, double s, std::size_t M) : family_(family), s_(s), M_(M) {}

    static void check_s(double s) {
        if (!(s > 1.0)) throw InvalidArgument("spectral exponent s must exceed 1 for trace class");
    }

    // sum_{k > K} k^{-s}
    static double zeta_tail(double s, std::size_t K) {
        double partial = 0.0;
        for (std::size_t k = K; k >= 1; --k) partial += std::pow(static_cast<double>(k), -s);
        return std::max(0.0, std::riemann_zeta(s) - partial);
    }

    NoiseFamily family_;
    double s_;
    std::size_t M_;
    std::vector<Mode> modes_;
    double tail_ = 0.0;
};

/// Parses `periodic:s=2.0,M=4096`, `dirichlet:s=2,M=64` or `zero`.
inline QWienerSpec parse_noise(std::string_view text) {
    auto [name, params] = detail::split_spec(text);
    if (name == "zero" || name == "none") return QWienerSpec::zero();
    if (name == "periodic" || name == "periodic_fourier") {
        const double M = detail::lookup(params, "M", text);
        return QWienerSpec::periodic_fourier(detail::lookup(params, "s", text),
                                             static_cast<std::size_t>(M));
    }
    if (name == "dirichlet" || name == "dirichlet_sine") {
        const double M = detail::lookup(params, "M", text);
        return QWienerSpec::dirichlet_sine(detail::lookup(params, "s", text),
                                           static_cast<std::size_t>(M));
    }
    throw InvalidArgument("unknown noise family '" + name + "'");
}

/// Sum of the retained eigenvalues.
inline double trace(const QWienerSpec& spec) {
    double acc = 0.0;
    for (const auto& m : spec.modes()) acc += m.lambda;
    return acc;
}

/// Analytic bound for omega_2(e_k, 1/n): 2 pi k / n for periodic modes,
/// pi k / n for Dirichlet sines, capped at 2 = 2 ||e_k||.
inline double modulus_bound(const Mode& m, std::size_t n) {
    const double kk = static_cast<double>(m.k);
    const double base = m.basis == Basis::dirichlet_sin ? std::numbers::pi * kk
                                                        : 2.0 * std::numbers::pi * kk;
    return std::min(base / static_cast<double>(n), 2.0);
}

/// Noise rate functional
///   Psi(n)^2 = inf_m { sum_{k<=m} lambda_k omega_2(e_k, 1/n)^2 + sum_{k>m} lambda_k },
/// with m ranging over the retained modes and the untruncated tail always added.
inline double psi(const QWienerSpec& spec, std::size_t n) {
    if (n == 0) throw InvalidArgument("psi needs n >= 1");
    const auto modes = spec.modes();
    double suffix = spec.tail();
    for (const auto& m : modes) suffix += m.lambda;
    double prefix = 0.0;
    double best = suffix;
    for (const auto& m : modes) {
        const double w = modulus_bound(m, n);
        prefix += m.lambda * w * w;
        suffix -= m.lambda;
        best = std::min(best, prefix + std::max(0.0, suffix));
    }
    return std::sqrt(std::max(0.0, best));
}

/// Per-trial random stream: the generator state is a pure function of
/// (root seed + stream index), independent of which thread runs it.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}
    double normal() { return dist_(engine_); }

private:
    std::mt19937_64 engine_;
    boost::random::normal_distribution<double> dist_;
};

inline std::uint64_t stream_seed(std::uint64_t root, std::size_t trial) {
    return root + static_cast<std::uint64_t>(trial);
}

/// Draws P_n(W(t + dt) - W(t)) = sum_k sqrt(lambda_k dt) xi_k P_n e_k.
///
/// Cell averages of trigonometric modes are the midpoint values times a sinc
/// factor, so the sum becomes a shifted inverse DFT of length n (periodic
/// modes) or 2n (when Dirichlet sines are present). Immutable; share freely.
class IncrementSynthesizer {
public:
    IncrementSynthesizer(const QWienerSpec& spec, std::size_t n, double dt) : n_(n), dt_(dt) {
        if (!(dt > 0.0)) throw InvalidArgument("time step must be positive");
        if (n == 0) throw InvalidArgument("synthesis resolution must be positive");
        const auto modes = spec.modes();
        if (modes.empty()) return;
        if (!fft::is_power_of_two(n))
            throw InvalidArgument("FFT synthesis needs a power-of-two resolution, got " +
                                  std::to_string(n));
        if (n < 2 * modes.size())
            throw InvalidArgument("aliasing: resolution " + std::to_string(n) + " is below 2*M = " +
                                  std::to_string(2 * modes.size()));
        bool dirichlet = false;
        for (const auto& m : modes) dirichlet = dirichlet || m.basis == Basis::dirichlet_sin;
        length_ = dirichlet ? 2 * n : n;
        const double L = static_cast<double>(length_);
        for (const auto& m : modes) {
            // Frequency index on the length-L grid and its half-cell phase.
            const std::size_t q =
                m.basis == Basis::dirichlet_sin ? m.k * length_ / (2 * n) : m.k * length_ / n;
            if (2 * q > length_)
                throw InvalidArgument("aliasing: mode k=" + std::to_string(m.k) +
                                      " exceeds the Nyquist limit of resolution " + std::to_string(n));
            const double amp = std::sqrt(m.lambda * dt) * std::numbers::sqrt2 *
                               detail::cell_average_factor(m, n);
            const double angle = std::numbers::pi * static_cast<double>(q) / L;
            fft::complex coeff = amp * fft::complex(std::cos(angle), std::sin(angle));
            if (m.basis != Basis::periodic_cos) coeff *= fft::complex(0.0, -1.0);
            entries_.push_back({q % length_, coeff});
        }
    }

    std::size_t n() const noexcept { return n_; }
    double dt() const noexcept { return dt_; }
    std::size_t mode_count() const noexcept { return entries_.size(); }

    /// Writes one increment into `out` (size n), consuming mode_count() normals.
    void draw(RandomStream& rng, std::span<double> out, std::vector<fft::complex>& work) const {
        if (entries_.empty()) {
            std::fill(out.begin(), out.end(), 0.0);
            return;
        }
        work.assign(length_, fft::complex(0.0, 0.0));
        for (const auto& e : entries_) work[e.bin] += rng.normal() * e.coeff;
        fft::transform(work, fft::Direction::backward);
        for (std::size_t i = 0; i < n_; ++i) out[i] = work[i].real();
    }

private:
    struct Entry {
        std::size_t bin;
        fft::complex coeff;
    };

    std::size_t n_;
    double dt_;
    std::size_t length_ = 0;
    std::vector<Entry> entries_;
};

/// Sequential generator of fine increments for one trial.
class NoiseStream {
public:
    NoiseStream(const IncrementSynthesizer& synth, std::uint64_t seed) : synth_(&synth), rng_(seed) {}

    void next(std::span<double> out) { synth_->draw(rng_, out, work_); }
    std::size_t n() const noexcept { return synth_->n(); }
    double dt() const noexcept { return synth_->dt(); }

private:
    const IncrementSynthesizer* synth_;
    RandomStream rng_;
    std::vector<fft::complex> work_;
};

/// Number of fine steps per coarse step; throws unless dt / dt_fine is a
/// positive integer up to rounding.
inline std::size_t step_ratio(double dt, double dt_fine) {
    if (!(dt > 0.0) || !(dt_fine > 0.0)) throw InvalidArgument("time steps must be positive");
    const double r = dt / dt_fine;
    const double k = std::round(r);
    if (k < 1.0 || std::abs(r - k) > 1e-9 * std::max(1.0, r))
        throw IncommensurableGrids("time step " + format_double(dt) + " is not a multiple of " +
                                   format_double(dt_fine));
    return static_cast<std::size_t>(k);
}

/// A stored realisation of fine increments, row-major (steps x n_fine).
struct NoisePath {
    std::size_t n_fine = 0;
    double dt_fine = 0.0;
    std::size_t steps = 0;
    std::uint64_t seed = 0;
    std::vector<double> increments;

    std::span<const double> row(std::size_t j) const { return {increments.data() + j * n_fine, n_fine}; }
    GridFunction slice(std::size_t j) const {
        auto r = row(j);
        return GridFunction(n_fine, std::vector<double>(r.begin(), r.end()));
    }
};

inline NoisePath sample_increments(const QWienerSpec& spec, std::size_t n_fine, double dt_fine,
                                   std::size_t steps, std::uint64_t seed) {
    IncrementSynthesizer synth(spec, n_fine, dt_fine);
    NoiseStream stream(synth, seed);
    NoisePath path{n_fine, dt_fine, steps, seed, std::vector<double>(steps * n_fine)};
    for (std::size_t j = 0; j < steps; ++j)
        stream.next(std::span<double>(path.increments.data() + j * n_fine, n_fine));
    return path;
}

/// Turns fine increments into increments at (n, dt): block-average in space,
/// then sum consecutive slices in time. Used identically by stored and
/// streamed paths, so both give the same bits.
class IncrementCoarsener {
public:
    IncrementCoarsener(std::size_t n_fine, double dt_fine, std::size_t n, double dt)
        : n_(n), block_(0), ratio_(step_ratio(dt, dt_fine)), acc_(n, 0.0) {
        if (n == 0 || n_fine % n != 0)
            throw IncommensurableGrids("resolution " + std::to_string(n) + " does not divide " +
                                       std::to_string(n_fine));
        block_ = n_fine / n;
    }

    std::size_t n() const noexcept { return n_; }
    std::size_t ratio() const noexcept { return ratio_; }

    /// Adds one fine slice; returns true when a coarse increment is complete,
    /// which is then available from value() until the next push.
    bool push(std::span<const double> fine) {
        if (count_ == ratio_) {
            std::fill(acc_.begin(), acc_.end(), 0.0);
            count_ = 0;
        }
        const double inv = 1.0 / static_cast<double>(block_);
        for (std::size_t i = 0; i < n_; ++i) {
            double s = 0.0;
            for (std::size_t b = 0; b < block_; ++b) s += fine[i * block_ + b];
            acc_[i] += block_ == 1 ? s : s * inv;
        }
        ++count_;
        return count_ == ratio_;
    }

    std::span<const double> value() const noexcept { return acc_; }

private:
    std::size_t n_;
    std::size_t block_;
    std::size_t ratio_;
    std::size_t count_ = 0;
    std::vector<double> acc_;
};

inline NoisePath coarsen_increments(const NoisePath& path, std::size_t n, double dt) {
    IncrementCoarsener c(path.n_fine, path.dt_fine, n, dt);
    NoisePath out{n, dt, path.steps / c.ratio(), path.seed, {}};
    out.increments.reserve(out.steps * n);
    for (std::size_t j = 0; j < out.steps * c.ratio(); ++j) {
        if (c.push(path.row(j))) {
            auto v = c.value();
            out.increments.insert(out.increments.end(), v.begin(), v.end());
        }
    }
    return out;
}

namespace detail {

template <class T>
void write_le(std::ostream& os, T value) {
    static_assert(sizeof(T) == 8);
    std::uint64_t bits;
    std::memcpy(&bits, &value, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    char buf[8];
    std::memcpy(buf, &bits, 8);
    os.write(buf, 8);
}

template <class T>
T read_le(std::istream& is) {
    char buf[8];
    if (!is.read(buf, 8)) throw InvalidArgument("noise dump truncated");
    std::uint64_t bits;
    std::memcpy(&bits, buf, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    T value;
    std::memcpy(&value, &bits, 8);
    return value;
}

}  // namespace detail

/// Binary dump: little-endian u64 n_fine, f64 dt_fine, u64 steps, u64 seed,
/// then steps * n_fine f64 increments.
inline void write_noise_path(std::ostream& os, const NoisePath& path) {
    detail::write_le<std::uint64_t>(os, path.n_fine);
    detail::write_le<double>(os, path.dt_fine);
    detail::write_le<std::uint64_t>(os, path.steps);
    detail::write_le<std::uint64_t>(os, path.seed);
    for (double v : path.increments) detail::write_le<double>(os, v);
}

inline NoisePath read_noise_path(std::istream& is) {
    NoisePath path;
    path.n_fine = detail::read_le<std::uint64_t>(is);
    path.dt_fine = detail::read_le<double>(is);
    path.steps = detail::read_le<std::uint64_t>(is);
    path.seed = detail::read_le<std::uint64_t>(is);
    path.increments.resize(path.n_fine * path.steps);
    for (auto& v : path.increments) v = detail::read_le<double>(is);
    return path;
}

}  // namespace gspde
