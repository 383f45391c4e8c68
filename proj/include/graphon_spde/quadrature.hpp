#pragma once

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <array>
#include <cmath>
#include <cstddef>
#include <queue>
#include <vector>

namespace gspde::quadrature {

struct Result {
    double value = 0.0;
    double error = 0.0;       // absolute error estimate
    std::size_t intervals = 0;
    bool converged = false;
};

struct Options {
    double abs_tol = 1e-10;
    std::size_t max_intervals = 1000;
};

namespace detail {

struct Panel {
    double a;
    double b;
    double value;
    double error;
    bool operator<(const Panel& other) const { return error < other.error; }
};

// One 7-15 Gauss-Kronrod panel.
template <class F>
Panel gk15(F& f, double a, double b) {
    using kronrod = boost::math::quadrature::gauss_kronrod<double, 15>;
    using gauss = boost::math::quadrature::gauss<double, 7>;
    const auto& xk = kronrod::abscissa();
    const auto& wk = kronrod::weights();
    const auto& wg = gauss::weights();

    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const double f0 = f(mid);
    double k = wk[0] * f0;
    double g = wg[0] * f0;
    std::array<double, 8> lo{}, hi{};
    for (std::size_t i = 1; i < xk.size(); ++i) {
        const double dx = half * xk[i];
        lo[i] = f(mid - dx);
        hi[i] = f(mid + dx);
        const double pair = lo[i] + hi[i];
        k += wk[i] * pair;
        // Gauss nodes sit at the even Kronrod positions.
        if (i % 2 == 0) g += wg[i / 2] * pair;
    }
    // |K15 - G7| is blind to a jump in the gap between the outermost node and
    // the panel end. Charge each end gap with the miss of a cubic
    // extrapolation from the four outer nodes; for smooth f this is tiny.
    const std::size_t last = xk.size() - 1;
    const double gap = half * (1.0 - xk[last]);
    auto end_miss = [&](double end, const std::array<double, 8>& side) {
        const double fe = f(end);
        if (!std::isfinite(fe)) return 0.0;
        double pred = 0.0;
        for (std::size_t i = 0; i < 4; ++i) {
            const double xi = half * xk[last - i];
            double w = 1.0;
            for (std::size_t j = 0; j < 4; ++j)
                if (j != i) {
                    const double xj = half * xk[last - j];
                    w *= (half - xj) / (xi - xj);
                }
            pred += w * side[last - i];
        }
        return std::abs(fe - pred) * gap;
    };
    const double err = std::abs((k - g) * half) + end_miss(a, lo) + end_miss(b, hi);
    return Panel{a, b, k * half, err};
}

}  // namespace detail

/// Globally adaptive 7-15 Gauss-Kronrod on [a, b]. The panel with the largest
/// error estimate is bisected until the summed estimate drops below abs_tol or
/// the interval budget is spent.
template <class F>
Result integrate(F&& f, double a, double b, const Options& opts = {}) {
    std::priority_queue<detail::Panel> panels;
    auto first = detail::gk15(f, a, b);
    double value = first.value;
    double error = first.error;
    panels.push(first);
    std::size_t count = 1;

    while (error > opts.abs_tol && count < opts.max_intervals) {
        const auto worst = panels.top();
        panels.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a && mid < worst.b)) {
            panels.push(worst);
            break;
        }
        auto left = detail::gk15(f, worst.a, mid);
        auto right = detail::gk15(f, mid, worst.b);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        panels.push(left);
        panels.push(right);
        ++count;
    }

    // Re-sum to drop the drift accumulated by the incremental updates.
    double v = 0.0;
    double e = 0.0;
    while (!panels.empty()) {
        v += panels.top().value;
        e += panels.top().error;
        panels.pop();
    }
    return Result{v, e, count, e <= opts.abs_tol};
}

/// Mean of f over the square [a0,a1] x [b0,b1], nested adaptive rule.
/// The tolerance applies to the mean, so it is independent of the square's size.
template <class F>
Result mean_over_square(F&& f, double a0, double a1, double b0, double b1,
                        const Options& opts = {}) {
    const double wx = a1 - a0;
    const double wy = b1 - b0;
    double inner_error = 0.0;
    bool inner_ok = true;
    auto outer = [&](double s) {
        const double x = a0 + wx * s;
        auto row = [&](double t) { return f(x, b0 + wy * t); };
        auto r = integrate(row, 0.0, 1.0, opts);
        inner_error = std::max(inner_error, r.error);
        inner_ok = inner_ok && r.converged;
        return r.value;
    };
    auto r = integrate(outer, 0.0, 1.0, opts);
    r.error += inner_error;
    r.converged = r.converged && inner_ok;
    return r;
}

}  // namespace gspde::quadrature
