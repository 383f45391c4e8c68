#pragma once

// Log-log scatter with error bars and a fitted line, written as plain SVG.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "graphon_spde/format.hpp"

namespace gspde::cli {

struct LogLogPlot {
    std::string title;
    std::string xlabel;
    std::string ylabel;
    std::vector<double> x, y, err;  // err: one standard deviation of y
    bool has_fit = false;
    double slope = 0.0, intercept = 0.0, slope_stderr = 0.0;  // log y = intercept + slope log x
    std::string metadata;  // embedded verbatim (CDATA)
};

namespace svg_detail {

inline std::string esc(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string decade_label(int k) {
    if (k == 0) return "1";
    if (k == 1) return "10";
    return "1e" + std::to_string(k);
}

}  // namespace svg_detail

inline void write_svg(std::ostream& os, const LogLogPlot& p) {
    using svg_detail::esc;
    using svg_detail::num;
    const double W = 640, H = 480, left = 80, right = 30, top = 50, bottom = 60;
    const double pw = W - left - right, ph = H - top - bottom;

    // Data range in log10, padded out to whole decades.
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
    for (std::size_t i = 0; i < p.x.size(); ++i) {
        if (!(p.x[i] > 0.0) || !(p.y[i] > 0.0)) continue;
        xmin = std::min(xmin, std::log10(p.x[i]));
        xmax = std::max(xmax, std::log10(p.x[i]));
        const double e = i < p.err.size() ? p.err[i] : 0.0;
        const double lo = p.y[i] - e > 0.0 ? p.y[i] - e : p.y[i];
        ymin = std::min(ymin, std::log10(lo));
        ymax = std::max(ymax, std::log10(p.y[i] + e));
    }
    if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    const int dx0 = static_cast<int>(std::floor(xmin)), dx1 = std::max(dx0 + 1, static_cast<int>(std::ceil(xmax)));
    const int dy0 = static_cast<int>(std::floor(ymin)), dy1 = std::max(dy0 + 1, static_cast<int>(std::ceil(ymax)));
    auto X = [&](double lx) { return left + (lx - dx0) / (dx1 - dx0) * pw; };
    auto Y = [&](double ly) { return top + ph - (ly - dy0) / (dy1 - dy0) * ph; };

    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" viewBox=\"0 0 " << W << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    if (!p.metadata.empty()) os << "<metadata><![CDATA[\n" << p.metadata << "]]></metadata>\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << num(W / 2) << "\" y=\"28\" text-anchor=\"middle\" font-size=\"15\">" << esc(p.title)
       << "</text>\n";

    // Grid and ticks.
    os << "<g stroke=\"#ddd\" stroke-width=\"1\">\n";
    for (int k = dx0; k <= dx1; ++k)
        os << "<line x1=\"" << num(X(k)) << "\" y1=\"" << num(top) << "\" x2=\"" << num(X(k)) << "\" y2=\""
           << num(top + ph) << "\"/>\n";
    for (int k = dy0; k <= dy1; ++k)
        os << "<line x1=\"" << num(left) << "\" y1=\"" << num(Y(k)) << "\" x2=\"" << num(left + pw)
           << "\" y2=\"" << num(Y(k)) << "\"/>\n";
    os << "</g>\n<g stroke=\"black\" stroke-width=\"1\">\n";
    for (int k = dx0; k <= dx1; ++k)
        for (int m = 1; m <= (k < dx1 ? 9 : 1); ++m) {
            const double x = X(k + std::log10(m));
            os << "<line x1=\"" << num(x) << "\" y1=\"" << num(top + ph) << "\" x2=\"" << num(x) << "\" y2=\""
               << num(top + ph + (m == 1 ? 6 : 3)) << "\"/>\n";
        }
    for (int k = dy0; k <= dy1; ++k)
        for (int m = 1; m <= (k < dy1 ? 9 : 1); ++m) {
            const double y = Y(k + std::log10(m));
            os << "<line x1=\"" << num(left - (m == 1 ? 6 : 3)) << "\" y1=\"" << num(y) << "\" x2=\""
               << num(left) << "\" y2=\"" << num(y) << "\"/>\n";
        }
    os << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\""
       << num(ph) << "\" fill=\"none\"/>\n</g>\n";
    for (int k = dx0; k <= dx1; ++k)
        os << "<text x=\"" << num(X(k)) << "\" y=\"" << num(top + ph + 20) << "\" text-anchor=\"middle\">"
           << svg_detail::decade_label(k) << "</text>\n";
    for (int k = dy0; k <= dy1; ++k)
        os << "<text x=\"" << num(left - 10) << "\" y=\"" << num(Y(k) + 4) << "\" text-anchor=\"end\">"
           << svg_detail::decade_label(k) << "</text>\n";
    os << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(H - 15) << "\" text-anchor=\"middle\">"
       << esc(p.xlabel) << "</text>\n"
       << "<text x=\"18\" y=\"" << num(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
       << num(top + ph / 2) << ")\">" << esc(p.ylabel) << "</text>\n";

    // Fitted line over the data range.
    if (p.has_fit && std::isfinite(xmin)) {
        auto fy = [&](double lx) { return (p.intercept + p.slope * lx * std::log(10.0)) / std::log(10.0); };
        os << "<line x1=\"" << num(X(xmin)) << "\" y1=\"" << num(Y(fy(xmin))) << "\" x2=\"" << num(X(xmax))
           << "\" y2=\"" << num(Y(fy(xmax))) << "\" stroke=\"#c33\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"/>\n";
        char buf[96];
        std::snprintf(buf, sizeof buf, "slope = %.3f \xC2\xB1 %.3f", p.slope, p.slope_stderr);
        os << "<text x=\"" << num(left + pw - 8) << "\" y=\"" << num(top + 18)
           << "\" text-anchor=\"end\" fill=\"#c33\">" << buf << "</text>\n";
    }

    // Points with one-sigma bars; a bar reaching below zero is cut at the frame.
    os << "<g stroke=\"#1f4e9c\" fill=\"#1f4e9c\">\n";
    for (std::size_t i = 0; i < p.x.size(); ++i) {
        if (!(p.x[i] > 0.0) || !(p.y[i] > 0.0)) continue;
        const double cx = X(std::log10(p.x[i])), cy = Y(std::log10(p.y[i]));
        const double e = i < p.err.size() ? p.err[i] : 0.0;
        if (e > 0.0) {
            const double y_hi = Y(std::log10(p.y[i] + e));
            const double y_lo = p.y[i] - e > 0.0 ? Y(std::log10(p.y[i] - e)) : top + ph;
            os << "<line x1=\"" << num(cx) << "\" y1=\"" << num(y_lo) << "\" x2=\"" << num(cx) << "\" y2=\""
               << num(y_hi) << "\"/>\n"
               << "<line x1=\"" << num(cx - 4) << "\" y1=\"" << num(y_hi) << "\" x2=\"" << num(cx + 4)
               << "\" y2=\"" << num(y_hi) << "\"/>\n"
               << "<line x1=\"" << num(cx - 4) << "\" y1=\"" << num(y_lo) << "\" x2=\"" << num(cx + 4)
               << "\" y2=\"" << num(y_lo) << "\"/>\n";
        }
        os << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(cy) << "\" r=\"3.5\"/>\n";
    }
    os << "</g>\n</svg>\n";
}

}  // namespace gspde::cli
