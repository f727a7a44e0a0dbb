#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "numerics.hpp"

namespace gfm {

enum class PlotKind { line, multi_line, heatmap, histogram };

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

/// Minimal SVG 1.1 plot. Numbers are printed with fixed precision so the
/// byte output depends only on the inputs.
struct SvgPlot {
    PlotKind kind = PlotKind::line;
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
    Matrix grid;              // heatmap values, row 0 drawn at the top
    std::vector<double> bins;  // histogram edges (size = counts + 1)
    std::vector<double> counts;
    bool log_x = false;
    bool log_y = false;
    int width = 480;
    int height = 360;

    std::string render() const;
};

namespace svg_detail {

constexpr double kLeft = 64.0, kRight = 16.0, kTop = 32.0, kBottom = 48.0;

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    std::string s(buf);
    if (s == "-0.00") s = "0.00";
    return s;
}

inline std::string tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline const char* palette(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
    return colors[i % 7];
}

struct Axis {
    double lo = 0.0, hi = 1.0;
    bool log = false;
    double a0 = 0.0, a1 = 1.0;  // pixel range

    double tr(double v) const { return log ? std::log10(v) : v; }
    double map(double v) const { return a0 + (tr(v) - lo) / (hi - lo) * (a1 - a0); }

    void fit(const std::vector<double>& values) {
        double mn = std::numeric_limits<double>::infinity(), mx = -mn;
        for (double v : values) {
            if (!std::isfinite(v) || (log && v <= 0.0)) continue;
            mn = std::min(mn, tr(v));
            mx = std::max(mx, tr(v));
        }
        if (!std::isfinite(mn)) mn = 0.0, mx = 1.0;
        if (mx - mn < 1e-12) {
            mn -= 0.5;
            mx += 0.5;
        }
        lo = mn;
        hi = mx;
    }
};

/// Interior viridis-like ramp on [0, 1].
inline std::string ramp(double u) {
    static const double stops[5][3] = {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
    u = std::clamp(u, 0.0, 1.0) * 4.0;
    const int i = std::min(3, static_cast<int>(u));
    const double f = u - i;
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(stops[i][0] + f * (stops[i + 1][0] - stops[i][0]))),
                  static_cast<int>(std::lround(stops[i][1] + f * (stops[i + 1][1] - stops[i][1]))),
                  static_cast<int>(std::lround(stops[i][2] + f * (stops[i + 1][2] - stops[i][2]))));
    return buf;
}

}  // namespace svg_detail

inline std::string SvgPlot::render() const {
    using namespace svg_detail;
    const double w = width, h = height;
    Axis ax, ay;
    ax.log = log_x;
    ay.log = log_y;
    ax.a0 = kLeft;
    ax.a1 = w - kRight;
    ay.a0 = h - kBottom;
    ay.a1 = kTop;

    std::string body;
    switch (kind) {
        case PlotKind::line:
        case PlotKind::multi_line: {
            if (series.empty()) throw std::invalid_argument("SvgPlot: no series");
            if (kind == PlotKind::line && series.size() != 1) throw std::invalid_argument("SvgPlot: line plot takes one series");
            std::vector<double> xs, ys;
            for (const auto& s : series) {
                if (s.x.size() != s.y.size()) throw std::invalid_argument("SvgPlot: series '" + s.label + "' x/y length mismatch");
                xs.insert(xs.end(), s.x.begin(), s.x.end());
                ys.insert(ys.end(), s.y.begin(), s.y.end());
            }
            ax.fit(xs);
            ay.fit(ys);
            for (std::size_t k = 0; k < series.size(); ++k) {
                std::string pts;
                for (std::size_t i = 0; i < series[k].x.size(); ++i) {
                    const double x = series[k].x[i], y = series[k].y[i];
                    if (!std::isfinite(x) || !std::isfinite(y) || (log_x && x <= 0) || (log_y && y <= 0)) continue;
                    if (!pts.empty()) pts += ' ';
                    pts += num(ax.map(x)) + "," + num(ay.map(y));
                }
                body += "<polyline fill=\"none\" stroke=\"" + std::string(palette(k)) + "\" stroke-width=\"1.5\" points=\"" +
                        pts + "\"/>\n";
                if (!series[k].label.empty()) {
                    const double ly = kTop + 14.0 * static_cast<double>(k) + 4.0;
                    body += "<text x=\"" + num(w - kRight - 4) + "\" y=\"" + num(ly + 4) +
                            "\" text-anchor=\"end\" font-size=\"11\" fill=\"" + palette(k) + "\">" +
                            escape(series[k].label) + "</text>\n";
                }
            }
            break;
        }
        case PlotKind::heatmap: {
            if (grid.rows == 0 || grid.cols == 0) throw std::invalid_argument("SvgPlot: empty heatmap");
            double mn = std::numeric_limits<double>::infinity(), mx = -mn;
            for (double v : grid.data) {
                if (!std::isfinite(v)) continue;
                mn = std::min(mn, v);
                mx = std::max(mx, v);
            }
            const double span = mx > mn ? mx - mn : 1.0;
            ax.lo = 0.0;
            ax.hi = static_cast<double>(grid.cols);
            ay.lo = 0.0;
            ay.hi = static_cast<double>(grid.rows);
            const double cw = (ax.a1 - ax.a0) / static_cast<double>(grid.cols);
            const double ch = (ay.a0 - ay.a1) / static_cast<double>(grid.rows);
            for (std::size_t r = 0; r < grid.rows; ++r)
                for (std::size_t c = 0; c < grid.cols; ++c) {
                    const double v = grid(r, c);
                    body += "<rect x=\"" + num(ax.a0 + cw * static_cast<double>(c)) + "\" y=\"" +
                            num(ay.a1 + ch * static_cast<double>(r)) + "\" width=\"" + num(cw) + "\" height=\"" + num(ch) +
                            "\" fill=\"" + (std::isfinite(v) ? ramp((v - mn) / span) : std::string("#ffffff")) + "\"/>\n";
                }
            body += "<text x=\"" + num(w - kRight) + "\" y=\"" + num(kTop - 6) + "\" text-anchor=\"end\" font-size=\"11\">range " +
                    tick(mn) + " to " + tick(mx) + "</text>\n";
            break;
        }
        case PlotKind::histogram: {
            if (bins.size() != counts.size() + 1 || counts.empty()) {
                throw std::invalid_argument("SvgPlot: histogram needs counts.size() + 1 bin edges");
            }
            ax.fit(bins);
            std::vector<double> ys = counts;
            ys.push_back(0.0);
            ay.fit(ys);
            ay.lo = std::min(ay.lo, 0.0);
            for (std::size_t i = 0; i < counts.size(); ++i) {
                const double x0 = ax.map(bins[i]), x1 = ax.map(bins[i + 1]);
                const double y0 = ay.map(0.0), y1 = ay.map(counts[i]);
                body += "<rect x=\"" + num(x0) + "\" y=\"" + num(y1) + "\" width=\"" + num(x1 - x0) + "\" height=\"" +
                        num(y0 - y1) + "\" fill=\"#1f77b4\" stroke=\"#ffffff\" stroke-width=\"0.5\"/>\n";
            }
            break;
        }
    }

    std::string axes;
    axes += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(h - kBottom) + "\" x2=\"" + num(w - kRight) + "\" y2=\"" +
            num(h - kBottom) + "\" stroke=\"#000000\"/>\n";
    axes += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) + "\" y2=\"" + num(h - kBottom) +
            "\" stroke=\"#000000\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double fx = ax.lo + (ax.hi - ax.lo) * i / 4.0;
        const double fy = ay.lo + (ay.hi - ay.lo) * i / 4.0;
        const double px = ax.a0 + (ax.a1 - ax.a0) * i / 4.0;
        const double py = ay.a0 + (ay.a1 - ay.a0) * i / 4.0;
        axes += "<text x=\"" + num(px) + "\" y=\"" + num(h - kBottom + 14) + "\" text-anchor=\"middle\" font-size=\"10\">" +
                tick(ax.log ? std::pow(10.0, fx) : fx) + "</text>\n";
        axes += "<text x=\"" + num(kLeft - 4) + "\" y=\"" + num(py + 3) + "\" text-anchor=\"end\" font-size=\"10\">" +
                tick(ay.log ? std::pow(10.0, fy) : fy) + "</text>\n";
    }
    axes += "<text x=\"" + num((kLeft + w - kRight) / 2) + "\" y=\"" + num(h - 12) + "\" text-anchor=\"middle\" font-size=\"12\">" +
            escape(x_label) + "</text>\n";
    axes += "<text x=\"14\" y=\"" + num((kTop + h - kBottom) / 2) + "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 " +
            num((kTop + h - kBottom) / 2) + ")\">" + escape(y_label) + "</text>\n";
    axes += "<text x=\"" + num(w / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) + "</text>\n";

    std::string out;
    out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + std::to_string(width) + "\" height=\"" +
           std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) + " " + std::to_string(height) +
           "\" font-family=\"sans-serif\">\n";
    out += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(width) + "\" height=\"" + std::to_string(height) +
           "\" fill=\"#ffffff\"/>\n";
    out += body;
    out += axes;
    out += "</svg>\n";
    return out;
}

inline SvgPlot histogram_plot(std::span<const double> values, std::size_t n_bins, std::string title, std::string x_label) {
    if (values.empty() || n_bins == 0) throw std::invalid_argument("histogram_plot: need values and bins");
    double mn = values[0], mx = values[0];
    for (double v : values) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    if (mx == mn) mx = mn + 1.0;
    SvgPlot p;
    p.kind = PlotKind::histogram;
    p.title = std::move(title);
    p.x_label = std::move(x_label);
    p.y_label = "count";
    p.counts.assign(n_bins, 0.0);
    for (std::size_t i = 0; i <= n_bins; ++i) p.bins.push_back(mn + (mx - mn) * static_cast<double>(i) / static_cast<double>(n_bins));
    for (double v : values) {
        auto b = static_cast<std::size_t>((v - mn) / (mx - mn) * static_cast<double>(n_bins));
        p.counts[std::min(b, n_bins - 1)] += 1.0;
    }
    return p;
}

}  // namespace gfm
