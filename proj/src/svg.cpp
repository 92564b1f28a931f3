#include "modlens/svg.hpp"

#include "modlens/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace modlens::svg {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string fmt_tick(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

struct Range {
    double lo = 0, hi = 1;
    double span() const { return hi - lo; }
};

Range from_values(const std::vector<double>& v) {
    Range r{1e300, -1e300};
    for (double x : v) {
        r.lo = std::min(r.lo, x);
        r.hi = std::max(r.hi, x);
    }
    if (r.lo > r.hi) r = {0, 1};
    if (r.span() == 0) {
        r.lo -= 0.5;
        r.hi += 0.5;
    }
    return r;
}

void header(std::string& s, int w, int h) {
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) +
         "\" height=\"" + std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " +
         std::to_string(h) + "\">\n";
    s += "<rect width=\"" + std::to_string(w) + "\" height=\"" + std::to_string(h) +
         "\" fill=\"#ffffff\"/>\n";
}

void text(std::string& s, double x, double y, const std::string& t, int size = 12,
          const std::string& anchor = "start") {
    s += "<text x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" font-family=\"sans-serif\" font-size=\"" +
         std::to_string(size) + "\" text-anchor=\"" + anchor + "\">" + t + "</text>\n";
}

void line(std::string& s, double x1, double y1, double x2, double y2,
          const std::string& color = "#333333", double width = 1.0) {
    s += "<line x1=\"" + fmt(x1) + "\" y1=\"" + fmt(y1) + "\" x2=\"" + fmt(x2) + "\" y2=\"" +
         fmt(y2) + "\" stroke=\"" + color + "\" stroke-width=\"" + fmt(width) + "\"/>\n";
}

std::vector<double> ticks(const Range& r, int count = 5) {
    std::vector<double> out;
    for (int i = 0; i <= count; ++i) out.push_back(r.lo + r.span() * i / count);
    return out;
}

} // namespace

std::string sequential_color(double t) {
    // Compact viridis-like ramp.
    static const int stops[][3] = {{68, 1, 84},    {59, 82, 139},  {33, 145, 140},
                                   {94, 201, 98},  {253, 231, 37}};
    t = std::clamp(t, 0.0, 1.0) * 3.999;
    const int i = static_cast<int>(t);
    const double f = t - i;
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x",
                  static_cast<int>(stops[i][0] + f * (stops[i + 1][0] - stops[i][0])),
                  static_cast<int>(stops[i][1] + f * (stops[i + 1][1] - stops[i][1])),
                  static_cast<int>(stops[i][2] + f * (stops[i + 1][2] - stops[i][2])));
    return buf;
}

std::string categorical_color(int k) {
    static const char* colors[10] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                     "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    return colors[((k % 10) + 10) % 10];
}

std::string render_curve(const CurveSpec& spec) {
    if (spec.series.empty()) throw DataError("render_curve: no series");
    for (const auto& s : spec.series)
        if (s.x.empty() || s.x.size() != s.y.size())
            throw DataError("render_curve: empty or mismatched series " + s.label);

    const double ml = 62, mr = 16, mt = 34, mb = 46;
    const double pw = spec.width - ml - mr;
    const double ph = spec.height - mt - mb;

    Range rx{1e300, -1e300}, ry{1e300, -1e300};
    for (const auto& s : spec.series) {
        const Range sx = from_values(s.x), sy = from_values(s.y);
        rx.lo = std::min(rx.lo, sx.lo);
        rx.hi = std::max(rx.hi, sx.hi);
        ry.lo = std::min(ry.lo, sy.lo);
        ry.hi = std::max(ry.hi, sy.hi);
    }
    if (rx.span() == 0) rx.hi += 1;
    if (ry.span() == 0) ry.hi += 1;

    auto px = [&](double x) { return ml + (x - rx.lo) / rx.span() * pw; };
    auto py = [&](double y) { return mt + ph - (y - ry.lo) / ry.span() * ph; };

    std::string s;
    header(s, spec.width, spec.height);
    text(s, spec.width / 2.0, 20, spec.title, 14, "middle");

    for (double t : ticks(ry)) {
        line(s, ml, py(t), ml + pw, py(t), "#dddddd", 0.6);
        text(s, ml - 6, py(t) + 4, fmt_tick(t), 10, "end");
    }
    for (double t : ticks(rx)) {
        line(s, px(t), mt + ph, px(t), mt + ph + 4);
        text(s, px(t), mt + ph + 16, fmt_tick(t), 10, "middle");
    }
    line(s, ml, mt, ml, mt + ph);
    line(s, ml, mt + ph, ml + pw, mt + ph);
    text(s, ml + pw / 2, spec.height - 10, spec.x_label, 12, "middle");
    s += "<text x=\"14\" y=\"" + fmt(mt + ph / 2) +
         "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
         fmt(mt + ph / 2) + ")\">" + spec.y_label + "</text>\n";

    double legend_y = mt + 8;
    for (const auto& ser : spec.series) {
        std::string pts;
        for (size_t i = 0; i < ser.x.size(); ++i)
            pts += fmt(px(ser.x[i])) + "," + fmt(py(ser.y[i])) + " ";
        s += "<polyline fill=\"none\" stroke=\"" + ser.color +
             "\" stroke-width=\"1.6\" points=\"" + pts + "\"/>\n";
        line(s, ml + pw - 120, legend_y, ml + pw - 96, legend_y, ser.color, 2.0);
        text(s, ml + pw - 90, legend_y + 4, ser.label, 11);
        legend_y += 16;
    }
    s += "</svg>\n";
    return s;
}

std::string render_heatmap(const HeatmapSpec& spec) {
    if (spec.values == nullptr || spec.values->rows == 0 || spec.values->cols == 0)
        throw DataError("render_heatmap: empty grid");
    if (spec.x_values.size() != static_cast<size_t>(spec.values->cols) ||
        spec.y_values.size() != static_cast<size_t>(spec.values->rows))
        throw DataError("render_heatmap: axis lengths disagree with the grid");

    const auto& m = *spec.values;
    const double ml = 60, mr = 74, mt = 34, mb = 46;
    const double pw = spec.width - ml - mr;
    const double ph = spec.height - mt - mb;
    const double cw = pw / static_cast<double>(m.cols);
    const double ch = ph / static_cast<double>(m.rows);

    double lo = m.v[0], hi = m.v[0];
    for (double v : m.v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi > lo ? hi - lo : 1.0;

    std::string s;
    header(s, spec.width, spec.height);
    text(s, spec.width / 2.0, 20, spec.title, 14, "middle");

    for (int64_t r = 0; r < m.rows; ++r) {
        for (int64_t c = 0; c < m.cols; ++c) {
            const double t = (m.at(r, c) - lo) / span;
            // y axis grows upward: row 0 at the bottom.
            const double x = ml + c * cw;
            const double y = mt + ph - (r + 1) * ch;
            s += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" width=\"" + fmt(cw + 0.5) +
                 "\" height=\"" + fmt(ch + 0.5) + "\" fill=\"" + sequential_color(t) + "\"/>\n";
        }
    }

    const int xtick = std::max<int>(1, static_cast<int>(m.cols / 5));
    for (int64_t c = 0; c < m.cols; c += xtick)
        text(s, ml + (c + 0.5) * cw, mt + ph + 16,
             fmt_tick(spec.x_values[static_cast<size_t>(c)]), 10, "middle");
    const int ytick = std::max<int>(1, static_cast<int>(m.rows / 5));
    for (int64_t r = 0; r < m.rows; r += ytick)
        text(s, ml - 6, mt + ph - (r + 0.5) * ch + 4,
             fmt_tick(spec.y_values[static_cast<size_t>(r)]), 10, "end");
    text(s, ml + pw / 2, spec.height - 10, spec.x_label, 12, "middle");
    s += "<text x=\"14\" y=\"" + fmt(mt + ph / 2) +
         "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
         fmt(mt + ph / 2) + ")\">" + spec.y_label + "</text>\n";

    // Color scale legend.
    const double lx = ml + pw + 16;
    const int steps = 24;
    for (int i = 0; i < steps; ++i) {
        const double t = (steps - 1.0 - i) / (steps - 1.0);
        s += "<rect x=\"" + fmt(lx) + "\" y=\"" + fmt(mt + i * ph / steps) + "\" width=\"14\" height=\"" +
             fmt(ph / steps + 0.5) + "\" fill=\"" + sequential_color(t) + "\"/>\n";
    }
    text(s, lx + 18, mt + 10, fmt_tick(hi), 10);
    text(s, lx + 18, mt + ph, fmt_tick(lo), 10);

    s += "</svg>\n";
    return s;
}

std::string render_scatter3d(const ScatterSpec& spec) {
    if (spec.points == nullptr || spec.points->rows == 0)
        throw DataError("render_scatter3d: no points");
    if (spec.points->cols < 3) throw DataError("render_scatter3d: need at least 3 columns");
    const auto& pts = *spec.points;

    // Fixed oblique projection of (x,y,z).
    const double cx = 0.42, cy = 0.28;
    std::vector<double> sx(static_cast<size_t>(pts.rows)), sy(static_cast<size_t>(pts.rows));
    for (int64_t r = 0; r < pts.rows; ++r) {
        sx[static_cast<size_t>(r)] = pts.at(r, 0) + cx * pts.at(r, 2);
        sy[static_cast<size_t>(r)] = pts.at(r, 1) + cy * pts.at(r, 2);
    }
    const Range rx = from_values(sx), ry = from_values(sy);

    const double ml = 26, mr = 70, mt = 34, mb = 20;
    const double pw = spec.width - ml - mr;
    const double ph = spec.height - mt - mb;

    std::string s;
    header(s, spec.width, spec.height);
    text(s, spec.width / 2.0, 20, spec.title, 14, "middle");
    for (int64_t r = 0; r < pts.rows; ++r) {
        const double x = ml + (sx[static_cast<size_t>(r)] - rx.lo) / rx.span() * pw;
        const double y = mt + ph - (sy[static_cast<size_t>(r)] - ry.lo) / ry.span() * ph;
        const int lab = spec.labels ? (*spec.labels)[static_cast<size_t>(r)] : 0;
        s += "<circle cx=\"" + fmt(x) + "\" cy=\"" + fmt(y) + "\" r=\"1.6\" fill=\"" +
             categorical_color(lab) + "\" fill-opacity=\"0.7\"/>\n";
    }
    for (int k = 0; k < 10; ++k) {
        const double y = mt + 12 + 16 * k;
        s += "<circle cx=\"" + fmt(spec.width - mr + 14) + "\" cy=\"" + fmt(y) +
             "\" r=\"4\" fill=\"" + categorical_color(k) + "\"/>\n";
        text(s, spec.width - mr + 24, y + 4, std::to_string(k), 11);
    }
    s += "</svg>\n";
    return s;
}

std::string render_prob_bars(const ProbBarsSpec& spec) {
    if (spec.rows == nullptr || spec.rows->rows == 0)
        throw DataError("render_prob_bars: empty distribution rows");
    const auto& m = *spec.rows;
    const int64_t positions = m.rows;
    const int64_t V = m.cols;

    const double col_w = 64, bar_w = col_w / static_cast<double>(V + 1);
    const double ml = 40, mt = 40, mb = 26;
    const int width = static_cast<int>(ml + positions * col_w + 16);
    const int height = static_cast<int>(mt + spec.bar_height + mb);

    std::string s;
    header(s, width, height);
    text(s, width / 2.0, 20, spec.title, 13, "middle");
    text(s, 12, mt + spec.bar_height / 2.0, "p", 11);
    for (int64_t t = 0; t < positions; ++t) {
        const double x0 = ml + t * col_w;
        line(s, x0, mt, x0, mt + spec.bar_height, "#eeeeee", 0.6);
        for (int64_t v = 0; v < V; ++v) {
            const double h = m.at(t, v) * spec.bar_height;
            s += "<rect x=\"" + fmt(x0 + v * bar_w) + "\" y=\"" + fmt(mt + spec.bar_height - h) +
                 "\" width=\"" + fmt(bar_w * 0.9) + "\" height=\"" + fmt(h) + "\" fill=\"" +
                 categorical_color(static_cast<int>(v)) + "\"/>\n";
        }
        if (t < static_cast<int64_t>(spec.position_labels.size()))
            text(s, x0 + col_w / 2 - bar_w / 2, mt + spec.bar_height + 16,
                 spec.position_labels[static_cast<size_t>(t)], 10, "middle");
    }
    line(s, ml, mt + spec.bar_height, ml + positions * col_w, mt + spec.bar_height);
    s += "</svg>\n";
    return s;
}

} // namespace modlens::svg
