#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "poisimex/errors.hpp"
#include "poisimex/study.hpp"

namespace poisimex {

namespace detail {

inline std::string svg_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string svg_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

inline void svg_line(std::string& out, double x1, double y1, double x2, double y2,
                     const char* style) {
    out += "  <line x1=\"" + svg_num(x1) + "\" y1=\"" + svg_num(y1) + "\" x2=\"" + svg_num(x2) +
           "\" y2=\"" + svg_num(y2) + "\" " + style + "/>\n";
}

} // namespace detail

/// Renders one box-and-whisker glyph per sample size for the chosen
/// estimator: box spans q1..q3 with the median as mid-line, whiskers reach
/// the sample min/max, and a dashed horizontal line marks the true beta_x.
/// Output depends only on the result values, so it is byte-deterministic.
inline std::string render_boxplot_svg(const StudyResult& result, const std::string& estimator) {
    const EstimatorKind kind = parse_estimator(estimator);
    if (std::find(result.estimators.begin(), result.estimators.end(), kind) ==
        result.estimators.end()) {
        throw UnknownEstimator("estimator '" + estimator + "' not present in study result");
    }
    std::vector<const StudySummaryRow*> rows;
    for (const StudySummaryRow& row : result.summaries) {
        if (row.estimator == kind) rows.push_back(&row);
    }

    const double slot = 70.0;
    const double left = 70.0, right = 30.0, top = 30.0, bottom = 60.0;
    const double plot_h = 340.0;
    const double width = left + slot * static_cast<double>(rows.size()) + right;
    const double height = top + plot_h + bottom;

    double lo = result.true_beta_x, hi = result.true_beta_x;
    for (const auto* row : rows) {
        if (row->stats.n == 0) continue;
        lo = std::min(lo, row->stats.min);
        hi = std::max(hi, row->stats.max);
    }
    double pad = (hi - lo) * 0.08;
    if (pad <= 0.0) pad = std::max(0.5, std::abs(hi) * 0.1);
    lo -= pad;
    hi += pad;
    const auto ypix = [&](double v) { return top + (hi - v) / (hi - lo) * plot_h; };

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::svg_num(width) +
           "\" height=\"" + detail::svg_num(height) + "\" viewBox=\"0 0 " +
           detail::svg_num(width) + " " + detail::svg_num(height) + "\">\n";
    out += "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    const char* axis_style = "stroke=\"black\" stroke-width=\"1\"";
    detail::svg_line(out, left, top, left, top + plot_h, axis_style);
    detail::svg_line(out, left, top + plot_h, width - right, top + plot_h, axis_style);

    for (int t = 0; t <= 4; ++t) {
        const double v = lo + (hi - lo) * static_cast<double>(t) / 4.0;
        const double y = ypix(v);
        detail::svg_line(out, left - 5, y, left, y, axis_style);
        out += "  <text x=\"" + detail::svg_num(left - 9) + "\" y=\"" + detail::svg_num(y + 4) +
               "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">" +
               detail::svg_label(v) + "</text>\n";
    }

    const double ref_y = ypix(result.true_beta_x);
    detail::svg_line(out, left, ref_y, width - right, ref_y,
                     "stroke=\"crimson\" stroke-width=\"1\" stroke-dasharray=\"6,4\"");

    const char* box_style = "stroke=\"black\" stroke-width=\"1.5\"";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double cx = left + slot * (static_cast<double>(i) + 0.5);
        out += "  <text x=\"" + detail::svg_num(cx) + "\" y=\"" +
               detail::svg_num(top + plot_h + 22) +
               "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" +
               std::to_string(rows[i]->n) + "</text>\n";
        const BoxplotSummary& s = rows[i]->stats;
        if (s.n == 0) continue; // no successful replicates at this size
        const double half = 18.0;
        const double y_min = ypix(s.min), y_q1 = ypix(s.q1), y_med = ypix(s.median);
        const double y_q3 = ypix(s.q3), y_max = ypix(s.max);
        detail::svg_line(out, cx, y_min, cx, y_q1, box_style); // lower whisker
        detail::svg_line(out, cx - half * 0.6, y_min, cx + half * 0.6, y_min, box_style);
        detail::svg_line(out, cx, y_q3, cx, y_max, box_style); // upper whisker
        detail::svg_line(out, cx - half * 0.6, y_max, cx + half * 0.6, y_max, box_style);
        out += "  <rect x=\"" + detail::svg_num(cx - half) + "\" y=\"" + detail::svg_num(y_q3) +
               "\" width=\"" + detail::svg_num(2 * half) + "\" height=\"" +
               detail::svg_num(y_q1 - y_q3) + "\" fill=\"lightsteelblue\" " + box_style + "/>\n";
        detail::svg_line(out, cx - half, y_med, cx + half, y_med, box_style);
    }

    out += "  <text x=\"" + detail::svg_num(left + (width - left - right) / 2) + "\" y=\"" +
           detail::svg_num(height - 14) +
           "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">sample size"
           "</text>\n";
    out += "  <text x=\"16\" y=\"" + detail::svg_num(top + plot_h / 2) +
           "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" "
           "transform=\"rotate(-90 16 " +
           detail::svg_num(top + plot_h / 2) + ")\">beta_x estimate (" + estimator +
           ")</text>\n";
    out += "</svg>\n";
    return out;
}

inline void emit_boxplot_svg(const StudyResult& result, const std::string& estimator,
                             const std::string& path) {
    const std::string body = render_boxplot_svg(result, estimator);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write '" + path + "'");
    os << body;
    os.flush();
    if (!os) throw IoError("error writing '" + path + "'");
}

} // namespace poisimex
