#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace regcl::cli {

namespace {

// Fixed-precision formatting keeps the SVG text byte-stable.
std::string num(double v, int digits = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string escape(const std::string& s) {
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

// White to deep blue.
std::string ramp(double t) {
    t = std::clamp(t, 0.0, 1.0);
    const int r = static_cast<int>(std::lround(247 - t * (247 - 8)));
    const int g = static_cast<int>(std::lround(251 - t * (251 - 48)));
    const int b = static_cast<int>(std::lround(255 - t * (255 - 107)));
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

}  // namespace

std::string result_heatmap_svg(const ResultMatrix& r, bool lower_is_better) {
    const std::size_t n = r.tasks();
    const int cell = 56;
    const int left = 120;
    const int top = 60;
    const int width = left + static_cast<int>(n) * cell + 20;
    const int height = top + static_cast<int>(n) * cell + 110;

    double lo = 1.0, hi = 0.0;
    for (const auto& row : r.values)
        for (double v : row) lo = std::min(lo, v), hi = std::max(hi, v);
    const double span = hi > lo ? hi - lo : 1.0;

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << left << "\" y=\"24\" font-size=\"14\">R[" << escape(r.metric_name)
      << "]: row = after training step, column = evaluated task</text>\n";
    for (std::size_t i = 0; i < n; ++i) {
        const int y = top + static_cast<int>(i) * cell;
        s << "<text x=\"" << left - 8 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"end\">" << i + 1 << ". "
          << escape(r.task_ids[i]) << "</text>\n";
        for (std::size_t j = 0; j < n; ++j) {
            const int x = left + static_cast<int>(j) * cell;
            const double v = r.values[i][j];
            double t = (v - lo) / span;
            if (lower_is_better) t = 1.0 - t;
            s << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
              << "\" fill=\"" << ramp(t) << "\" stroke=\"#ffffff\"/>\n";
            s << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"middle\" fill=\""
              << (t > 0.55 ? "#ffffff" : "#000000") << "\">" << num(v) << "</text>\n";
        }
    }
    const int label_y = top + static_cast<int>(n) * cell + 14;
    for (std::size_t j = 0; j < n; ++j) {
        const int x = left + static_cast<int>(j) * cell + cell / 2;
        s << "<text x=\"" << x << "\" y=\"" << label_y << "\" text-anchor=\"end\" transform=\"rotate(-45 " << x << ' '
          << label_y << ")\">" << escape(r.task_ids[j]) << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

std::string loss_curve_svg(const std::vector<LossRecord>& history, const std::string& title) {
    const int width = 640, height = 360;
    const int left = 60, right = 140, top = 40, bottom = 40;
    const int pw = width - left - right;
    const int ph = height - top - bottom;

    double hi = 0.0;
    for (const auto& h : history) hi = std::max({hi, h.total, h.mse, h.focal, h.dice});
    if (!(hi > 0.0)) hi = 1.0;
    const std::size_t steps = history.size();

    auto px = [&](std::size_t i) {
        return left + (steps > 1 ? static_cast<double>(i) / static_cast<double>(steps - 1) : 0.0) * pw;
    };
    auto py = [&](double v) { return top + ph - v / hi * ph; };

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << left << "\" y=\"24\" font-size=\"14\">" << escape(title) << "</text>\n";
    s << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
      << "\" stroke=\"#000\"/>\n";
    s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
      << "\" stroke=\"#000\"/>\n";
    s << "<text x=\"" << left - 6 << "\" y=\"" << top + 4 << "\" text-anchor=\"end\">" << num(hi, 3) << "</text>\n";
    s << "<text x=\"" << left - 6 << "\" y=\"" << top + ph + 4 << "\" text-anchor=\"end\">0</text>\n";
    s << "<text x=\"" << left + pw << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"end\">step " << steps
      << "</text>\n";

    struct Series {
        const char* name;
        const char* color;
        double LossRecord::*field;
    };
    const Series series[] = {{"total", "#08306b", &LossRecord::total},
                             {"mse", "#e6550d", &LossRecord::mse},
                             {"focal", "#31a354", &LossRecord::focal},
                             {"dice", "#756bb1", &LossRecord::dice}};
    int legend_y = top + 10;
    for (const auto& se : series) {
        if (steps > 0) {
            s << "<polyline fill=\"none\" stroke=\"" << se.color << "\" stroke-width=\"1.2\" points=\"";
            for (std::size_t i = 0; i < steps; ++i) {
                if (i) s << ' ';
                s << num(px(i)) << ',' << num(py(history[i].*se.field));
            }
            s << "\"/>\n";
        }
        s << "<line x1=\"" << left + pw + 16 << "\" y1=\"" << legend_y - 4 << "\" x2=\"" << left + pw + 40
          << "\" y2=\"" << legend_y - 4 << "\" stroke=\"" << se.color << "\" stroke-width=\"2\"/>\n";
        s << "<text x=\"" << left + pw + 46 << "\" y=\"" << legend_y << "\">" << se.name << "</text>\n";
        legend_y += 18;
    }
    s << "</svg>\n";
    return s.str();
}

}  // namespace regcl::cli
