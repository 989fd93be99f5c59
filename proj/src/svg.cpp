#include "fpl/svg.hpp"

#include "fpl/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace fpl::svg {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 440.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 150.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 55.0;

constexpr std::array<const char*, 8> kPalette = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e",
                                                 "#9467bd", "#17becf", "#8c564b", "#7f7f7f"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
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

struct Frame {
    double x0, x1, y0, y1;
    bool log_x, log_y;
    double plot_w() const { return kWidth - kLeft - kRight; }
    double plot_h() const { return kHeight - kTop - kBottom; }
    double tx(double v) const { return log_x ? std::log10(v) : v; }
    double ty(double v) const { return log_y ? std::log10(v) : v; }
    double px(double v) const { return kLeft + (tx(v) - x0) / (x1 - x0) * plot_w(); }
    double py(double v) const { return kTop + plot_h() - (ty(v) - y0) / (y1 - y0) * plot_h(); }
};

std::pair<double, double> padded(double lo, double hi) {
    if (!(hi > lo)) {
        const double pad = lo == 0.0 ? 1.0 : 0.1 * std::abs(lo);
        return {lo - pad, hi + pad};
    }
    const double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
}

Frame make_frame(const Axes& axes, const std::vector<const std::vector<double>*>& xs,
                 const std::vector<const std::vector<double>*>& ys) {
    auto extent = [](const std::vector<const std::vector<double>*>& all, bool log) {
        double lo = INFINITY, hi = -INFINITY;
        for (const auto* v : all)
            for (double e : *v) {
                if (!std::isfinite(e) || (log && e <= 0.0))
                    continue;
                const double t = log ? std::log10(e) : e;
                lo = std::min(lo, t);
                hi = std::max(hi, t);
            }
        if (!std::isfinite(lo))
            return std::pair<double, double>{0.0, 1.0};
        return padded(lo, hi);
    };
    Frame f{};
    f.log_x = axes.log_x;
    f.log_y = axes.log_y;
    auto [x0, x1] = axes.xrange ? *axes.xrange : extent(xs, axes.log_x);
    auto [y0, y1] = axes.yrange ? *axes.yrange : extent(ys, axes.log_y);
    if (axes.xrange && axes.log_x) {
        x0 = std::log10(x0);
        x1 = std::log10(x1);
    }
    if (axes.yrange && axes.log_y) {
        y0 = std::log10(y0);
        y1 = std::log10(y1);
    }
    f.x0 = x0;
    f.x1 = x1;
    f.y0 = y0;
    f.y1 = y1;
    return f;
}

void open_svg(std::ostringstream& os, const Axes& axes) {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight)
       << "\" viewBox=\"0 0 " << num(kWidth) << ' ' << num(kHeight) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << num(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(axes.title)
       << "</text>\n";
}

void draw_axes(std::ostringstream& os, const Frame& f, const Axes& axes) {
    const double bx = kLeft, by = kTop, bw = f.plot_w(), bh = f.plot_h();
    os << "<rect x=\"" << num(bx) << "\" y=\"" << num(by) << "\" width=\"" << num(bw) << "\" height=\"" << num(bh)
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double tx = f.x0 + (f.x1 - f.x0) * i / 4.0;
        const double ty = f.y0 + (f.y1 - f.y0) * i / 4.0;
        const double px = bx + bw * i / 4.0;
        const double py = by + bh - bh * i / 4.0;
        os << "<line x1=\"" << num(px) << "\" y1=\"" << num(by + bh) << "\" x2=\"" << num(px) << "\" y2=\""
           << num(by + bh + 5) << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << num(px) << "\" y=\"" << num(by + bh + 18) << "\" text-anchor=\"middle\">"
           << tick_label(f.log_x ? std::pow(10.0, tx) : tx) << "</text>\n";
        os << "<line x1=\"" << num(bx - 5) << "\" y1=\"" << num(py) << "\" x2=\"" << num(bx) << "\" y2=\"" << num(py)
           << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << num(bx - 8) << "\" y=\"" << num(py + 4) << "\" text-anchor=\"end\">"
           << tick_label(f.log_y ? std::pow(10.0, ty) : ty) << "</text>\n";
    }
    os << "<text x=\"" << num(bx + bw / 2) << "\" y=\"" << num(kHeight - 12) << "\" text-anchor=\"middle\">"
       << escape(axes.xlabel) << "</text>\n";
    os << "<text x=\"16\" y=\"" << num(by + bh / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << num(by + bh / 2) << ")\">" << escape(axes.ylabel) << "</text>\n";
}

bool drawable(const Frame& f, double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && !(f.log_x && x <= 0.0) && !(f.log_y && y <= 0.0);
}

}  // namespace

std::string line_plot(const Axes& axes, const std::vector<Series>& series) {
    if (series.empty())
        throw ConfigError("line_plot: no series to draw");
    std::vector<const std::vector<double>*> xs, ys;
    for (const auto& s : series) {
        if (s.x.empty() || s.x.size() != s.y.size())
            throw ConfigError("line_plot: series '" + s.name + "' is empty or has mismatched x/y lengths");
        xs.push_back(&s.x);
        ys.push_back(&s.y);
    }
    const Frame f = make_frame(axes, xs, ys);
    std::ostringstream os;
    open_svg(os, axes);
    draw_axes(os, f, axes);
    os << "<clipPath id=\"plot\"><rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(f.plot_w())
       << "\" height=\"" << num(f.plot_h()) << "\"/></clipPath>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* colour = kPalette[k % kPalette.size()];
        if (s.markers_only) {
            os << "<g fill=\"" << colour << "\" clip-path=\"url(#plot)\">\n";
            for (std::size_t i = 0; i < s.x.size(); ++i)
                if (drawable(f, s.x[i], s.y[i]))
                    os << "<circle cx=\"" << num(f.px(s.x[i])) << "\" cy=\"" << num(f.py(s.y[i])) << "\" r=\"3\"/>\n";
            os << "</g>\n";
        } else {
            os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" clip-path=\"url(#plot)\" points=\"";
            bool first = true;
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                if (!drawable(f, s.x[i], s.y[i]))
                    continue;
                os << (first ? "" : " ") << num(f.px(s.x[i])) << ',' << num(f.py(s.y[i]));
                first = false;
            }
            os << "\"/>\n";
        }
        const double ly = kTop + 10 + 18.0 * static_cast<double>(k);
        const double lx = kWidth - kRight + 12;
        os << "<line x1=\"" << num(lx) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(lx + 20) << "\" y2=\"" << num(ly)
           << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << num(lx + 26) << "\" y=\"" << num(ly + 4) << "\">" << escape(s.name) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::string scatter_identity(const Axes& axes, const std::vector<double>& x, const std::vector<double>& y) {
    if (x.empty() || x.size() != y.size())
        throw ConfigError("scatter_identity: empty or mismatched data");
    Axes a = axes;
    if (!a.xrange || !a.yrange) {
        double lo = INFINITY, hi = -INFINITY;
        for (double v : x) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        for (double v : y) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const auto range = padded(lo, hi);
        a.xrange = range;
        a.yrange = range;
    }
    const std::vector<double> ident{a.xrange->first, a.xrange->second};
    std::vector<Series> s{{"identity", ident, ident, false}, {"points", x, y, true}};
    return line_plot(a, s);
}

std::string diverging_colour(double v, double limit) {
    double t = limit > 0.0 ? std::clamp(v / limit, -1.0, 1.0) : 0.0;
    // white at 0, (33, 102, 172) at -1, (178, 24, 43) at +1
    auto mix = [&](int c_end) {
        return static_cast<int>(std::lround(255.0 + (c_end - 255.0) * std::abs(t)));
    };
    const int r = t < 0 ? mix(33) : mix(178);
    const int g = t < 0 ? mix(102) : mix(24);
    const int b = t < 0 ? mix(172) : mix(43);
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

std::string heatmap(const Axes& axes, const Matrix& values) {
    if (values.size() == 0)
        throw ConfigError("heatmap: empty grid");
    const auto [x0, x1] = axes.xrange.value_or(std::pair{0.0, static_cast<double>(values.rows())});
    const auto [y0, y1] = axes.yrange.value_or(std::pair{0.0, static_cast<double>(values.cols())});
    Frame f{x0, x1, y0, y1, false, false};
    const double limit = values.cwiseAbs().maxCoeff();
    const double cw = f.plot_w() / static_cast<double>(values.rows());
    const double ch = f.plot_h() / static_cast<double>(values.cols());
    std::ostringstream os;
    open_svg(os, axes);
    os << "<g shape-rendering=\"crispEdges\">\n";
    for (Eigen::Index i = 0; i < values.rows(); ++i)
        for (Eigen::Index j = 0; j < values.cols(); ++j)
            os << "<rect x=\"" << num(kLeft + cw * static_cast<double>(i)) << "\" y=\""
               << num(kTop + f.plot_h() - ch * static_cast<double>(j + 1)) << "\" width=\"" << num(cw) << "\" height=\""
               << num(ch) << "\" fill=\"" << diverging_colour(values(i, j), limit) << "\"/>\n";
    os << "</g>\n";
    draw_axes(os, f, axes);
    // colour bar
    const double bx = kWidth - kRight + 30, bw = 18, bh = f.plot_h();
    for (int k = 0; k < 50; ++k) {
        const double v = limit * (1.0 - 2.0 * (k + 0.5) / 50.0);
        os << "<rect x=\"" << num(bx) << "\" y=\"" << num(kTop + bh * k / 50.0) << "\" width=\"" << num(bw)
           << "\" height=\"" << num(bh / 50.0 + 0.5) << "\" fill=\"" << diverging_colour(v, limit) << "\"/>\n";
    }
    os << "<text x=\"" << num(bx + bw + 4) << "\" y=\"" << num(kTop + 10) << "\">" << tick_label(limit) << "</text>\n";
    os << "<text x=\"" << num(bx + bw + 4) << "\" y=\"" << num(kTop + bh / 2 + 4) << "\">0</text>\n";
    os << "<text x=\"" << num(bx + bw + 4) << "\" y=\"" << num(kTop + bh) << "\">" << tick_label(-limit) << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

}  // namespace fpl::svg
