#pragma once

#include "fpl/core.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fpl::svg {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
    bool markers_only = false;
};

struct Axes {
    std::string title;
    std::string xlabel;
    std::string ylabel;
    std::optional<std::pair<double, double>> xrange;
    std::optional<std::pair<double, double>> yrange;
    bool log_x = false;
    bool log_y = false;
};

// Overlaid series with a legend in the given order. Throws ConfigError when `series` is empty
// or a series has mismatched or empty data.
std::string line_plot(const Axes& axes, const std::vector<Series>& series);

// Points (x_i, y_i) plus the identity line.
std::string scatter_identity(const Axes& axes, const std::vector<double>& x, const std::vector<double>& y);

// values(i, j) drawn at column i (x) and row j (y) as one rect per cell; diverging blue-white-red
// palette symmetric about 0.
std::string heatmap(const Axes& axes, const Matrix& values);

// Diverging palette colour for v in [-limit, limit] as "#rrggbb".
std::string diverging_colour(double v, double limit);

}  // namespace fpl::svg
