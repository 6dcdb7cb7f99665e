#pragma once

#include <string>
#include <vector>

namespace dlab::cli {

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

// Minimal static SVG line plot (axes, ticks, legend). No display dependency;
// every plot's data is also written as CSV by the callers.
void write_line_plot_svg(const std::string& path, const std::string& title,
                         const std::string& x_label, const std::string& y_label,
                         const std::vector<PlotSeries>& series);

}  // namespace dlab::cli
