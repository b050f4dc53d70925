#pragma once

#include <string>
#include <utility>
#include <vector>

namespace avf {

struct PlotSeries {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

// Minimal deterministic line plot: fixed canvas, axes with min/max tick
// labels, one polyline per series, legend in the top-right corner.
void write_svg_plot(const std::string& path,
                    const std::string& title,
                    const std::string& x_label,
                    const std::string& y_label,
                    const std::vector<PlotSeries>& series);

}  // namespace avf
