#pragma once

#include <string>
#include <utility>
#include <vector>

namespace mvdet {

struct Curve {
    std::string name;
    std::vector<std::pair<double, double>> points;  // (x, y) in [0,1]
};

// minimal raster plot: unit square with gridlines, the chance diagonal and
// one polyline per curve; enough to eyeball ROC behaviour without a plotting
// stack in the loop
void render_curves_png(const std::string& path, const std::vector<Curve>& curves, int size = 512);

}  // namespace mvdet
