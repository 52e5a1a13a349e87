#include "mvdet/image.hpp"

#include <cmath>
#include <stdexcept>

namespace mvdet {

void check(bool cond, const std::string& msg) {
    if (!cond) throw std::runtime_error(msg);
}

void FlatImage::validate() const {
    check(rows > 0 && cols > 0 && channels > 0, "FlatImage: non-positive dimensions");
    check(static_cast<int>(pixels.size()) == rows * cols * channels,
          "FlatImage: pixel count " + std::to_string(pixels.size()) + " does not match " +
              std::to_string(rows) + "x" + std::to_string(cols) + "x" + std::to_string(channels));
    check(rows % 4 == 0, "FlatImage: rows must be divisible by 4, got " + std::to_string(rows));
}

FlatImage flatten_raster(const std::vector<std::vector<std::vector<int>>>& grid) {
    check(!grid.empty() && !grid[0].empty() && !grid[0][0].empty(), "flatten_raster: empty grid");
    FlatImage out;
    out.rows = static_cast<int>(grid.size());
    out.cols = static_cast<int>(grid[0].size());
    out.channels = static_cast<int>(grid[0][0].size());
    out.pixels.reserve(out.size());
    for (int r = 0; r < out.rows; ++r) {
        check(static_cast<int>(grid[r].size()) == out.cols, "flatten_raster: ragged rows");
        for (int c = 0; c < out.cols; ++c) {
            check(static_cast<int>(grid[r][c].size()) == out.channels, "flatten_raster: ragged channels");
            for (int ch = 0; ch < out.channels; ++ch) {
                int v = grid[r][c][ch];
                check(v >= 0 && v <= 255, "flatten_raster: value " + std::to_string(v) +
                                              " out of [0,255] at flat index " +
                                              std::to_string((r * out.cols + c) * out.channels + ch));
                out.pixels.push_back(static_cast<std::uint8_t>(v));
            }
        }
    }
    return out;
}

std::vector<std::vector<std::vector<int>>> unflatten(const FlatImage& image) {
    check(image.rows > 0 && image.cols > 0 && image.channels > 0, "unflatten: non-positive dimensions");
    check(static_cast<int>(image.pixels.size()) == image.size(), "unflatten: length mismatch");
    std::vector<std::vector<std::vector<int>>> grid(
        image.rows, std::vector<std::vector<int>>(image.cols, std::vector<int>(image.channels)));
    for (int r = 0; r < image.rows; ++r)
        for (int c = 0; c < image.cols; ++c)
            for (int ch = 0; ch < image.channels; ++ch)
                grid[r][c][ch] = image.at(r, c, ch);
    return grid;
}

std::vector<std::uint8_t> row_band(const FlatImage& image, int r_start, int r_end) {
    check(r_start >= 1 && r_start <= r_end && r_end <= image.rows,
          "row_band: invalid band [" + std::to_string(r_start) + "," + std::to_string(r_end) +
              "] for " + std::to_string(image.rows) + " rows");
    const int stride = image.cols * image.channels;
    auto first = image.pixels.begin() + static_cast<std::ptrdiff_t>(r_start - 1) * stride;
    auto last = image.pixels.begin() + static_cast<std::ptrdiff_t>(r_end) * stride;
    return std::vector<std::uint8_t>(first, last);
}

std::vector<double> to_unit(const FlatImage& image) {
    std::vector<double> x(image.pixels.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = image.pixels[i] / 255.0;
    return x;
}

FlatImage from_unit(const std::vector<double>& x, int rows, int cols, int channels) {
    check(static_cast<int>(x.size()) == rows * cols * channels, "from_unit: length mismatch");
    FlatImage out;
    out.rows = rows;
    out.cols = cols;
    out.channels = channels;
    out.pixels.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double v = std::round(x[i] * 255.0);
        if (v < 0.0) v = 0.0;
        if (v > 255.0) v = 255.0;
        out.pixels[i] = static_cast<std::uint8_t>(v);
    }
    return out;
}

}  // namespace mvdet
