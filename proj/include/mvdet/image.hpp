#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mvdet {

void check(bool cond, const std::string& msg);

// Raster-order pixel vector: row by row, left to right, channel-minor
// (the R,G,B of one pixel are adjacent). Values are integers in [0,255].
struct FlatImage {
    std::vector<std::uint8_t> pixels;
    int rows = 0;
    int cols = 0;
    int channels = 0;

    int size() const { return rows * cols * channels; }

    int index(int r, int c, int ch) const { return (r * cols + c) * channels + ch; }

    std::uint8_t at(int r, int c, int ch) const { return pixels[index(r, c, ch)]; }
    std::uint8_t& at(int r, int c, int ch) { return pixels[index(r, c, ch)]; }

    bool same_shape(const FlatImage& o) const {
        return rows == o.rows && cols == o.cols && channels == o.channels;
    }

    // rows must be divisible by 4 (the band plan generates image quarters)
    void validate() const;
};

struct LabeledSample {
    FlatImage image;
    int label = 0;
    std::string id;  // "class/filename", stable across runs
};

struct DatasetSplit {
    std::vector<LabeledSample> train, val, test;
    int class_count = 0;
    std::string name;
    std::vector<std::string> class_names;
};

// grid[r][c][ch] -> FlatImage; rejects values outside [0,255]
FlatImage flatten_raster(const std::vector<std::vector<std::vector<int>>>& grid);

// exact inverse of flatten_raster
std::vector<std::vector<std::vector<int>>> unflatten(const FlatImage& image);

// contiguous raster slice covering rows [r_start, r_end], 1-indexed inclusive
std::vector<std::uint8_t> row_band(const FlatImage& image, int r_start, int r_end);

// pixel values scaled to [0,1] doubles (the form attacks and gradients use)
std::vector<double> to_unit(const FlatImage& image);

// inverse of to_unit with round-to-nearest and clamping to [0,255]
FlatImage from_unit(const std::vector<double>& x, int rows, int cols, int channels);

}  // namespace mvdet
