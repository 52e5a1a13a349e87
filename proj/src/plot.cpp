#include "mvdet/plot.hpp"

#include <algorithm>
#include <cmath>

#include "mvdet/png_io.hpp"

namespace mvdet {

namespace {

struct Rgb {
    std::uint8_t r, g, b;
};

const Rgb kPalette[] = {{202, 53, 66},  {35, 110, 190}, {48, 145, 70},
                        {214, 138, 32}, {121, 76, 170}, {60, 60, 60}};

void put(FlatImage& img, int x, int y, Rgb c) {
    if (x < 0 || x >= img.cols || y < 0 || y >= img.rows) return;
    img.at(y, x, 0) = c.r;
    img.at(y, x, 1) = c.g;
    img.at(y, x, 2) = c.b;
}

void line(FlatImage& img, int x0, int y0, int x1, int y1, Rgb c) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        put(img, x0, y0, c);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) { err += dy; x0 += sx; }
        if (e2 <= dx) { err += dx; y0 += sy; }
    }
}

}  // namespace

void render_curves_png(const std::string& path, const std::vector<Curve>& curves, int size) {
    const int margin = 24;
    FlatImage img;
    img.rows = size;
    img.cols = size;
    img.channels = 3;
    img.pixels.assign(static_cast<std::size_t>(size) * size * 3, 255);

    const int plot = size - 2 * margin;
    auto px = [&](double x) { return margin + static_cast<int>(std::lround(x * plot)); };
    auto py = [&](double y) { return size - margin - static_cast<int>(std::lround(y * plot)); };

    const Rgb grid{225, 225, 225}, axis{30, 30, 30}, diag{170, 170, 170};
    for (int i = 1; i < 10; ++i) {
        line(img, px(i / 10.0), py(0), px(i / 10.0), py(1), grid);
        line(img, px(0), py(i / 10.0), px(1), py(i / 10.0), grid);
    }
    line(img, px(0), py(0), px(1), py(1), diag);
    line(img, px(0), py(0), px(1), py(0), axis);
    line(img, px(0), py(0), px(0), py(1), axis);

    for (std::size_t ci = 0; ci < curves.size(); ++ci) {
        const Rgb c = kPalette[ci % (sizeof(kPalette) / sizeof(kPalette[0]))];
        const auto& pts = curves[ci].points;
        for (std::size_t i = 1; i < pts.size(); ++i)
            line(img, px(pts[i - 1].first), py(pts[i - 1].second), px(pts[i].first),
                 py(pts[i].second), c);
        // small legend swatch stack in the top-left corner
        for (int dx = 0; dx < 14; ++dx)
            for (int dy = 0; dy < 4; ++dy)
                put(img, margin + 4 + dx, margin + 4 + static_cast<int>(ci) * 7 + dy, c);
    }
    write_png(path, img);
}

}  // namespace mvdet
