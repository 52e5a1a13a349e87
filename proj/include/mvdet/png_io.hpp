#pragma once

#include <string>

#include "mvdet/image.hpp"

namespace mvdet {

// 8-bit PNG in, FlatImage out (palette/alpha/16-bit inputs are converted)
FlatImage read_png(const std::string& path);

// writes grayscale (channels=1) or RGB (channels=3)
void write_png(const std::string& path, const FlatImage& image);

}  // namespace mvdet
