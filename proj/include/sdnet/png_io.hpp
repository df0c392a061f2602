#pragma once

#include "sdnet/raster.hpp"

#include <string>

namespace sdnet {

/// Reads an 8-bit gray, gray+alpha, RGB or RGBA PNG. Alpha is dropped;
/// palette and 16-bit images are converted to 8-bit.
Image8 read_png(const std::string& path);

/// Writes a 1- or 3-channel 8-bit PNG.
void write_png(const Image8& img, const std::string& path);

}  // namespace sdnet
