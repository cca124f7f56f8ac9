#pragma once

#include <filesystem>

#include "obr/imaging.hpp"

namespace obr {

// Loads 8-bit grayscale or RGB; other PNG flavours are converted (alpha is
// composited away, 16-bit is reduced). Throws InputError.
RasterImage read_png(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const RasterImage& image);

}  // namespace obr
