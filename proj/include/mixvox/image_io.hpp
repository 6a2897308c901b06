#pragma once

#include <string>
#include <vector>

#include "mixvox/dataset.hpp"

namespace mixvox {

/// Decodes any 8/16-bit PNG into RGB floats in [0,1]. Grey and alpha are
/// expanded or dropped. Throws LoadError on undecodable input.
Image read_png(const std::string& path);
/// 8-bit RGB; values are clamped and rounded to the nearest code.
void write_png(const std::string& path, const Image& img);
/// 16-bit greyscale from values in [0,1].
void write_png_gray16(const std::string& path, uint32_t width, uint32_t height, const std::vector<float>& values);

/// Rounds every value to the nearest multiple of 1/255, matching an 8-bit
/// save/load round trip.
void quantize_8bit(Image& img);

}  // namespace mixvox
