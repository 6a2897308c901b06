#pragma once

#include <span>
#include <string>
#include <vector>

#include "mixvox/core.hpp"

namespace mixvox {

/// Per-pixel temporal standard deviation D(r) for one camera, row-major.
struct VarianceMap {
  uint32_t width = 0;
  uint32_t height = 0;
  std::vector<float> stddev;

  bool dynamic(size_t pixel, double gamma) const { return double(stddev[pixel]) >= gamma; }
  /// Binary map M(r): 1 iff D >= gamma.
  std::vector<uint8_t> binarize(double gamma) const;
  friend bool operator==(const VarianceMap&, const VarianceMap&) = default;
};

struct PixelVariance {
  Rgb mean{};
  double stddev = 0;
};

/// Population variance over frames and channels; needs at least two frames.
PixelVariance pixel_variance(std::span<const Rgb> frames);

// Cache format: H, W as u32 then H*W f32.
std::vector<uint8_t> encode_variance_map(const VarianceMap& m);
VarianceMap decode_variance_map(std::span<const uint8_t> bytes);
void write_variance_map(const std::string& path, const VarianceMap& m);
VarianceMap read_variance_map(const std::string& path);

}  // namespace mixvox
