#pragma once

#include <vector>

#include "mixvox/dynamic_field.hpp"
#include "mixvox/static_field.hpp"
#include "mixvox/variation.hpp"

namespace mixvox {

struct ModelConfig {
  StaticFieldConfig static_field;
  DynamicFieldConfig dynamic_field;
};

/// Everything a render needs: both branches, the variation field and the
/// voxel mask derived from it.
struct Model {
  BBox bbox;
  uint32_t resolution = 0;
  uint32_t frame_count = 0;
  StaticField stat;
  DynamicField dyn;
  VariationField variation;
  DynamicMask mask;

  Model() = default;
  Model(const ModelConfig& cfg, const BBox& bbox, uint32_t resolution, uint32_t frame_count, Rng& rng);

  /// Trainable arrays of both branches followed by the (frozen) variation logits.
  std::vector<Param*> parameters();
  /// Resamples every radiance grid at the new lattice size.
  void upsample(uint32_t resolution);
  double voxel_width() const { return mixvox::voxel_width(GridDims::cube(resolution), bbox); }
};

}  // namespace mixvox
