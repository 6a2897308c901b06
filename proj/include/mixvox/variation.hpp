#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mixvox/dataset.hpp"
#include "mixvox/grid.hpp"

namespace mixvox {

/// Learned per-voxel temporal-variance logits V.
struct VariationField {
  Grid logits;

  double logit(Vec3 p) const;
  void set_trainable(bool on);
};

VariationField make_variation_field(GridKind kind, uint32_t resolution, const BBox& bbox, double init_logit,
                                    uint32_t rank, Rng& rng);

inline constexpr double kVariationFloorLogit = -10.0;

struct RayDynamicEstimate {
  double m_hat = 0.5;     ///< sigmoid(max V)
  double max_logit = 0;
  int argmax = -1;        ///< first sample reaching the max; -1 when none was inside
};

/// M-hat = sigmoid(max_i V(p_i)); samples outside the field's box are skipped.
RayDynamicEstimate estimate_ray_dynamic(const VariationField& vf, std::span<const Vec3> samples,
                                        double floor_logit = kVariationFloorLogit);

inline constexpr double kBceClamp = 1e-6;

/// Mean binary cross-entropy with M-hat clamped to [1e-6, 1 - 1e-6].
double variation_loss(std::span<const double> m_hat, std::span<const uint8_t> m);
/// d(loss)/d(max logit) for one ray of a batch of `batch` rays.
double variation_loss_grad_logit(double m_hat, uint8_t m, size_t batch);

struct VariationTrainConfig {
  uint32_t iterations = 2000;
  uint32_t rays = 4096;
  double lr = 0.1;
  double step_scale = 1.0;
  double init_logit = 3.0;
  double gamma = 0.05;
  double dynamic_fraction_floor = 0.0;
  GridKind kind = GridKind::dense;
  uint32_t rank = 16;
  uint64_t seed = 0;
  int threads = 1;
};

struct VariationTrainReport {
  double final_loss = 0;
  double seconds = 0;
};

/// Optimizes the BCE over random training rays at the given lattice resolution.
VariationField train_variation_field(const MultiViewVideoDataset& ds, const VariationTrainConfig& cfg,
                                     uint32_t resolution, VariationTrainReport* report = nullptr);

/// Binary voxel mask plus the ray-wise dilation kernel used at render time.
struct DynamicMask {
  GridDims dims;
  BBox bbox;
  uint32_t kernel = 1;
  std::vector<uint8_t> bits;  // lattice order (x slowest, z fastest)

  bool empty_lattice() const { return bits.empty(); }
  /// Bit of the nearest lattice corner; false outside the box.
  bool at(Vec3 p) const;
  size_t count() const;
  double fraction() const { return bits.empty() ? 0.0 : double(count()) / double(bits.size()); }
  friend bool operator==(const DynamicMask&, const DynamicMask&) = default;
};

/// Mask that marks everything static (kernel 1).
DynamicMask empty_mask(const GridDims& dims, const BBox& bbox);
/// Mask that marks everything dynamic (kernel 1).
DynamicMask full_mask(const GridDims& dims, const BBox& bbox);

/// bit(v) = sigmoid(V(v)) > beta at each lattice corner; beta in (0,1), k_m odd >= 1.
DynamicMask infer_dynamic_mask(const VariationField& vf, double beta, uint32_t k_m);

/// Max-pooling with kernel k (odd), stride 1, along a sampled bit sequence.
std::vector<uint8_t> dilate_ray_bits(std::span<const uint8_t> bits, uint32_t k);

// Run-length export: "MXMK", dims (4 x u32), bbox (6 x f32), kernel u32,
// run count u32, then alternating run lengths (u32) starting with zeros.
std::vector<uint8_t> encode_mask_rle(const DynamicMask& m);
DynamicMask decode_mask_rle(std::span<const uint8_t> bytes);

}  // namespace mixvox
