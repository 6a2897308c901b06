#pragma once

#include <span>
#include <vector>

#include "mixvox/grid.hpp"
#include "mixvox/mlp.hpp"
#include "mixvox/static_field.hpp"

namespace mixvox {

/// Distinct, strictly increasing frame indices in [0, T).
class TimeQuerySet {
 public:
  TimeQuerySet() = default;
  TimeQuerySet(std::vector<uint32_t> indices, uint32_t frame_count);

  static TimeQuerySet all(uint32_t frame_count);
  static TimeQuerySet single(uint32_t t, uint32_t frame_count) { return TimeQuerySet({t}, frame_count); }
  /// Q distinct frames drawn uniformly without replacement, sorted.
  static TimeQuerySet random(uint32_t q, uint32_t frame_count, Rng& rng);

  const std::vector<uint32_t>& indices() const { return idx_; }
  size_t size() const { return idx_.size(); }
  bool empty() const { return idx_.empty(); }
  uint32_t operator[](size_t i) const { return idx_[i]; }

 private:
  std::vector<uint32_t> idx_;
};

struct DynamicFieldConfig {
  GridKind kind = GridKind::factorized;
  uint32_t density_channels = 27;
  uint32_t color_channels = 27;
  uint32_t rank = 16;
  uint32_t hidden = 512;
  uint32_t decompressor_layers = 1;
  uint32_t n_bands = 2;
  double density_shift = -1.0;
  double latent_std = 0.1;
  /// Width of the temporal embedding a concatenation-style query would append.
  uint32_t concat_embed_width = 8;
};

/// Time-varying branch. A point's compact features are decompressed once into
/// D_h-wide vectors (one for density, three for color channels); each queried
/// frame t is then a dot product with that frame's latent row.
class DynamicField {
 public:
  struct DensityCache {
    std::vector<double> feat;
    std::vector<double> dec;
    Mlp::Cache net;
    std::vector<double> raw;  // per query, shift included
  };
  struct ColorCache {
    std::vector<double> feat;
    std::vector<double> net_in;
    std::vector<double> dec;  // 3 * D_h: red block, green block, blue block
    Mlp::Cache net;
    std::vector<Rgb> rgb;
  };

  DynamicField() = default;
  DynamicField(const DynamicFieldConfig& cfg, uint32_t resolution, const BBox& bbox, uint32_t frame_count, Rng& rng);

  Grid density_feat;
  Grid color_feat;
  Mlp density_dec;
  Mlp color_dec;
  Param latent_sigma;  // T x D_h
  Param latent_color;  // T x D_h
  DirectionEncoding encoding;
  double density_shift = -1.0;
  uint32_t concat_embed_width = 8;

  uint32_t frame_count() const { return frames_; }
  /// Sets the frame count and hidden width after members were loaded directly.
  void restore_shape(uint32_t frame_count, uint32_t hidden) {
    frames_ = frame_count;
    hidden_ = hidden;
  }
  uint32_t hidden() const { return hidden_; }

  /// sigma_t for every queried frame.
  std::vector<double> density(Vec3 p, const TimeQuerySet& times) const;
  /// Latent inner products before the shift and activation.
  std::vector<double> density_inner(Vec3 p, const TimeQuerySet& times) const;
  std::vector<Rgb> color(Vec3 p, Vec3 d, const TimeQuerySet& times) const;

  void density_forward(Vec3 p, const TimeQuerySet& times, DensityCache& cache, std::span<double> sigma) const;
  void density_backward(Vec3 p, const TimeQuerySet& times, const DensityCache& cache, std::span<const double> dsigma,
                        GradBuffer& grads) const;
  void color_forward(Vec3 p, std::span<const double> dir_enc, const TimeQuerySet& times, ColorCache& cache,
                     std::span<Rgb> rgb) const;
  void color_backward(Vec3 p, const TimeQuerySet& times, const ColorCache& cache, std::span<const Rgb> drgb,
                      GradBuffer& grads) const;

  void upsample(uint32_t resolution);
  double tv_penalty(GradBuffer* grads, double density_weight, double color_weight) const;
  void collect(std::vector<Param*>& out);

  /// Forward passes through either decompressor since construction or reset.
  uint64_t decompressor_calls() const { return density_dec.calls().value() + color_dec.calls().value(); }
  void reset_call_counters() const {
    density_dec.calls().reset();
    color_dec.calls().reset();
  }

 private:
  void check_times(const TimeQuerySet& times) const;

  uint32_t frames_ = 0;
  uint32_t hidden_ = 0;
};

/// Multiply-add counts for one point queried at Q frames.
struct FlopsReport {
  double flop_mlp = 0;         ///< both decompressors, once
  double flop_inn = 0;         ///< all inner products for one frame
  double flop_mlp_concat = 0;  ///< decompressors widened by a temporal embedding
  double inner_total = 0;      ///< flop_mlp + Q * flop_inn
  double concat_total = 0;     ///< Q * flop_mlp_concat
  double ratio = 0;            ///< concat_total / inner_total
};

FlopsReport flops_from_counts(double flop_mlp, double flop_inn, double flop_mlp_concat, uint32_t q);
FlopsReport flops_report(const DynamicField& field, uint32_t frame_count, uint32_t q);

}  // namespace mixvox
