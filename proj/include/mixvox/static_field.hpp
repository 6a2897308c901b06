#pragma once

#include <span>
#include <vector>

#include "mixvox/grid.hpp"
#include "mixvox/mlp.hpp"

namespace mixvox {

/// Sinusoidal view-direction features: [d, sin(2^k pi d), cos(2^k pi d)].
struct DirectionEncoding {
  uint32_t n_bands = 2;

  uint32_t size() const { return 3 + 6 * n_bands; }
  void encode(Vec3 d, std::span<double> out) const;
  std::vector<double> operator()(Vec3 d) const;
};

/// Number of non-unit directions renormalized by color queries so far.
uint64_t direction_renormalizations();
/// Returns d normalized, counting it when |d| is off by more than 1e-6.
Vec3 checked_direction(Vec3 d);

struct StaticFieldConfig {
  GridKind density_kind = GridKind::factorized;
  GridKind color_kind = GridKind::factorized;
  uint32_t color_channels = 27;
  uint32_t rank = 16;
  uint32_t net_hidden = 128;
  uint32_t net_layers = 1;
  uint32_t n_bands = 2;
  double density_shift = -1.0;
};

/// Time-invariant branch: sigma = softplus(S_sigma(p) + shift),
/// rgb = logistic(C_theta(S_c(p), enc(d))).
class StaticField {
 public:
  struct ColorCache {
    std::vector<double> feat;
    std::vector<double> net_in;
    Mlp::Cache net;
    Rgb rgb{};
  };

  StaticField() = default;
  StaticField(const StaticFieldConfig& cfg, uint32_t resolution, const BBox& bbox, Rng& rng);

  Grid density_grid;
  Grid color_grid;
  Mlp color_net;
  DirectionEncoding encoding;
  double density_shift = -1.0;

  /// Interpolated raw value plus shift, before the softplus.
  double density_raw(Vec3 p) const;
  double density(Vec3 p) const { return softplus(density_raw(p)); }
  Rgb color(Vec3 p, Vec3 d) const;

  Rgb color_forward(Vec3 p, std::span<const double> dir_enc, ColorCache& cache) const;
  void color_backward(Vec3 p, const ColorCache& cache, const Rgb& drgb, GradBuffer& grads) const;
  /// d(loss)/d(sigma) -> grid gradient, given the raw value from density_raw.
  void density_backward(Vec3 p, double raw, double dsigma, GradBuffer& grads) const;

  void upsample(uint32_t resolution);
  double tv_penalty(GradBuffer* grads, double density_weight, double color_weight) const;
  void collect(std::vector<Param*>& out);
};

}  // namespace mixvox
