#pragma once

#include <span>
#include <string>
#include <vector>

#include "mixvox/camera.hpp"
#include "mixvox/dataset.hpp"
#include "mixvox/model.hpp"

namespace mixvox {

enum class RenderMode { mixed, pure_static, full_dynamic };
RenderMode parse_render_mode(const std::string& s);
std::string to_string(RenderMode m);

struct RenderSettings {
  double step_scale = 4.0;
  double sample_multiplier = 1.0;  ///< N_s multiplier; 8 for the X preset
  double prune_alpha = 1e-4;       ///< color skipped below this alpha; 0 disables
  Rgb background{0, 0, 0};
  RenderMode mode = RenderMode::mixed;

  double effective_step() const { return step_scale / sample_multiplier; }
};

struct CompositeResult {
  Rgb color{};
  double depth = 0;
  double opacity = 0;
};

/// Front-to-back alpha compositing over `background`.
CompositeResult composite(std::span<const double> sigma, std::span<const Rgb> color, std::span<const double> delta,
                          std::span<const double> s, const Rgb& background);
/// Gradients of the composited color w.r.t. sigma and per-sample color,
/// given d(loss)/d(color).
void composite_backward(std::span<const double> sigma, std::span<const Rgb> color, std::span<const double> delta,
                        const Rgb& background, const Rgb& dcolor, std::span<double> dsigma, std::span<Rgb> dcolor_i);

/// Per-sample branch assignment after ray-wise dilation, with index maps back
/// to ray order.
struct SamplePartition {
  std::vector<uint8_t> dynamic;
  std::vector<uint32_t> static_idx;
  std::vector<uint32_t> dynamic_idx;
};
SamplePartition partition_samples(const DynamicMask& mask, std::span<const Vec3> points, RenderMode mode);

struct RayRender {
  std::vector<Rgb> color;  // per queried time
  std::vector<double> depth;
  std::vector<double> opacity;
  size_t samples = 0;
  size_t dynamic_samples = 0;
  size_t colored_samples = 0;
};

/// Renders one ray at every queried time. Samples are midpoints unless a
/// jitter stream is given.
RayRender render_ray(const Model& m, const Ray& ray, const TimeQuerySet& times, const RenderSettings& rs,
                     Rng* jitter = nullptr);

/// Straightforward per-time evaluation of every sample through the branch
/// its bit selects, composited with explicit exp(-cumulative) transmittance
/// and no pruning.
RayRender render_ray_reference(const Model& m, const Ray& ray, const TimeQuerySet& times, const RenderSettings& rs);

struct RayTrainStats {
  double sq_error = 0;
  size_t samples = 0;
  size_t dynamic_samples = 0;
};

/// Forward plus reverse pass for one ray with squared-error loss against
/// `gt` (one color per queried time), scaled by `grad_scale`.
RayTrainStats backprop_ray(const Model& m, const Ray& ray, const TimeQuerySet& times, std::span<const Rgb> gt,
                           const RenderSettings& rs, Rng* jitter, double grad_scale, GradBuffer& grads);

struct RenderedFrame {
  Image rgb;
  std::vector<float> depth;    // expected ray distance
  std::vector<float> opacity;
  /// Depth rescaled to [0,1] over pixels with opacity > 0.5; others 0.
  std::vector<float> normalized_depth() const;
};

RenderedFrame render_frame(const Model& m, const CameraSpec& cam, uint32_t t, const RenderSettings& rs,
                           int threads = 1);

/// Fraction of ray samples routed to the dynamic branch over the given rays.
double dynamic_point_fraction(const Model& m, std::span<const Ray> rays, const RenderSettings& rs);

}  // namespace mixvox
