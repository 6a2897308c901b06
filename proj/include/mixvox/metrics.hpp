#pragma once

#include <limits>
#include <string>
#include <vector>

#include "mixvox/dataset.hpp"
#include "mixvox/render.hpp"

namespace mixvox {

/// Reported for identical images.
inline constexpr double kPsnrInfinite = std::numeric_limits<double>::infinity();

double mse(const Image& a, const Image& b);
/// 10 log10(1 / MSE); kPsnrInfinite when MSE is zero.
double psnr(const Image& a, const Image& b);
/// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5), averaged over
/// channels; k1 = 0.01, k2 = 0.03, dynamic range 1.
double ssim(const Image& a, const Image& b);
/// (1 - SSIM) / 2.
double dssim(const Image& a, const Image& b);

struct FrameMetric {
  std::string camera;
  uint32_t frame = 0;
  double psnr = 0;
  double dssim = 0;
};

struct MetricReport {
  std::vector<FrameMetric> frames;
  double mean_psnr = 0;
  double mean_dssim = 0;
  double train_seconds = 0;
  double render_fps = 0;

  void aggregate();
  std::string csv() const;
  std::string summary() const;
};

/// Renders every held-out camera at frames 0, stride, 2*stride, ... and
/// scores each against the recorded image.
MetricReport evaluate(const Model& m, const MultiViewVideoDataset& ds, uint32_t stride, const RenderSettings& rs,
                      int threads = 1);

}  // namespace mixvox
