#include "mixvox/metrics.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>

namespace mixvox {

namespace {

void check_same(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height || a.data.size() != b.data.size())
    throw DomainError("images differ in shape");
}

constexpr int kWin = 11;

std::array<double, kWin> gaussian_window() {
  std::array<double, kWin> w{};
  double sum = 0;
  for (int i = 0; i < kWin; ++i) {
    const double x = i - kWin / 2;
    w[i] = std::exp(-x * x / (2 * 1.5 * 1.5));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

/// Separable valid-mode filtering of one channel.
std::vector<double> filter_valid(const std::vector<double>& img, uint32_t w, uint32_t h) {
  static const auto g = gaussian_window();
  const uint32_t ow = w - kWin + 1, oh = h - kWin + 1;
  std::vector<double> tmp(size_t(ow) * h), out(size_t(ow) * oh);
  for (uint32_t y = 0; y < h; ++y)
    for (uint32_t x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < kWin; ++k) acc += g[k] * img[size_t(y) * w + x + k];
      tmp[size_t(y) * ow + x] = acc;
    }
  for (uint32_t y = 0; y < oh; ++y)
    for (uint32_t x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < kWin; ++k) acc += g[k] * tmp[size_t(y + k) * ow + x];
      out[size_t(y) * ow + x] = acc;
    }
  return out;
}

}  // namespace

double mse(const Image& a, const Image& b) {
  check_same(a, b);
  if (a.data.empty()) throw DomainError("empty image");
  double acc = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = double(a.data[i]) - double(b.data[i]);
    acc += d * d;
  }
  return acc / double(a.data.size());
}

double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m == 0.0) return kPsnrInfinite;
  return 10.0 * std::log10(1.0 / m);
}

double ssim(const Image& a, const Image& b) {
  check_same(a, b);
  if (a.width < uint32_t(kWin) || a.height < uint32_t(kWin)) throw DomainError("image smaller than the SSIM window");
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const uint32_t w = a.width, h = a.height;
  const size_t n = size_t(w) * h;
  double total = 0;
  for (int ch = 0; ch < 3; ++ch) {
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (size_t i = 0; i < n; ++i) {
      x[i] = a.data[3 * i + ch];
      y[i] = b.data[3 * i + ch];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, w, h), my = filter_valid(y, w, h);
    const auto sxx = filter_valid(xx, w, h), syy = filter_valid(yy, w, h), sxy = filter_valid(xy, w, h);
    double acc = 0;
    for (size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
      acc += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += acc / double(mx.size());
  }
  return total / 3.0;
}

double dssim(const Image& a, const Image& b) { return std::clamp((1.0 - ssim(a, b)) / 2.0, 0.0, 1.0); }

void MetricReport::aggregate() {
  mean_psnr = mean_dssim = 0;
  if (frames.empty()) return;
  for (const auto& f : frames) {
    mean_psnr += f.psnr;
    mean_dssim += f.dssim;
  }
  mean_psnr /= double(frames.size());
  mean_dssim /= double(frames.size());
}

std::string MetricReport::csv() const {
  std::string out = "frame_index,camera,psnr,dssim,lpips,flip,jod\n";
  char buf[160];
  for (const auto& f : frames) {
    std::snprintf(buf, sizeof buf, "%u,%s,%.6f,%.6f,n/a,n/a,n/a\n", f.frame, f.camera.c_str(), f.psnr, f.dssim);
    out += buf;
  }
  return out;
}

std::string MetricReport::summary() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "# evaluation summary\n"
                "# dssim = (1 - ssim) / 2, 11x11 gaussian window (sigma 1.5), k1 = 0.01, k2 = 0.03\n"
                "frames_evaluated: %zu\n"
                "mean_psnr_db: %.4f\n"
                "mean_dssim: %.6f\n"
                "lpips: n/a\nflip: n/a\njod: n/a\n"
                "train_seconds: %.2f\n"
                "render_fps: %.3f\n",
                frames.size(), mean_psnr, mean_dssim, train_seconds, render_fps);
  return buf;
}

MetricReport evaluate(const Model& m, const MultiViewVideoDataset& ds, uint32_t stride, const RenderSettings& rs,
                      int threads) {
  if (stride == 0) throw ConfigError("evaluation stride must be positive");
  const auto evals = ds.eval_cameras();
  if (evals.empty()) throw ConfigError("dataset has no evaluation camera");
  MetricReport rep;
  double render_seconds = 0;
  for (uint32_t c : evals)
    for (uint32_t t = 0; t < ds.frame_count; t += stride) {
      const auto t0 = std::chrono::steady_clock::now();
      const RenderedFrame f = render_frame(m, ds.cameras[c], t, rs, threads);
      render_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      FrameMetric fm;
      fm.camera = ds.cameras[c].name;
      fm.frame = t;
      fm.psnr = psnr(f.rgb, ds.frames[c][t]);
      fm.dssim = ds.cameras[c].width >= 11 && ds.cameras[c].height >= 11 ? dssim(f.rgb, ds.frames[c][t]) : 0.0;
      rep.frames.push_back(fm);
    }
  rep.aggregate();
  rep.render_fps = render_seconds > 0 ? double(rep.frames.size()) / render_seconds : 0.0;
  return rep;
}

}  // namespace mixvox
