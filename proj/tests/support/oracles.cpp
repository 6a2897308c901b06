#include "oracles.hpp"

#include <cmath>

namespace oracle {

double trilinear8(const std::array<double, 8>& c, double fx, double fy, double fz) {
  double v = 0;
  v += c[0] * (1 - fx) * (1 - fy) * (1 - fz);
  v += c[1] * (1 - fx) * (1 - fy) * fz;
  v += c[2] * (1 - fx) * fy * (1 - fz);
  v += c[3] * (1 - fx) * fy * fz;
  v += c[4] * fx * (1 - fy) * (1 - fz);
  v += c[5] * fx * (1 - fy) * fz;
  v += c[6] * fx * fy * (1 - fz);
  v += c[7] * fx * fy * fz;
  return v;
}

Composite composite(const std::vector<double>& sigma, const std::vector<Rgb>& color, const std::vector<double>& delta,
                    const std::vector<double>& s, const Rgb& background) {
  Composite out;
  double weight_sum = 0, depth_sum = 0;
  for (size_t i = 0; i < sigma.size(); ++i) {
    double optical = 0;
    for (size_t j = 0; j < i; ++j) optical += sigma[j] * delta[j];
    const double T = std::exp(-optical);
    const double alpha = 1 - std::exp(-sigma[i] * delta[i]);
    const double w = T * alpha;
    for (int k = 0; k < 3; ++k) out.color[k] += w * color[i][k];
    weight_sum += w;
    if (!s.empty()) depth_sum += w * s[i];
  }
  for (int k = 0; k < 3; ++k) out.color[k] += (1 - weight_sum) * background[k];
  out.opacity = weight_sum;
  out.depth = depth_sum / std::max(weight_sum, 1e-10);
  return out;
}

double ssim(const mixvox::Image& a, const mixvox::Image& b) {
  const int win = 11, half = 5;
  double g[11][11], norm = 0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      const double di = i - half, dj = j - half;
      g[i][j] = std::exp(-(di * di + dj * dj) / (2 * 1.5 * 1.5));
      norm += g[i][j];
    }
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const int W = int(a.width), H = int(a.height);
  double total = 0;
  for (int ch = 0; ch < 3; ++ch) {
    double acc = 0;
    int n = 0;
    for (int y0 = 0; y0 + win <= H; ++y0)
      for (int x0 = 0; x0 + win <= W; ++x0) {
        double mx = 0, my = 0;
        for (int i = 0; i < win; ++i)
          for (int j = 0; j < win; ++j) {
            const size_t p = size_t(y0 + i) * W + (x0 + j);
            mx += g[i][j] / norm * a.data[3 * p + ch];
            my += g[i][j] / norm * b.data[3 * p + ch];
          }
        double vx = 0, vy = 0, cxy = 0;
        for (int i = 0; i < win; ++i)
          for (int j = 0; j < win; ++j) {
            const size_t p = size_t(y0 + i) * W + (x0 + j);
            const double dx = a.data[3 * p + ch] - mx, dy = b.data[3 * p + ch] - my;
            vx += g[i][j] / norm * dx * dx;
            vy += g[i][j] / norm * dy * dy;
            cxy += g[i][j] / norm * dx * dy;
          }
        acc += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++n;
      }
    total += acc / n;
  }
  return total / 3;
}

std::vector<double> mlp_forward(const mixvox::Mlp& net, const std::vector<double>& in) {
  std::vector<double> x = in;
  for (size_t l = 0; l < net.layer_count(); ++l) {
    const auto& W = net.weight(l).value;
    const auto& B = net.bias(l).value;
    const size_t out = B.size(), n = x.size();
    std::vector<double> y(out);
    for (size_t o = 0; o < out; ++o) {
      double acc = B[o];
      for (size_t i = 0; i < n; ++i) acc += double(W[o * n + i]) * x[i];
      y[o] = (l + 1 < net.layer_count()) ? std::max(acc, 0.0) : acc;
    }
    x = y;
  }
  return x;
}

double softplus(double x) { return std::log(1 + std::exp(x)); }
double logistic(double x) { return 1 / (1 + std::exp(-x)); }

double pixel_std(const std::vector<Rgb>& seq) {
  Rgb mean{};
  for (const auto& c : seq)
    for (int k = 0; k < 3; ++k) mean[k] += c[k] / double(seq.size());
  double var = 0;
  for (const auto& c : seq)
    for (int k = 0; k < 3; ++k) var += (c[k] - mean[k]) * (c[k] - mean[k]);
  return std::sqrt(var / double(3 * seq.size()));
}

}  // namespace oracle
