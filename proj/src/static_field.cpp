#include "mixvox/static_field.hpp"

#include <atomic>
#include <cmath>

namespace mixvox {

namespace {
std::atomic<uint64_t> g_renormalized{0};
}

void DirectionEncoding::encode(Vec3 d, std::span<double> out) const {
  out[0] = d.x;
  out[1] = d.y;
  out[2] = d.z;
  size_t o = 3;
  double freq = M_PI;
  for (uint32_t k = 0; k < n_bands; ++k, freq *= 2.0) {
    for (int a = 0; a < 3; ++a) out[o++] = std::sin(freq * d[a]);
    for (int a = 0; a < 3; ++a) out[o++] = std::cos(freq * d[a]);
  }
}

std::vector<double> DirectionEncoding::operator()(Vec3 d) const {
  std::vector<double> out(size());
  encode(d, out);
  return out;
}

uint64_t direction_renormalizations() { return g_renormalized.load(); }

Vec3 checked_direction(Vec3 d) {
  const double n = norm(d);
  if (!(n > 0.0)) throw DomainError("view direction has zero length");
  if (std::abs(n - 1.0) > 1e-6) {
    g_renormalized.fetch_add(1, std::memory_order_relaxed);
    return d * (1.0 / n);
  }
  return d;
}

StaticField::StaticField(const StaticFieldConfig& cfg, uint32_t resolution, const BBox& bbox, Rng& rng)
    : encoding{cfg.n_bands}, density_shift(cfg.density_shift) {
  density_grid = make_grid(cfg.density_kind, GridDims::cube(resolution, 0), bbox, cfg.rank, "static.density", 0.f, rng);
  color_grid = make_grid(cfg.color_kind, GridDims::cube(resolution, cfg.color_channels), bbox, cfg.rank,
                         "static.color", 0.f, rng);
  if (cfg.color_kind == GridKind::dense)
    for (auto& v : color_grid.dense().values().value) v = float(normal(rng, 0.0, 0.1));
  color_net = Mlp({cfg.color_channels + encoding.size(), cfg.net_hidden, 3, cfg.net_layers}, "static.color_net");
  color_net.init(rng);
}

double StaticField::density_raw(Vec3 p) const {
  double v;
  density_grid.sample(p, std::span<double>(&v, 1));
  return v + density_shift;
}

Rgb StaticField::color(Vec3 p, Vec3 d) const {
  d = checked_direction(d);
  std::vector<double> enc(encoding.size());
  encoding.encode(d, enc);
  ColorCache cache;
  return color_forward(p, enc, cache);
}

Rgb StaticField::color_forward(Vec3 p, std::span<const double> dir_enc, ColorCache& cache) const {
  const uint32_t C = color_grid.dims().width();
  cache.feat.resize(C);
  color_grid.sample(p, cache.feat);
  cache.net_in.resize(C + dir_enc.size());
  std::copy(cache.feat.begin(), cache.feat.end(), cache.net_in.begin());
  std::copy(dir_enc.begin(), dir_enc.end(), cache.net_in.begin() + C);
  double logits[3];
  color_net.forward(cache.net_in, cache.net, std::span<double>(logits, 3));
  for (int k = 0; k < 3; ++k) cache.rgb[k] = sigmoid(logits[k]);
  return cache.rgb;
}

void StaticField::color_backward(Vec3 p, const ColorCache& cache, const Rgb& drgb, GradBuffer& grads) const {
  double dlogit[3];
  for (int k = 0; k < 3; ++k) dlogit[k] = drgb[k] * cache.rgb[k] * (1.0 - cache.rgb[k]);
  std::vector<double> din(cache.net_in.size());
  color_net.backward(cache.net, std::span<const double>(dlogit, 3), din, grads);
  color_grid.sample_backward(p, std::span<const double>(din.data(), cache.feat.size()), grads);
}

void StaticField::density_backward(Vec3 p, double raw, double dsigma, GradBuffer& grads) const {
  const double d = dsigma * sigmoid(raw);
  if (d == 0.0) return;
  density_grid.sample_backward(p, std::span<const double>(&d, 1), grads);
}

void StaticField::upsample(uint32_t resolution) {
  density_grid = density_grid.upsampled(GridDims::cube(resolution, density_grid.dims().channels));
  color_grid = color_grid.upsampled(GridDims::cube(resolution, color_grid.dims().channels));
}

double StaticField::tv_penalty(GradBuffer* grads, double density_weight, double color_weight) const {
  double tv = 0.0;
  if (density_weight > 0) tv += density_weight * density_grid.tv_penalty(grads, density_weight);
  if (color_weight > 0) tv += color_weight * color_grid.tv_penalty(grads, color_weight);
  return tv;
}

void StaticField::collect(std::vector<Param*>& out) {
  density_grid.collect(out);
  color_grid.collect(out);
  color_net.collect(out);
}

}  // namespace mixvox
