#include "mixvox/dynamic_field.hpp"

#include <algorithm>
#include <numeric>

namespace mixvox {

TimeQuerySet::TimeQuerySet(std::vector<uint32_t> indices, uint32_t frame_count) : idx_(std::move(indices)) {
  for (size_t i = 0; i < idx_.size(); ++i) {
    if (idx_[i] >= frame_count) throw DomainError("time index " + std::to_string(idx_[i]) + " out of range");
    if (i > 0 && idx_[i] <= idx_[i - 1]) throw DomainError("time indices must be distinct and increasing");
  }
}

TimeQuerySet TimeQuerySet::all(uint32_t frame_count) {
  std::vector<uint32_t> v(frame_count);
  std::iota(v.begin(), v.end(), 0u);
  return TimeQuerySet(std::move(v), frame_count);
}

TimeQuerySet TimeQuerySet::random(uint32_t q, uint32_t frame_count, Rng& rng) {
  q = std::min(q, frame_count);
  std::vector<uint32_t> pool(frame_count);
  std::iota(pool.begin(), pool.end(), 0u);
  // partial Fisher-Yates
  for (uint32_t i = 0; i < q; ++i) {
    const uint32_t j = i + uint32_t(uniform01(rng) * double(frame_count - i));
    std::swap(pool[i], pool[std::min(j, frame_count - 1)]);
  }
  pool.resize(q);
  std::sort(pool.begin(), pool.end());
  return TimeQuerySet(std::move(pool), frame_count);
}

DynamicField::DynamicField(const DynamicFieldConfig& cfg, uint32_t resolution, const BBox& bbox, uint32_t frame_count,
                           Rng& rng)
    : encoding{cfg.n_bands},
      density_shift(cfg.density_shift),
      concat_embed_width(cfg.concat_embed_width),
      frames_(frame_count),
      hidden_(cfg.hidden) {
  if (frame_count == 0) throw DomainError("dynamic field needs at least one frame");
  density_feat = make_grid(cfg.kind, GridDims::cube(resolution, cfg.density_channels), bbox, cfg.rank,
                           "dynamic.density_feat", 0.f, rng);
  color_feat = make_grid(cfg.kind, GridDims::cube(resolution, cfg.color_channels), bbox, cfg.rank,
                         "dynamic.color_feat", 0.f, rng);
  for (Grid* g : {&density_feat, &color_feat})
    if (g->kind() == GridKind::dense)
      for (auto& v : g->dense().values().value) v = float(normal(rng, 0.0, 0.1));
  density_dec = Mlp({cfg.density_channels, cfg.hidden, cfg.hidden, cfg.decompressor_layers}, "dynamic.density_dec");
  density_dec.init(rng);
  color_dec = Mlp({cfg.color_channels + encoding.size(), cfg.hidden, 3 * cfg.hidden, cfg.decompressor_layers},
                  "dynamic.color_dec");
  color_dec.init(rng);
  latent_sigma = Param("dynamic.latent_sigma", ParamGroup::network, size_t(frame_count) * cfg.hidden);
  latent_color = Param("dynamic.latent_color", ParamGroup::network, size_t(frame_count) * cfg.hidden);
  for (auto& v : latent_sigma.value) v = float(normal(rng, 0.0, cfg.latent_std));
  for (auto& v : latent_color.value) v = float(normal(rng, 0.0, cfg.latent_std));
}

void DynamicField::check_times(const TimeQuerySet& times) const {
  if (!times.empty() && times.indices().back() >= frames_) throw DomainError("time index beyond field frame count");
}

void DynamicField::density_forward(Vec3 p, const TimeQuerySet& times, DensityCache& cache,
                                   std::span<double> sigma) const {
  check_times(times);
  cache.feat.resize(density_feat.dims().width());
  density_feat.sample(p, cache.feat);
  cache.dec.resize(hidden_);
  density_dec.forward(cache.feat, cache.net, cache.dec);
  cache.raw.resize(times.size());
  const double* f = cache.dec.data();
  for (size_t q = 0; q < times.size(); ++q) {
    const float* w = latent_sigma.value.data() + size_t(times[q]) * hidden_;
    double acc = 0.0;
    for (uint32_t k = 0; k < hidden_; ++k) acc += double(w[k]) * f[k];
    cache.raw[q] = acc + density_shift;
    sigma[q] = softplus(cache.raw[q]);
  }
}

void DynamicField::density_backward(Vec3 p, const TimeQuerySet& times, const DensityCache& cache,
                                    std::span<const double> dsigma, GradBuffer& grads) const {
  std::vector<double> ddec(hidden_, 0.0);
  double* glat = grads.at(latent_sigma);
  bool any = false;
  for (size_t q = 0; q < times.size(); ++q) {
    const double draw = dsigma[q] * sigmoid(cache.raw[q]);
    if (draw == 0.0) continue;
    any = true;
    const size_t row = size_t(times[q]) * hidden_;
    const float* w = latent_sigma.value.data() + row;
    for (uint32_t k = 0; k < hidden_; ++k) {
      ddec[k] += draw * w[k];
      if (glat) glat[row + k] += draw * cache.dec[k];
    }
  }
  if (!any) return;
  std::vector<double> dfeat(cache.feat.size());
  density_dec.backward(cache.net, ddec, dfeat, grads);
  density_feat.sample_backward(p, dfeat, grads);
}

void DynamicField::color_forward(Vec3 p, std::span<const double> dir_enc, const TimeQuerySet& times,
                                 ColorCache& cache, std::span<Rgb> rgb) const {
  check_times(times);
  const uint32_t C = color_feat.dims().width();
  cache.feat.resize(C);
  color_feat.sample(p, cache.feat);
  cache.net_in.resize(C + dir_enc.size());
  std::copy(cache.feat.begin(), cache.feat.end(), cache.net_in.begin());
  std::copy(dir_enc.begin(), dir_enc.end(), cache.net_in.begin() + C);
  cache.dec.resize(3 * size_t(hidden_));
  color_dec.forward(cache.net_in, cache.net, cache.dec);
  cache.rgb.resize(times.size());
  for (size_t q = 0; q < times.size(); ++q) {
    const float* w = latent_color.value.data() + size_t(times[q]) * hidden_;
    for (int ch = 0; ch < 3; ++ch) {
      const double* blk = cache.dec.data() + size_t(ch) * hidden_;
      double acc = 0.0;
      for (uint32_t k = 0; k < hidden_; ++k) acc += double(w[k]) * blk[k];
      cache.rgb[q][ch] = sigmoid(acc);
    }
    rgb[q] = cache.rgb[q];
  }
}

void DynamicField::color_backward(Vec3 p, const TimeQuerySet& times, const ColorCache& cache,
                                  std::span<const Rgb> drgb, GradBuffer& grads) const {
  std::vector<double> ddec(3 * size_t(hidden_), 0.0);
  double* glat = grads.at(latent_color);
  bool any = false;
  for (size_t q = 0; q < times.size(); ++q) {
    const size_t row = size_t(times[q]) * hidden_;
    const float* w = latent_color.value.data() + row;
    for (int ch = 0; ch < 3; ++ch) {
      const double s = cache.rgb[q][ch];
      const double dl = drgb[q][ch] * s * (1.0 - s);
      if (dl == 0.0) continue;
      any = true;
      const double* blk = cache.dec.data() + size_t(ch) * hidden_;
      double* dblk = ddec.data() + size_t(ch) * hidden_;
      for (uint32_t k = 0; k < hidden_; ++k) {
        dblk[k] += dl * w[k];
        if (glat) glat[row + k] += dl * blk[k];
      }
    }
  }
  if (!any) return;
  std::vector<double> din(cache.net_in.size());
  color_dec.backward(cache.net, ddec, din, grads);
  color_feat.sample_backward(p, std::span<const double>(din.data(), cache.feat.size()), grads);
}

std::vector<double> DynamicField::density(Vec3 p, const TimeQuerySet& times) const {
  DensityCache cache;
  std::vector<double> sigma(times.size());
  density_forward(p, times, cache, sigma);
  return sigma;
}

std::vector<double> DynamicField::density_inner(Vec3 p, const TimeQuerySet& times) const {
  DensityCache cache;
  std::vector<double> sigma(times.size());
  density_forward(p, times, cache, sigma);
  for (auto& r : cache.raw) r -= density_shift;
  return cache.raw;
}

std::vector<Rgb> DynamicField::color(Vec3 p, Vec3 d, const TimeQuerySet& times) const {
  d = checked_direction(d);
  std::vector<double> enc(encoding.size());
  encoding.encode(d, enc);
  ColorCache cache;
  std::vector<Rgb> rgb(times.size());
  color_forward(p, enc, times, cache, rgb);
  return rgb;
}

void DynamicField::upsample(uint32_t resolution) {
  density_feat = density_feat.upsampled(GridDims::cube(resolution, density_feat.dims().channels));
  color_feat = color_feat.upsampled(GridDims::cube(resolution, color_feat.dims().channels));
}

double DynamicField::tv_penalty(GradBuffer* grads, double density_weight, double color_weight) const {
  double tv = 0.0;
  if (density_weight > 0) tv += density_weight * density_feat.tv_penalty(grads, density_weight);
  if (color_weight > 0) tv += color_weight * color_feat.tv_penalty(grads, color_weight);
  return tv;
}

void DynamicField::collect(std::vector<Param*>& out) {
  density_feat.collect(out);
  color_feat.collect(out);
  density_dec.collect(out);
  color_dec.collect(out);
  out.push_back(&latent_sigma);
  out.push_back(&latent_color);
}

FlopsReport flops_from_counts(double flop_mlp, double flop_inn, double flop_mlp_concat, uint32_t q) {
  FlopsReport r;
  r.flop_mlp = flop_mlp;
  r.flop_inn = flop_inn;
  r.flop_mlp_concat = flop_mlp_concat;
  r.inner_total = flop_mlp + double(q) * flop_inn;
  r.concat_total = double(q) * flop_mlp_concat;
  r.ratio = r.inner_total > 0 ? r.concat_total / r.inner_total : 0.0;
  return r;
}

FlopsReport flops_report(const DynamicField& field, uint32_t frame_count, uint32_t q) {
  if (q == 0) q = frame_count;
  const double mlp = double(field.density_dec.flops() + field.color_dec.flops());
  const double inn = 4.0 * field.hidden();  // density row + three color rows
  const double extra =
      double(field.concat_embed_width) * (field.density_dec.layer_out(0) + field.color_dec.layer_out(0));
  return flops_from_counts(mlp, inn, mlp + extra, q);
}

}  // namespace mixvox
