#include "mixvox/render.hpp"

#include <algorithm>
#include <cmath>

#include "mixvox/parallel.hpp"

namespace mixvox {

RenderMode parse_render_mode(const std::string& s) {
  if (s == "mixed") return RenderMode::mixed;
  if (s == "static") return RenderMode::pure_static;
  if (s == "dynamic") return RenderMode::full_dynamic;
  throw ConfigError("unknown render mode '" + s + "' (expected mixed, static or dynamic)");
}

std::string to_string(RenderMode m) {
  return m == RenderMode::mixed ? "mixed" : (m == RenderMode::pure_static ? "static" : "dynamic");
}

CompositeResult composite(std::span<const double> sigma, std::span<const Rgb> color, std::span<const double> delta,
                          std::span<const double> s, const Rgb& bg) {
  CompositeResult r;
  double trans = 1.0, wsum = 0.0, dsum = 0.0;
  for (size_t i = 0; i < sigma.size(); ++i) {
    const double decay = std::exp(-sigma[i] * delta[i]);
    const double w = trans * (1.0 - decay);
    for (int k = 0; k < 3; ++k) r.color[k] += w * color[i][k];
    wsum += w;
    if (!s.empty()) dsum += w * s[i];
    trans *= decay;
  }
  for (int k = 0; k < 3; ++k) r.color[k] += trans * bg[k];
  r.opacity = std::clamp(wsum, 0.0, 1.0);
  r.depth = dsum / std::max(wsum, 1e-10);
  return r;
}

void composite_backward(std::span<const double> sigma, std::span<const Rgb> color, std::span<const double> delta,
                        const Rgb& bg, const Rgb& dC, std::span<double> dsigma, std::span<Rgb> dcolor) {
  const size_t n = sigma.size();
  // Forward transmittances T_0..T_n.
  thread_local std::vector<double> T, w;
  T.resize(n + 1);
  w.resize(n);
  T[0] = 1.0;
  for (size_t i = 0; i < n; ++i) {
    const double decay = std::exp(-sigma[i] * delta[i]);
    w[i] = T[i] * (1.0 - decay);
    T[i + 1] = T[i] * decay;
  }
  // dC/dtau_i = T_{i+1} c_i - sum_{k>i} w_k c_k - T_n bg
  Rgb tail{};
  for (int k = 0; k < 3; ++k) tail[k] = T[n] * bg[k];
  for (size_t ii = n; ii-- > 0;) {
    double g = 0.0;
    for (int k = 0; k < 3; ++k) g += dC[k] * (T[ii + 1] * color[ii][k] - tail[k]);
    dsigma[ii] = g * delta[ii];
    for (int k = 0; k < 3; ++k) {
      dcolor[ii][k] = w[ii] * dC[k];
      tail[k] += w[ii] * color[ii][k];
    }
  }
}

SamplePartition partition_samples(const DynamicMask& mask, std::span<const Vec3> points, RenderMode mode) {
  SamplePartition p;
  const size_t n = points.size();
  p.dynamic.assign(n, 0);
  if (mode == RenderMode::full_dynamic) {
    std::fill(p.dynamic.begin(), p.dynamic.end(), uint8_t(1));
  } else if (mode == RenderMode::mixed && !mask.bits.empty()) {
    bool any = false;
    for (size_t i = 0; i < n; ++i) {
      p.dynamic[i] = mask.at(points[i]) ? 1 : 0;
      any |= p.dynamic[i] != 0;
    }
    if (any && mask.kernel > 1) p.dynamic = dilate_ray_bits(p.dynamic, mask.kernel);
  }
  for (uint32_t i = 0; i < n; ++i) (p.dynamic[i] ? p.dynamic_idx : p.static_idx).push_back(i);
  return p;
}

namespace {

struct Workspace {
  std::vector<StaticField::ColorCache> scol;
  std::vector<DynamicField::DensityCache> dden;
  std::vector<DynamicField::ColorCache> dcol;
  std::vector<double> sigma;  // Q x N, time-major
  std::vector<Rgb> color;     // Q x N
  std::vector<double> raw;    // static raw density per sample
  std::vector<uint8_t> colored;
  std::vector<double> dsig;   // Q x N
  std::vector<Rgb> dcol_g;    // Q x N
  std::vector<double> enc_s, enc_d;
  std::vector<double> tmp_sig;
  std::vector<Rgb> tmp_rgb;
};

thread_local Workspace tls;

/// Shared forward (and optionally reverse) pass.
RayTrainStats trace(const Model& m, const Ray& ray_in, const TimeQuerySet& times, const RenderSettings& rs,
                    Rng* jitter, std::span<const Rgb> gt, double grad_scale, GradBuffer* grads, RayRender* out) {
  RayTrainStats stats;
  const size_t Q = times.size();
  if (out) {
    out->color.assign(Q, rs.background);
    out->depth.assign(Q, 0.0);
    out->opacity.assign(Q, 0.0);
  }
  if (Q == 0) return stats;
  Ray ray = ray_in;
  if (!clip_to_bbox(ray, m.bbox)) {
    if (!gt.empty())
      for (size_t q = 0; q < Q; ++q)
        for (int k = 0; k < 3; ++k) stats.sq_error += (rs.background[k] - gt[q][k]) * (rs.background[k] - gt[q][k]);
    return stats;
  }
  const RaySamples smp = sample_ray(ray, rs.effective_step(), m.voxel_width(), m.bbox, jitter);
  const size_t N = smp.size();
  const SamplePartition part = partition_samples(m.mask, smp.points, rs.mode);
  stats.samples = N;
  stats.dynamic_samples = part.dynamic_idx.size();

  Workspace& w = tls;
  const Vec3 dir = checked_direction(ray.d);
  w.enc_s.resize(m.stat.encoding.size());
  m.stat.encoding.encode(dir, w.enc_s);
  w.enc_d.resize(m.dyn.encoding.size());
  m.dyn.encoding.encode(dir, w.enc_d);
  // With no dynamic sample every time shares one composite, and the reverse
  // pass is linear in dC, so one composite serves all Q.
  const size_t Qc = part.dynamic_idx.empty() ? 1 : Q;
  w.sigma.assign(Qc * N, 0.0);
  w.color.assign(Qc * N, Rgb{});
  w.raw.assign(N, 0.0);
  w.colored.assign(N, 0);
  if (w.scol.size() < part.static_idx.size()) w.scol.resize(part.static_idx.size());
  if (w.dden.size() < part.dynamic_idx.size()) w.dden.resize(part.dynamic_idx.size());
  if (w.dcol.size() < part.dynamic_idx.size()) w.dcol.resize(part.dynamic_idx.size());
  w.tmp_sig.resize(Q);
  w.tmp_rgb.resize(Q);

  auto keep_color = [&](double max_sigma, double delta) {
    return rs.prune_alpha <= 0.0 || -std::expm1(-max_sigma * delta) >= rs.prune_alpha;
  };

  for (size_t k = 0; k < part.static_idx.size(); ++k) {
    const size_t i = part.static_idx[k];
    const Vec3 p = smp.points[i];
    w.raw[i] = m.stat.density_raw(p);
    const double sig = softplus(w.raw[i]);
    for (size_t q = 0; q < Qc; ++q) w.sigma[q * N + i] = sig;
    if (keep_color(sig, smp.delta[i])) {
      w.colored[i] = 1;
      const Rgb c = m.stat.color_forward(p, w.enc_s, w.scol[k]);
      for (size_t q = 0; q < Qc; ++q) w.color[q * N + i] = c;
    }
  }
  for (size_t k = 0; k < part.dynamic_idx.size(); ++k) {
    const size_t i = part.dynamic_idx[k];
    const Vec3 p = smp.points[i];
    m.dyn.density_forward(p, times, w.dden[k], w.tmp_sig);
    double smax = 0.0;
    for (size_t q = 0; q < Q; ++q) {
      w.sigma[q * N + i] = w.tmp_sig[q];
      smax = std::max(smax, w.tmp_sig[q]);
    }
    if (keep_color(smax, smp.delta[i])) {
      w.colored[i] = 1;
      m.dyn.color_forward(p, w.enc_d, times, w.dcol[k], w.tmp_rgb);
      for (size_t q = 0; q < Q; ++q) w.color[q * N + i] = w.tmp_rgb[q];
    }
  }
  if (out) out->colored_samples = size_t(std::count(w.colored.begin(), w.colored.end(), uint8_t(1)));

  const bool backward = grads && !gt.empty();
  if (backward) {
    w.dsig.assign(Qc * N, 0.0);
    w.dcol_g.assign(Qc * N, Rgb{});
  }
  for (size_t qc = 0; qc < Qc; ++qc) {
    const std::span<const double> sg(w.sigma.data() + qc * N, N);
    const std::span<const Rgb> cl(w.color.data() + qc * N, N);
    const CompositeResult r = composite(sg, cl, smp.delta, smp.s, rs.background);
    // Times served by this composite: all of them when shared.
    const size_t q_lo = Qc == 1 ? 0 : qc, q_hi = Qc == 1 ? Q : qc + 1;
    Rgb dC{};
    for (size_t q = q_lo; q < q_hi; ++q) {
      if (out) {
        out->color[q] = r.color;
        out->depth[q] = r.depth;
        out->opacity[q] = r.opacity;
      }
      if (gt.empty()) continue;
      for (int k = 0; k < 3; ++k) {
        const double e = r.color[k] - gt[q][k];
        stats.sq_error += e * e;
        dC[k] += 2.0 * e * grad_scale;
      }
    }
    if (backward)
      composite_backward(sg, cl, smp.delta, rs.background, dC, std::span<double>(w.dsig.data() + qc * N, N),
                         std::span<Rgb>(w.dcol_g.data() + qc * N, N));
  }
  if (!backward) return stats;

  for (size_t k = 0; k < part.static_idx.size(); ++k) {
    const size_t i = part.static_idx[k];
    double ds = 0.0;
    Rgb dc{};
    for (size_t q = 0; q < Qc; ++q) {
      ds += w.dsig[q * N + i];
      for (int c = 0; c < 3; ++c) dc[c] += w.dcol_g[q * N + i][c];
    }
    m.stat.density_backward(smp.points[i], w.raw[i], ds, *grads);
    if (w.colored[i]) m.stat.color_backward(smp.points[i], w.scol[k], dc, *grads);
  }
  for (size_t k = 0; k < part.dynamic_idx.size(); ++k) {
    const size_t i = part.dynamic_idx[k];
    for (size_t q = 0; q < Q; ++q) {
      w.tmp_sig[q] = w.dsig[q * N + i];
      w.tmp_rgb[q] = w.dcol_g[q * N + i];
    }
    m.dyn.density_backward(smp.points[i], times, w.dden[k], w.tmp_sig, *grads);
    if (w.colored[i]) m.dyn.color_backward(smp.points[i], times, w.dcol[k], w.tmp_rgb, *grads);
  }
  return stats;
}

}  // namespace

RayRender render_ray(const Model& m, const Ray& ray, const TimeQuerySet& times, const RenderSettings& rs, Rng* jitter) {
  RayRender out;
  const RayTrainStats st = trace(m, ray, times, rs, jitter, {}, 0.0, nullptr, &out);
  out.samples = st.samples;
  out.dynamic_samples = st.dynamic_samples;
  return out;
}

RayTrainStats backprop_ray(const Model& m, const Ray& ray, const TimeQuerySet& times, std::span<const Rgb> gt,
                           const RenderSettings& rs, Rng* jitter, double grad_scale, GradBuffer& grads) {
  if (gt.size() != times.size()) throw DomainError("ground truth must hold one color per queried time");
  return trace(m, ray, times, rs, jitter, gt, grad_scale, &grads, nullptr);
}

RayRender render_ray_reference(const Model& m, const Ray& ray_in, const TimeQuerySet& times, const RenderSettings& rs) {
  RayRender out;
  const size_t Q = times.size();
  out.color.assign(Q, rs.background);
  out.depth.assign(Q, 0.0);
  out.opacity.assign(Q, 0.0);
  Ray ray = ray_in;
  if (Q == 0 || !clip_to_bbox(ray, m.bbox)) return out;
  const RaySamples smp = sample_ray(ray, rs.effective_step(), m.voxel_width(), m.bbox, nullptr);
  const SamplePartition part = partition_samples(m.mask, smp.points, rs.mode);
  out.samples = smp.size();
  out.dynamic_samples = part.dynamic_idx.size();
  for (size_t q = 0; q < Q; ++q) {
    const TimeQuerySet one = TimeQuerySet::single(times[q], m.frame_count);
    Rgb c{};
    double opacity = 0.0, depth = 0.0, optical = 0.0;
    for (size_t i = 0; i < smp.size(); ++i) {
      const Vec3 p = smp.points[i];
      double sigma;
      Rgb ci;
      if (part.dynamic[i]) {
        sigma = m.dyn.density(p, one)[0];
        ci = m.dyn.color(p, ray.d, one)[0];
      } else {
        sigma = m.stat.density(p);
        ci = m.stat.color(p, ray.d);
      }
      const double trans = std::exp(-optical);
      const double alpha = 1.0 - std::exp(-sigma * smp.delta[i]);
      for (int k = 0; k < 3; ++k) c[k] += trans * alpha * ci[k];
      opacity += trans * alpha;
      depth += trans * alpha * smp.s[i];
      optical += sigma * smp.delta[i];
    }
    const double trans = std::exp(-optical);
    for (int k = 0; k < 3; ++k) c[k] += trans * rs.background[k];
    out.color[q] = c;
    out.opacity[q] = opacity;
    out.depth[q] = depth / std::max(opacity, 1e-10);
  }
  return out;
}

std::vector<float> RenderedFrame::normalized_depth() const {
  float lo = INFINITY, hi = -INFINITY;
  for (size_t i = 0; i < depth.size(); ++i)
    if (opacity[i] > 0.5f) {
      lo = std::min(lo, depth[i]);
      hi = std::max(hi, depth[i]);
    }
  std::vector<float> out(depth.size(), 0.f);
  if (!(hi >= lo)) return out;
  const float span = hi > lo ? hi - lo : 1.f;
  for (size_t i = 0; i < depth.size(); ++i)
    if (opacity[i] > 0.5f) out[i] = (depth[i] - lo) / span;
  return out;
}

RenderedFrame render_frame(const Model& m, const CameraSpec& cam, uint32_t t, const RenderSettings& rs, int threads) {
  cam.validate();
  const TimeQuerySet times = TimeQuerySet::single(t, m.frame_count);
  RenderedFrame f;
  f.rgb = Image(cam.width, cam.height);
  f.depth.assign(cam.pixel_count(), 0.f);
  f.opacity.assign(cam.pixel_count(), 0.f);
  parallel_for(cam.height, threads, [&](size_t, size_t b, size_t e) {
    for (size_t y = b; y < e; ++y)
      for (uint32_t x = 0; x < cam.width; ++x) {
        const size_t idx = y * cam.width + x;
        const RayRender r = render_ray(m, generate_ray(cam, x, uint32_t(y)), times, rs);
        Rgb c = r.color[0];
        for (auto& v : c) v = std::clamp(v, 0.0, 1.0);
        f.rgb.set(idx, c);
        f.depth[idx] = float(r.depth[0]);
        f.opacity[idx] = float(r.opacity[0]);
      }
  });
  return f;
}

double dynamic_point_fraction(const Model& m, std::span<const Ray> rays, const RenderSettings& rs) {
  size_t total = 0, dyn = 0;
  for (Ray r : rays) {
    if (!clip_to_bbox(r, m.bbox)) continue;
    const RaySamples smp = sample_ray(r, rs.effective_step(), m.voxel_width(), m.bbox, nullptr);
    const SamplePartition p = partition_samples(m.mask, smp.points, rs.mode);
    total += smp.size();
    dyn += p.dynamic_idx.size();
  }
  return total ? double(dyn) / double(total) : 0.0;
}

}  // namespace mixvox
