#include "mixvox/variation.hpp"

#include <algorithm>
#include <chrono>

#include "mixvox/parallel.hpp"
#include "mixvox/params.hpp"

namespace mixvox {

double VariationField::logit(Vec3 p) const {
  double v;
  logits.sample(p, std::span<double>(&v, 1));
  return v;
}

void VariationField::set_trainable(bool on) {
  std::vector<Param*> ps;
  logits.collect(ps);
  for (Param* p : ps) {
    const bool is_mix = p->name.ends_with(".mix");
    p->group = on ? (is_mix ? ParamGroup::network : ParamGroup::voxel) : ParamGroup::frozen;
  }
}

VariationField make_variation_field(GridKind kind, uint32_t resolution, const BBox& bbox, double init_logit,
                                    uint32_t rank, Rng& rng) {
  VariationField vf;
  const GridDims dims = GridDims::cube(resolution, 0);
  if (kind == GridKind::dense) {
    vf.logits = Grid(DenseGrid(dims, bbox, float(init_logit), "variation.logits"));
  } else {
    FactorizedGrid fg(dims, bbox, rank, "variation.logits");
    fg.init_random(rng, 0.01, 0.01);
    // first component of the first pairing becomes the constant init_logit
    auto& line = fg.line(0).value;
    auto& plane = fg.plane(0).value;
    std::fill(line.begin(), line.begin() + dims.nx, 1.f);
    std::fill(plane.begin(), plane.begin() + size_t(dims.ny) * dims.nz, 1.f);
    fg.mix().value[0] = float(init_logit);
    vf.logits = Grid(std::move(fg));
  }
  vf.set_trainable(false);
  return vf;
}

RayDynamicEstimate estimate_ray_dynamic(const VariationField& vf, std::span<const Vec3> samples, double floor_logit) {
  RayDynamicEstimate e;
  const BBox& box = vf.logits.bbox();
  for (size_t i = 0; i < samples.size(); ++i) {
    if (!box.contains(samples[i])) continue;
    const double v = vf.logit(samples[i]);
    if (e.argmax < 0 || v > e.max_logit) {
      e.max_logit = v;
      e.argmax = int(i);
    }
  }
  if (e.argmax < 0) e.max_logit = floor_logit;
  e.m_hat = sigmoid(e.max_logit);
  return e;
}

double variation_loss(std::span<const double> m_hat, std::span<const uint8_t> m) {
  if (m_hat.size() != m.size()) throw DomainError("variation loss: size mismatch");
  if (m_hat.empty()) return 0.0;
  double acc = 0.0;
  for (size_t i = 0; i < m.size(); ++i) {
    const double p = std::clamp(m_hat[i], kBceClamp, 1.0 - kBceClamp);
    acc += m[i] ? -std::log(p) : -std::log(1.0 - p);
  }
  return acc / double(m.size());
}

double variation_loss_grad_logit(double m_hat, uint8_t m, size_t batch) {
  if (m_hat < kBceClamp || m_hat > 1.0 - kBceClamp) return 0.0;
  // d/dx of BCE(sigmoid(x)) = sigmoid(x) - m
  return (m_hat - double(m)) / double(batch);
}

VariationField train_variation_field(const MultiViewVideoDataset& ds, const VariationTrainConfig& cfg,
                                     uint32_t resolution, VariationTrainReport* report) {
  if (ds.cameras.empty() || ds.train_cameras().empty() || ds.frame_count == 0)
    throw DomainError("variation field training needs a non-empty dataset");
  if (ds.variance.size() != ds.cameras.size()) throw DomainError("variance maps have not been computed");
  const auto t0 = std::chrono::steady_clock::now();

  Rng init_rng = make_rng(cfg.seed, 0x7661720001ULL);
  VariationField vf = make_variation_field(cfg.kind, resolution, ds.bbox, cfg.init_logit, cfg.rank, init_rng);
  vf.set_trainable(true);
  std::vector<Param*> plist;
  vf.logits.collect(plist);
  ParamSet params(plist);
  Adam adam(params);
  const double vw = voxel_width(vf.logits.dims(), ds.bbox);
  const int threads = std::max(1, cfg.threads);
  std::vector<GradBuffer> grads(size_t(threads), params.make_grads());
  std::vector<double> losses(static_cast<size_t>(threads));
  double last_loss = 0.0;

  for (uint32_t it = 0; it < cfg.iterations; ++it) {
    Rng batch_rng = make_rng(cfg.seed, 0x7661720100ULL + it);
    const RayBatch batch = sample_ray_batch(ds, cfg.rays, batch_rng, cfg.dynamic_fraction_floor, cfg.gamma);
    const uint64_t jitter_seed = mix_seed(cfg.seed, 0x766172a000ULL + it);
    parallel_for(batch.size(), threads, [&](size_t w, size_t b, size_t e) {
      GradBuffer& g = grads[w];
      g.zero();
      double loss = 0.0;
      for (size_t i = b; i < e; ++i) {
        Ray ray = batch.rays[i];
        const uint8_t m = batch.dynamic[i];
        RayDynamicEstimate est;
        RaySamples smp;
        if (clip_to_bbox(ray, ds.bbox)) {
          Rng jitter = make_rng(jitter_seed, i);
          smp = sample_ray(ray, cfg.step_scale, vw, ds.bbox, &jitter);
          est = estimate_ray_dynamic(vf, smp.points);
        } else {
          est.max_logit = kVariationFloorLogit;
          est.m_hat = sigmoid(kVariationFloorLogit);
        }
        const double p = std::clamp(est.m_hat, kBceClamp, 1.0 - kBceClamp);
        loss += m ? -std::log(p) : -std::log(1.0 - p);
        if (est.argmax < 0) continue;
        const double d = variation_loss_grad_logit(est.m_hat, m, batch.size());
        if (d != 0.0) vf.logits.sample_backward(smp.points[size_t(est.argmax)], std::span<const double>(&d, 1), g);
      }
      losses[w] = loss;
    });
    const size_t used = std::min<size_t>(size_t(threads), std::max<size_t>(1, batch.size()));
    for (size_t w = 1; w < used; ++w) grads[0].accumulate(grads[w]);
    double loss = 0.0;
    for (size_t w = 0; w < used; ++w) loss += losses[w];
    last_loss = batch.size() ? loss / double(batch.size()) : 0.0;
    adam.step(params, grads[0], LearningRates{cfg.lr, cfg.lr});
  }
  vf.set_trainable(false);
  if (report) {
    report->final_loss = last_loss;
    report->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return vf;
}

bool DynamicMask::at(Vec3 p) const {
  if (bits.empty() || !bbox.contains(p)) return false;
  size_t idx = 0;
  for (int a = 0; a < 3; ++a) {
    const uint32_t n = dims.axis(a);
    const double f = (p[a] - bbox.lo[a]) / bbox.extent(a) * double(n - 1);
    const uint32_t i = uint32_t(std::clamp<long>(std::lround(f), 0, long(n - 1)));
    idx = idx * n + i;
  }
  return bits[idx] != 0;
}

size_t DynamicMask::count() const { return size_t(std::count(bits.begin(), bits.end(), uint8_t(1))); }

DynamicMask empty_mask(const GridDims& dims, const BBox& bbox) {
  DynamicMask m{GridDims{dims.nx, dims.ny, dims.nz, 0}, bbox, 1, {}};
  m.bits.assign(dims.lattice_size(), 0);
  return m;
}

DynamicMask full_mask(const GridDims& dims, const BBox& bbox) {
  DynamicMask m = empty_mask(dims, bbox);
  std::fill(m.bits.begin(), m.bits.end(), uint8_t(1));
  return m;
}

DynamicMask infer_dynamic_mask(const VariationField& vf, double beta, uint32_t k_m) {
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("beta must lie in (0, 1)");
  if (k_m == 0 || k_m % 2 == 0) throw ConfigError("k_m must be an odd integer >= 1");
  const GridDims& d = vf.logits.dims();
  DynamicMask m = empty_mask(d, vf.logits.bbox());
  m.kernel = k_m;
  const double thr = logit(beta);
  if (vf.logits.kind() == GridKind::dense) {
    const auto& v = vf.logits.dense().values().value;
    for (size_t i = 0; i < v.size(); ++i) m.bits[i] = double(v[i]) > thr ? 1 : 0;
  } else {
    const DenseGrid rec = reconstruct_dense(vf.logits.factorized());
    const auto& v = rec.values().value;
    for (size_t i = 0; i < v.size(); ++i) m.bits[i] = double(v[i]) > thr ? 1 : 0;
  }
  return m;
}

std::vector<uint8_t> dilate_ray_bits(std::span<const uint8_t> bits, uint32_t k) {
  if (k == 0 || k % 2 == 0) throw ConfigError("max-pool kernel must be odd");
  const long n = long(bits.size()), r = long(k / 2);
  std::vector<uint8_t> out(bits.size(), 0);
  if (r == 0) {
    std::copy(bits.begin(), bits.end(), out.begin());
    return out;
  }
  for (long i = 0; i < n; ++i) {
    if (!bits[size_t(i)]) continue;
    const long lo = std::max(0L, i - r), hi = std::min(n - 1, i + r);
    for (long j = lo; j <= hi; ++j) out[size_t(j)] = 1;
  }
  return out;
}

std::vector<uint8_t> encode_mask_rle(const DynamicMask& m) {
  if (m.bits.size() != m.dims.lattice_size()) throw DomainError("mask size does not match its dims");
  ByteWriter w;
  w.raw("MXMK", 4);
  w.u32(m.dims.nx);
  w.u32(m.dims.ny);
  w.u32(m.dims.nz);
  w.u32(m.dims.channels);
  for (float v : m.bbox.lo) w.f32(v);
  for (float v : m.bbox.hi) w.f32(v);
  w.u32(m.kernel);
  std::vector<uint32_t> runs;
  uint8_t cur = 0;
  uint32_t len = 0;
  for (uint8_t b : m.bits) {
    if (b != cur) {
      runs.push_back(len);
      cur = b;
      len = 0;
    }
    ++len;
  }
  runs.push_back(len);
  w.u32(uint32_t(runs.size()));
  for (uint32_t r : runs) w.u32(r);
  return w.take();
}

DynamicMask decode_mask_rle(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  char magic[4];
  r.raw(magic, 4);
  if (std::string(magic, 4) != "MXMK") throw LoadError("not a mask file (bad magic)");
  DynamicMask m;
  m.dims.nx = r.u32();
  m.dims.ny = r.u32();
  m.dims.nz = r.u32();
  m.dims.channels = r.u32();
  for (auto& v : m.bbox.lo) v = r.f32();
  for (auto& v : m.bbox.hi) v = r.f32();
  m.kernel = r.u32();
  const uint32_t nruns = r.u32();
  if (nruns > r.remaining() / 4) throw LoadError("mask run table truncated");
  const size_t total = m.dims.lattice_size();
  m.bits.reserve(total);
  uint8_t cur = 0;
  for (uint32_t i = 0; i < nruns; ++i) {
    const uint32_t len = r.u32();
    if (m.bits.size() + len > total) throw LoadError("mask runs exceed lattice size");
    m.bits.insert(m.bits.end(), len, cur);
    cur ^= 1;
  }
  if (m.bits.size() != total) throw LoadError("mask runs do not cover the lattice");
  return m;
}

}  // namespace mixvox
