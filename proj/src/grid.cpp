#include "mixvox/grid.hpp"

#include <algorithm>
#include <cmath>

namespace mixvox {

GridKind parse_grid_kind(const std::string& s) {
  if (s == "dense") return GridKind::dense;
  if (s == "factorized") return GridKind::factorized;
  throw ConfigError("unknown grid kind '" + s + "' (expected dense|factorized)");
}

std::string to_string(GridKind k) { return k == GridKind::dense ? "dense" : "factorized"; }

void GridDims::validate() const {
  if (nx < 2 || ny < 2 || nz < 2)
    throw DomainError("grid needs at least 2 corners per axis");
}

CellCoord locate(const GridDims& dims, const BBox& bbox, Vec3 p) {
  if (!bbox.contains(p)) throw DomainError("sample point outside grid bounds");
  CellCoord c;
  for (int a = 0; a < 3; ++a) {
    const uint32_t n = dims.axis(a);
    const double u = (p[a] - bbox.lo[a]) / bbox.extent(a) * double(n - 1);
    const double fl = std::floor(u);
    uint32_t i = fl < 0 ? 0u : uint32_t(fl);
    if (i > n - 2) i = n - 2;
    c.i0[a] = i;
    c.f[a] = std::clamp(u - double(i), 0.0, 1.0);
  }
  return c;
}

std::array<double, 8> corner_weights(const CellCoord& c) {
  std::array<double, 8> w;
  for (int k = 0; k < 8; ++k) {
    const double wx = (k & 4) ? c.f[0] : 1.0 - c.f[0];
    const double wy = (k & 2) ? c.f[1] : 1.0 - c.f[1];
    const double wz = (k & 1) ? c.f[2] : 1.0 - c.f[2];
    w[k] = wx * wy * wz;
  }
  return w;
}

double voxel_width(const GridDims& dims, const BBox& bbox) {
  double w = bbox.extent(0) / (dims.nx - 1);
  w = std::min(w, bbox.extent(1) / (dims.ny - 1));
  w = std::min(w, bbox.extent(2) / (dims.nz - 1));
  return w;
}

namespace {

// Maps new-lattice index onto the old lattice for resampling.
struct AxisTap {
  uint32_t i0;
  double f;
};

AxisTap resample_tap(uint32_t n_old, uint32_t n_new, uint32_t i) {
  if (n_old == n_new) return i + 1 < n_old ? AxisTap{i, 0.0} : AxisTap{n_old - 2, 1.0};
  const double u = double(i) * double(n_old - 1) / double(n_new - 1);
  uint32_t i0 = std::min<uint32_t>(uint32_t(std::floor(u)), n_old - 2);
  return {i0, std::clamp(u - double(i0), 0.0, 1.0)};
}

void check_upsample(const GridDims& from, const GridDims& to) {
  to.validate();
  if (to.channels != from.channels) throw UnsupportedError("upsample cannot change channel count");
  if (to.nx < from.nx || to.ny < from.ny || to.nz < from.nz)
    throw UnsupportedError("upsample cannot shrink a grid");
}

// 1D linear resampling of R rows of length n_old.
std::vector<float> resample_rows(const std::vector<float>& src, uint32_t rows, uint32_t n_old, uint32_t n_new) {
  std::vector<float> out(size_t(rows) * n_new);
  for (uint32_t r = 0; r < rows; ++r) {
    const float* s = src.data() + size_t(r) * n_old;
    for (uint32_t i = 0; i < n_new; ++i) {
      const AxisTap t = resample_tap(n_old, n_new, i);
      out[size_t(r) * n_new + i] = float((1.0 - t.f) * s[t.i0] + t.f * s[t.i0 + 1]);
    }
  }
  return out;
}

// Bilinear resampling of R planes (na x nb, b fastest).
std::vector<float> resample_planes(const std::vector<float>& src, uint32_t rows, uint32_t na, uint32_t nb,
                                   uint32_t ma, uint32_t mb) {
  std::vector<float> out(size_t(rows) * ma * mb);
  for (uint32_t r = 0; r < rows; ++r) {
    const float* s = src.data() + size_t(r) * na * nb;
    for (uint32_t i = 0; i < ma; ++i) {
      const AxisTap ta = resample_tap(na, ma, i);
      for (uint32_t j = 0; j < mb; ++j) {
        const AxisTap tb = resample_tap(nb, mb, j);
        const double v00 = s[size_t(ta.i0) * nb + tb.i0];
        const double v01 = s[size_t(ta.i0) * nb + tb.i0 + 1];
        const double v10 = s[size_t(ta.i0 + 1) * nb + tb.i0];
        const double v11 = s[size_t(ta.i0 + 1) * nb + tb.i0 + 1];
        const double v = (1 - ta.f) * ((1 - tb.f) * v00 + tb.f * v01) + ta.f * ((1 - tb.f) * v10 + tb.f * v11);
        out[(size_t(r) * ma + i) * mb + j] = float(v);
      }
    }
  }
  return out;
}

// Mean squared difference between neighbours along one axis of a row-major
// block [outer][n][inner]. Gradient accumulates into g when non-null.
double axis_tv(const float* v, size_t outer, size_t n, size_t inner, double* g, double scale) {
  if (n < 2) return 0.0;
  const double count = double(outer) * double(n - 1) * double(inner);
  double sum = 0.0;
  for (size_t o = 0; o < outer; ++o) {
    for (size_t i = 0; i + 1 < n; ++i) {
      const size_t base0 = (o * n + i) * inner;
      const size_t base1 = base0 + inner;
      for (size_t k = 0; k < inner; ++k) {
        const double d = double(v[base1 + k]) - double(v[base0 + k]);
        sum += d * d;
        if (g) {
          const double gd = scale * 2.0 * d / count;
          g[base1 + k] += gd;
          g[base0 + k] -= gd;
        }
      }
    }
  }
  return sum / count;
}

}  // namespace

// ---------------------------------------------------------------------------
// DenseGrid

DenseGrid::DenseGrid(GridDims dims, BBox bbox, float fill, std::string name, ParamGroup group)
    : dims_(dims), bbox_(bbox) {
  dims_.validate();
  bbox_.validate();
  values_ = Param(std::move(name), group, dims_.lattice_size() * dims_.width(), fill);
}

Vec3 DenseGrid::corner_position(uint32_t x, uint32_t y, uint32_t z) const {
  const uint32_t idx[3] = {x, y, z};
  Vec3 p;
  for (int a = 0; a < 3; ++a) p[a] = bbox_.lo[a] + bbox_.extent(a) * double(idx[a]) / double(dims_.axis(a) - 1);
  return p;
}

void DenseGrid::sample(Vec3 p, std::span<double> out) const {
  const CellCoord c = locate(dims_, bbox_, p);
  const auto w = corner_weights(c);
  const size_t sy = dims_.nz, sx = size_t(dims_.ny) * dims_.nz;
  const size_t base = (size_t(c.i0[0]) * dims_.ny + c.i0[1]) * dims_.nz + c.i0[2];
  const size_t offs[8] = {0, 1, sy, sy + 1, sx, sx + 1, sx + sy, sx + sy + 1};
  const size_t lattice = dims_.lattice_size();
  const float* v = values_.value.data();
  for (uint32_t ch = 0; ch < dims_.width(); ++ch) {
    const float* vc = v + ch * lattice + base;
    double acc = 0.0;
    for (int k = 0; k < 8; ++k) acc += w[k] * vc[offs[k]];
    out[ch] = acc;
  }
}

void DenseGrid::sample_backward(Vec3 p, std::span<const double> dout, GradBuffer& grads) const {
  double* g = grads.at(values_);
  if (!g) return;
  const CellCoord c = locate(dims_, bbox_, p);
  const auto w = corner_weights(c);
  const size_t sy = dims_.nz, sx = size_t(dims_.ny) * dims_.nz;
  const size_t base = (size_t(c.i0[0]) * dims_.ny + c.i0[1]) * dims_.nz + c.i0[2];
  const size_t offs[8] = {0, 1, sy, sy + 1, sx, sx + 1, sx + sy, sx + sy + 1};
  const size_t lattice = dims_.lattice_size();
  for (uint32_t ch = 0; ch < dims_.width(); ++ch) {
    if (dout[ch] == 0.0) continue;
    double* gc = g + ch * lattice + base;
    for (int k = 0; k < 8; ++k) gc[offs[k]] += w[k] * dout[ch];
  }
}

DenseGrid DenseGrid::upsampled(const GridDims& nd) const {
  check_upsample(dims_, nd);
  DenseGrid out(nd, bbox_, 0.f, values_.name, values_.group);
  std::vector<AxisTap> tx(nd.nx), ty(nd.ny), tz(nd.nz);
  for (uint32_t i = 0; i < nd.nx; ++i) tx[i] = resample_tap(dims_.nx, nd.nx, i);
  for (uint32_t i = 0; i < nd.ny; ++i) ty[i] = resample_tap(dims_.ny, nd.ny, i);
  for (uint32_t i = 0; i < nd.nz; ++i) tz[i] = resample_tap(dims_.nz, nd.nz, i);
  for (uint32_t ch = 0; ch < dims_.width(); ++ch)
    for (uint32_t x = 0; x < nd.nx; ++x)
      for (uint32_t y = 0; y < nd.ny; ++y)
        for (uint32_t z = 0; z < nd.nz; ++z) {
          CellCoord c;
          c.i0 = {tx[x].i0, ty[y].i0, tz[z].i0};
          c.f = {tx[x].f, ty[y].f, tz[z].f};
          const auto w = corner_weights(c);
          double acc = 0.0;
          for (int k = 0; k < 8; ++k)
            acc += w[k] * at(ch, c.i0[0] + ((k >> 2) & 1), c.i0[1] + ((k >> 1) & 1), c.i0[2] + (k & 1));
          out.at(ch, x, y, z) = float(acc);
        }
  return out;
}

double DenseGrid::tv_penalty(GradBuffer* grads, double scale) const {
  double* g = grads ? grads->at(values_) : nullptr;
  const size_t C = dims_.width(), X = dims_.nx, Y = dims_.ny, Z = dims_.nz;
  const float* v = values_.value.data();
  // Layout [C][X][Y][Z]: each axis is the middle dimension of some reshape.
  double tv = axis_tv(v, C, X, Y * Z, g, scale);
  tv += axis_tv(v, C * X, Y, Z, g, scale);
  tv += axis_tv(v, C * X * Y, Z, 1, g, scale);
  return tv;
}

// ---------------------------------------------------------------------------
// FactorizedGrid

std::array<int, 2> FactorizedGrid::plane_axes(int m) {
  switch (m) {
    case 0: return {1, 2};
    case 1: return {0, 2};
    default: return {0, 1};
  }
}

FactorizedGrid::FactorizedGrid(GridDims dims, BBox bbox, uint32_t rank, std::string name, ParamGroup factor_group)
    : dims_(dims), bbox_(bbox), rank_(rank) {
  dims_.validate();
  bbox_.validate();
  if (rank_ == 0) throw DomainError("factorization rank must be positive");
  for (int m = 0; m < 3; ++m) {
    const auto [a, b] = plane_axes(m);
    lines_[m] = Param(name + ".line" + std::to_string(m), factor_group, size_t(rank_) * dims_.axis(m));
    planes_[m] = Param(name + ".plane" + std::to_string(m), factor_group,
                       size_t(rank_) * dims_.axis(a) * dims_.axis(b));
  }
  const ParamGroup mix_group = factor_group == ParamGroup::frozen ? ParamGroup::frozen : ParamGroup::network;
  mix_ = Param(name + ".mix", mix_group, size_t(dims_.width()) * 3 * rank_);
}

void FactorizedGrid::init_random(Rng& rng, double factor_std, double mix_std) {
  for (int m = 0; m < 3; ++m) {
    for (auto& v : lines_[m].value) v = float(normal(rng, 0.0, factor_std));
    for (auto& v : planes_[m].value) v = float(normal(rng, 0.0, factor_std));
  }
  for (auto& v : mix_.value) v = float(normal(rng, 0.0, mix_std));
}

void FactorizedGrid::components(const CellCoord& c, std::span<double> out) const {
  const uint32_t R = rank_;
  for (int m = 0; m < 3; ++m) {
    const auto [a, b] = plane_axes(m);
    const uint32_t nm = dims_.axis(m), nb = dims_.axis(b);
    const double fl = c.f[m], fa = c.f[a], fb = c.f[b];
    const uint32_t il = c.i0[m], ia = c.i0[a], ib = c.i0[b];
    const float* L = lines_[m].value.data();
    const float* P = planes_[m].value.data();
    const size_t plane_size = size_t(dims_.axis(a)) * nb;
    for (uint32_t r = 0; r < R; ++r) {
      const float* lr = L + size_t(r) * nm + il;
      const double lv = (1 - fl) * lr[0] + fl * lr[1];
      const float* pr = P + size_t(r) * plane_size + size_t(ia) * nb + ib;
      const double pv = (1 - fa) * ((1 - fb) * pr[0] + fb * pr[1]) + fa * ((1 - fb) * pr[nb] + fb * pr[nb + 1]);
      out[m * R + r] = lv * pv;
    }
  }
}

void FactorizedGrid::sample(Vec3 p, std::span<double> out) const {
  const CellCoord c = locate(dims_, bbox_, p);
  const uint32_t K = 3 * rank_;
  double comp[3 * 64];
  std::vector<double> heap;
  double* cp = comp;
  if (K > 3 * 64) {
    heap.resize(K);
    cp = heap.data();
  }
  components(c, std::span<double>(cp, K));
  const float* M = mix_.value.data();
  for (uint32_t ch = 0; ch < dims_.width(); ++ch) {
    const float* row = M + size_t(ch) * K;
    double acc = 0.0;
    for (uint32_t k = 0; k < K; ++k) acc += row[k] * cp[k];
    out[ch] = acc;
  }
}

void FactorizedGrid::sample_backward(Vec3 p, std::span<const double> dout, GradBuffer& grads) const {
  const CellCoord c = locate(dims_, bbox_, p);
  const uint32_t R = rank_, K = 3 * R, W = dims_.width();
  std::vector<double> comp(K), dcomp(K, 0.0);
  components(c, comp);
  const float* M = mix_.value.data();
  double* gmix = grads.at(mix_);
  for (uint32_t ch = 0; ch < W; ++ch) {
    const double g = dout[ch];
    if (g == 0.0) continue;
    const float* row = M + size_t(ch) * K;
    for (uint32_t k = 0; k < K; ++k) {
      dcomp[k] += g * row[k];
      if (gmix) gmix[size_t(ch) * K + k] += g * comp[k];
    }
  }
  for (int m = 0; m < 3; ++m) {
    const auto [a, b] = plane_axes(m);
    const uint32_t nm = dims_.axis(m), nb = dims_.axis(b);
    const double fl = c.f[m], fa = c.f[a], fb = c.f[b];
    const uint32_t il = c.i0[m], ia = c.i0[a], ib = c.i0[b];
    const size_t plane_size = size_t(dims_.axis(a)) * nb;
    const float* L = lines_[m].value.data();
    const float* P = planes_[m].value.data();
    double* gl = grads.at(lines_[m]);
    double* gp = grads.at(planes_[m]);
    const double w00 = (1 - fa) * (1 - fb), w01 = (1 - fa) * fb, w10 = fa * (1 - fb), w11 = fa * fb;
    for (uint32_t r = 0; r < R; ++r) {
      const double d = dcomp[m * R + r];
      if (d == 0.0) continue;
      const size_t lo = size_t(r) * nm + il;
      const double lv = (1 - fl) * L[lo] + fl * L[lo + 1];
      const size_t po = size_t(r) * plane_size + size_t(ia) * nb + ib;
      const double pv = w00 * P[po] + w01 * P[po + 1] + w10 * P[po + nb] + w11 * P[po + nb + 1];
      if (gl) {
        gl[lo] += d * pv * (1 - fl);
        gl[lo + 1] += d * pv * fl;
      }
      if (gp) {
        const double dl = d * lv;
        gp[po] += dl * w00;
        gp[po + 1] += dl * w01;
        gp[po + nb] += dl * w10;
        gp[po + nb + 1] += dl * w11;
      }
    }
  }
}

FactorizedGrid FactorizedGrid::upsampled(const GridDims& nd) const {
  check_upsample(dims_, nd);
  FactorizedGrid out = *this;
  out.dims_ = nd;
  for (int m = 0; m < 3; ++m) {
    const auto [a, b] = plane_axes(m);
    out.lines_[m].value = resample_rows(lines_[m].value, rank_, dims_.axis(m), nd.axis(m));
    out.planes_[m].value =
        resample_planes(planes_[m].value, rank_, dims_.axis(a), dims_.axis(b), nd.axis(a), nd.axis(b));
    out.lines_[m].slot = out.planes_[m].slot = -1;
  }
  out.mix_.slot = -1;
  return out;
}

double FactorizedGrid::tv_penalty(GradBuffer* grads, double scale) const {
  double tv = 0.0;
  for (int m = 0; m < 3; ++m) {
    const auto [a, b] = plane_axes(m);
    double* gl = grads ? grads->at(lines_[m]) : nullptr;
    double* gp = grads ? grads->at(planes_[m]) : nullptr;
    tv += axis_tv(lines_[m].value.data(), rank_, dims_.axis(m), 1, gl, scale);
    tv += axis_tv(planes_[m].value.data(), rank_, dims_.axis(a), dims_.axis(b), gp, scale);
    tv += axis_tv(planes_[m].value.data(), size_t(rank_) * dims_.axis(a), dims_.axis(b), 1, gp, scale);
  }
  return tv;
}

void FactorizedGrid::collect(std::vector<Param*>& out) {
  for (int m = 0; m < 3; ++m) out.push_back(&lines_[m]);
  for (int m = 0; m < 3; ++m) out.push_back(&planes_[m]);
  out.push_back(&mix_);
}

DenseGrid reconstruct_dense(const FactorizedGrid& fg) {
  const GridDims& d = fg.dims();
  const uint32_t R = fg.rank(), K = 3 * R;
  DenseGrid out(d, fg.bbox(), 0.f, fg.mix().name + ".dense", fg.line(0).group);
  std::vector<double> comp(K);
  for (uint32_t x = 0; x < d.nx; ++x)
    for (uint32_t y = 0; y < d.ny; ++y)
      for (uint32_t z = 0; z < d.nz; ++z) {
        const uint32_t idx[3] = {x, y, z};
        for (int m = 0; m < 3; ++m) {
          const auto [a, b] = FactorizedGrid::plane_axes(m);
          const uint32_t nm = d.axis(m), na = d.axis(a), nb = d.axis(b);
          for (uint32_t r = 0; r < R; ++r) {
            const double lv = fg.line(m).value[size_t(r) * nm + idx[m]];
            const double pv = fg.plane(m).value[(size_t(r) * na + idx[a]) * nb + idx[b]];
            comp[m * R + r] = lv * pv;
          }
        }
        for (uint32_t ch = 0; ch < d.width(); ++ch) {
          double acc = 0.0;
          for (uint32_t k = 0; k < K; ++k) acc += fg.mix().value[size_t(ch) * K + k] * comp[k];
          out.at(ch, x, y, z) = float(acc);
        }
      }
  return out;
}

// ---------------------------------------------------------------------------
// Grid

const GridDims& Grid::dims() const {
  return std::visit([](const auto& g) -> const GridDims& { return g.dims(); }, g_);
}
const BBox& Grid::bbox() const {
  return std::visit([](const auto& g) -> const BBox& { return g.bbox(); }, g_);
}
void Grid::sample(Vec3 p, std::span<double> out) const {
  std::visit([&](const auto& g) { g.sample(p, out); }, g_);
}
void Grid::sample_backward(Vec3 p, std::span<const double> dout, GradBuffer& grads) const {
  std::visit([&](const auto& g) { g.sample_backward(p, dout, grads); }, g_);
}
Grid Grid::upsampled(const GridDims& nd) const {
  return std::visit([&](const auto& g) { return Grid(g.upsampled(nd)); }, g_);
}
double Grid::tv_penalty(GradBuffer* grads, double scale) const {
  return std::visit([&](const auto& g) { return g.tv_penalty(grads, scale); }, g_);
}
void Grid::collect(std::vector<Param*>& out) {
  std::visit([&](auto& g) { g.collect(out); }, g_);
}

std::vector<double> trilinear_sample(const Grid& g, Vec3 p) {
  std::vector<double> out(g.dims().width());
  g.sample(p, out);
  return out;
}

Grid upsample(const Grid& g, const GridDims& nd) { return g.upsampled(nd); }
double tv_penalty(const Grid& g) { return g.tv_penalty(); }

Grid make_grid(GridKind kind, GridDims dims, BBox bbox, uint32_t rank, std::string name, float dense_fill, Rng& rng,
               double factor_std, double mix_std) {
  if (kind == GridKind::dense) return Grid(DenseGrid(dims, bbox, dense_fill, std::move(name)));
  FactorizedGrid fg(dims, bbox, rank, std::move(name));
  if (mix_std <= 0.0) mix_std = 1.0 / std::sqrt(3.0 * rank);
  fg.init_random(rng, factor_std, mix_std);
  return Grid(std::move(fg));
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

void write_header(ByteWriter& w, const GridDims& d, const BBox& b) {
  w.u32(d.nx);
  w.u32(d.ny);
  w.u32(d.nz);
  w.u32(d.channels);
  for (int a = 0; a < 3; ++a) w.f32(b.lo[a]);
  for (int a = 0; a < 3; ++a) w.f32(b.hi[a]);
}

void read_header(ByteReader& r, GridDims& d, BBox& b) {
  d.nx = r.u32();
  d.ny = r.u32();
  d.nz = r.u32();
  d.channels = r.u32();
  for (int a = 0; a < 3; ++a) b.lo[a] = r.f32();
  for (int a = 0; a < 3; ++a) b.hi[a] = r.f32();
  try {
    d.validate();
    b.validate();
  } catch (const DomainError& e) {
    throw LoadError(std::string("corrupt grid header: ") + e.what());
  }
  if (d.lattice_size() * d.width() > (size_t(1) << 32)) throw LoadError("corrupt grid header: grid too large");
}

}  // namespace

void write_dense_grid(ByteWriter& w, const DenseGrid& g) {
  write_header(w, g.dims(), g.bbox());
  w.f32s(g.values().value);
}

DenseGrid read_dense_grid(ByteReader& r, std::string name, ParamGroup group) {
  GridDims d;
  BBox b;
  read_header(r, d, b);
  DenseGrid g(d, b, 0.f, std::move(name), group);
  r.f32s(g.values().value);
  return g;
}

void write_grid(ByteWriter& w, const Grid& g) {
  w.u8(uint8_t(g.kind()));
  if (g.kind() == GridKind::dense) {
    write_dense_grid(w, g.dense());
    return;
  }
  const auto& f = g.factorized();
  write_header(w, f.dims(), f.bbox());
  w.u32(f.rank());
  for (int m = 0; m < 3; ++m) w.f32s(f.line(m).value);
  for (int m = 0; m < 3; ++m) w.f32s(f.plane(m).value);
  w.f32s(f.mix().value);
}

Grid read_grid(ByteReader& r, const std::string& name, ParamGroup group) {
  const uint8_t kind = r.u8();
  if (kind == uint8_t(GridKind::dense)) return Grid(read_dense_grid(r, name, group));
  if (kind != uint8_t(GridKind::factorized)) throw LoadError("unknown grid kind tag");
  GridDims d;
  BBox b;
  read_header(r, d, b);
  const uint32_t rank = r.u32();
  if (rank == 0 || rank > 4096) throw LoadError("corrupt factorized grid rank");
  FactorizedGrid f(d, b, rank, name, group);
  for (int m = 0; m < 3; ++m) r.f32s(f.line(m).value);
  for (int m = 0; m < 3; ++m) r.f32s(f.plane(m).value);
  r.f32s(f.mix().value);
  return Grid(std::move(f));
}

}  // namespace mixvox
