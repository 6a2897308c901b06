#pragma once

#include <array>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mixvox/binary_io.hpp"
#include "mixvox/core.hpp"

namespace mixvox {

enum class GridKind : uint8_t { dense = 0, factorized = 1 };

GridKind parse_grid_kind(const std::string& s);
std::string to_string(GridKind k);

struct GridDims {
  uint32_t nx = 2, ny = 2, nz = 2;
  uint32_t channels = 0;  ///< 0 means a scalar grid

  static GridDims cube(uint32_t n, uint32_t channels = 0) { return {n, n, n, channels}; }

  uint32_t width() const { return channels == 0 ? 1u : channels; }
  uint32_t axis(int a) const { return a == 0 ? nx : (a == 1 ? ny : nz); }
  size_t lattice_size() const { return size_t(nx) * ny * nz; }
  void validate() const;
  friend bool operator==(const GridDims&, const GridDims&) = default;
};

/// Location of a point inside the lattice: lower corner index and fractional
/// offset per axis. Corner i maps to bbox.lo + i * extent / (n - 1).
struct CellCoord {
  std::array<uint32_t, 3> i0{};
  std::array<double, 3> f{};
};

/// Throws DomainError when p lies outside the bbox.
CellCoord locate(const GridDims& dims, const BBox& bbox, Vec3 p);

/// Eight trilinear weights; corner k has offsets (k>>2 & 1, k>>1 & 1, k & 1)
/// along (x, y, z).
std::array<double, 8> corner_weights(const CellCoord& c);

/// Smallest lattice spacing of a grid over a box.
double voxel_width(const GridDims& dims, const BBox& bbox);

/// Dense lattice of values. Flat layout: z fastest, then y, then x, then
/// channel.
class DenseGrid {
 public:
  DenseGrid() = default;
  DenseGrid(GridDims dims, BBox bbox, float fill = 0.f, std::string name = "grid",
            ParamGroup group = ParamGroup::voxel);

  const GridDims& dims() const { return dims_; }
  const BBox& bbox() const { return bbox_; }
  Param& values() { return values_; }
  const Param& values() const { return values_; }

  size_t index(uint32_t c, uint32_t x, uint32_t y, uint32_t z) const {
    return ((size_t(c) * dims_.nx + x) * dims_.ny + y) * dims_.nz + z;
  }
  float at(uint32_t c, uint32_t x, uint32_t y, uint32_t z) const { return values_.value[index(c, x, y, z)]; }
  float& at(uint32_t c, uint32_t x, uint32_t y, uint32_t z) { return values_.value[index(c, x, y, z)]; }
  Vec3 corner_position(uint32_t x, uint32_t y, uint32_t z) const;

  void sample(Vec3 p, std::span<double> out) const;
  void sample_backward(Vec3 p, std::span<const double> dout, GradBuffer& grads) const;
  DenseGrid upsampled(const GridDims& new_dims) const;
  /// Accumulates scale * d(tv)/d(values) into grads when given.
  double tv_penalty(GradBuffer* grads = nullptr, double scale = 1.0) const;
  void collect(std::vector<Param*>& out) { out.push_back(&values_); }

 private:
  GridDims dims_;
  BBox bbox_;
  Param values_;
};

/// Vector-matrix factorized field. For pairing m the vector runs along axis m
/// and the matrix spans the other two axes in increasing order; the 3R
/// component products are mixed into `width()` outputs by one bias-free
/// linear map.
class FactorizedGrid {
 public:
  FactorizedGrid() = default;
  FactorizedGrid(GridDims dims, BBox bbox, uint32_t rank, std::string name = "grid",
                 ParamGroup factor_group = ParamGroup::voxel);

  /// Gaussian factors and mixing weights.
  void init_random(Rng& rng, double factor_std, double mix_std);

  const GridDims& dims() const { return dims_; }
  const BBox& bbox() const { return bbox_; }
  uint32_t rank() const { return rank_; }
  Param& line(int m) { return lines_[m]; }
  const Param& line(int m) const { return lines_[m]; }
  Param& plane(int m) { return planes_[m]; }
  const Param& plane(int m) const { return planes_[m]; }
  Param& mix() { return mix_; }
  const Param& mix() const { return mix_; }

  static std::array<int, 2> plane_axes(int m);

  void sample(Vec3 p, std::span<double> out) const;
  void sample_backward(Vec3 p, std::span<const double> dout, GradBuffer& grads) const;
  FactorizedGrid upsampled(const GridDims& new_dims) const;
  double tv_penalty(GradBuffer* grads = nullptr, double scale = 1.0) const;
  void collect(std::vector<Param*>& out);

 private:
  // Per-pairing interpolated component values, 3R entries.
  void components(const CellCoord& c, std::span<double> out) const;

  GridDims dims_;
  BBox bbox_;
  uint32_t rank_ = 0;
  std::array<Param, 3> lines_;   // R x n_m
  std::array<Param, 3> planes_;  // R x n_a x n_b
  Param mix_;                    // width x 3R, row-major
};

DenseGrid reconstruct_dense(const FactorizedGrid& fg);

/// Either representation behind one interface.
class Grid {
 public:
  Grid() = default;
  Grid(DenseGrid g) : g_(std::move(g)) {}
  Grid(FactorizedGrid g) : g_(std::move(g)) {}

  GridKind kind() const { return g_.index() == 0 ? GridKind::dense : GridKind::factorized; }
  const GridDims& dims() const;
  const BBox& bbox() const;

  DenseGrid& dense() { return std::get<DenseGrid>(g_); }
  const DenseGrid& dense() const { return std::get<DenseGrid>(g_); }
  FactorizedGrid& factorized() { return std::get<FactorizedGrid>(g_); }
  const FactorizedGrid& factorized() const { return std::get<FactorizedGrid>(g_); }

  void sample(Vec3 p, std::span<double> out) const;
  void sample_backward(Vec3 p, std::span<const double> dout, GradBuffer& grads) const;
  Grid upsampled(const GridDims& new_dims) const;
  double tv_penalty(GradBuffer* grads = nullptr, double scale = 1.0) const;
  void collect(std::vector<Param*>& out);

 private:
  std::variant<DenseGrid, FactorizedGrid> g_;
};

/// Convenience forms of the grid operations.
std::vector<double> trilinear_sample(const Grid& g, Vec3 p);
Grid upsample(const Grid& g, const GridDims& new_dims);
double tv_penalty(const Grid& g);

/// Builds a dense or factorized grid with the standard initializations.
Grid make_grid(GridKind kind, GridDims dims, BBox bbox, uint32_t rank, std::string name,
               float dense_fill, Rng& rng, double factor_std = 0.1, double mix_std = 0.0);

// Serialization. Dense block: dims (4 x u32), bbox (6 x f32), values.
// Factorized block: dims, bbox, rank (u32), lines, planes, mix.
void write_dense_grid(ByteWriter& w, const DenseGrid& g);
DenseGrid read_dense_grid(ByteReader& r, std::string name, ParamGroup group);
void write_grid(ByteWriter& w, const Grid& g);  // kind byte then block
Grid read_grid(ByteReader& r, const std::string& name, ParamGroup group);

}  // namespace mixvox
