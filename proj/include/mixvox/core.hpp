#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixvox {

// Error categories. Every public operation reports failures through one of
// these so the CLI can map them onto exit codes.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct UnsupportedError : std::logic_error {
  using std::logic_error::logic_error;
};
struct LoadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Vec3 {
  double x = 0, y = 0, z = 0;

  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
  friend Vec3 operator*(double s, Vec3 a) { return a * s; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(Vec3 a) { return a * (1.0 / norm(a)); }

using Rgb = std::array<double, 3>;

/// Axis-aligned world bounds. Stored in single precision because that is
/// what the on-disk formats carry.
struct BBox {
  std::array<float, 3> lo{-1.f, -1.f, -1.f};
  std::array<float, 3> hi{1.f, 1.f, 1.f};

  void validate() const;
  bool contains(Vec3 p) const {
    for (int a = 0; a < 3; ++a)
      if (!(p[a] >= lo[a] && p[a] <= hi[a])) return false;
    return true;
  }
  Vec3 clamp(Vec3 p) const;
  double extent(int axis) const { return double(hi[axis]) - double(lo[axis]); }
  friend bool operator==(const BBox&, const BBox&) = default;
};

// Numerically safe scalar activations.
inline double sigmoid(double x) {
  if (x >= 0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}
inline double softplus(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}
inline double softplus_inverse(double y) { return std::log(std::expm1(y)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

// ---------------------------------------------------------------------------
// Trainable parameters

enum class ParamGroup : uint8_t { voxel, network, frozen };

/// A named trainable array. Modules own their Params; a ParamSet only holds
/// pointers, and `slot` is the index into gradient / optimizer buffers.
struct Param {
  std::string name;
  ParamGroup group = ParamGroup::voxel;
  std::vector<float> value;
  int slot = -1;

  Param() = default;
  Param(std::string n, ParamGroup g, size_t size, float fill = 0.f)
      : name(std::move(n)), group(g), value(size, fill) {}
};

/// Dense gradient accumulators for every registered Param.
class GradBuffer {
 public:
  GradBuffer() = default;
  explicit GradBuffer(std::span<Param* const> params);

  double* at(const Param& p) {
    return p.slot >= 0 && size_t(p.slot) < slots_.size() ? slots_[p.slot].data() : nullptr;
  }
  const std::vector<double>& slot(size_t i) const { return slots_[i]; }
  std::vector<double>& slot(size_t i) { return slots_[i]; }
  size_t slot_count() const { return slots_.size(); }

  void zero();
  /// Adds `other` element-wise (same layout required).
  void accumulate(const GradBuffer& other);

 private:
  std::vector<std::vector<double>> slots_;
};

// ---------------------------------------------------------------------------
// Randomness: one 64-bit seed drives everything. Streams for independent
// consumers are derived by mixing a stream tag into the seed.

uint64_t mix_seed(uint64_t seed, uint64_t stream);

/// splitmix64 generator. Cheap to construct, so every ray or worker can own a
/// stream derived from (seed, index) without sharing state.
class Rng {
 public:
  using result_type = uint64_t;
  explicit Rng(uint64_t state = 0) : s_(state) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~uint64_t(0); }
  result_type operator()() {
    uint64_t z = (s_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  uint64_t s_;
};

inline Rng make_rng(uint64_t seed, uint64_t stream = 0) { return Rng(mix_seed(seed, stream)); }
double uniform01(Rng& rng);
double normal(Rng& rng, double mean, double stddev);

}  // namespace mixvox
