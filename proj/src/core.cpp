#include "mixvox/core.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

#include "mixvox/parallel.hpp"

namespace mixvox {

void BBox::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (!std::isfinite(lo[a]) || !std::isfinite(hi[a]) || !(lo[a] < hi[a]))
      throw DomainError("bbox min must be strictly below max on every axis");
  }
}

Vec3 BBox::clamp(Vec3 p) const {
  for (int a = 0; a < 3; ++a) p[a] = std::clamp(p[a], double(lo[a]), double(hi[a]));
  return p;
}

GradBuffer::GradBuffer(std::span<Param* const> params) {
  slots_.resize(params.size());
  for (size_t i = 0; i < params.size(); ++i) slots_[i].assign(params[i]->value.size(), 0.0);
}

void GradBuffer::zero() {
  for (auto& s : slots_) std::fill(s.begin(), s.end(), 0.0);
}

void GradBuffer::accumulate(const GradBuffer& other) {
  for (size_t i = 0; i < slots_.size(); ++i) {
    auto& dst = slots_[i];
    const auto& src = other.slots_[i];
    for (size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
}

uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  // splitmix64 finalizer over the combined value
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double uniform01(Rng& rng) {
  // 53 random bits; avoids std::uniform_real_distribution's
  // implementation-defined algorithm.
  return double(rng() >> 11) * (1.0 / 9007199254740992.0);
}

double normal(Rng& rng, double mean, double stddev) {
  // Box-Muller; deterministic across standard libraries.
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("MIXVOXELS_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return int(std::max(1u, std::thread::hardware_concurrency()));
}

}  // namespace mixvox
