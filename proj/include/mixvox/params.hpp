#pragma once

#include <string>
#include <vector>

#include "mixvox/binary_io.hpp"
#include "mixvox/core.hpp"

namespace mixvox {

/// Registry of trainable arrays. Assigns each Param its slot; names must be
/// unique and each Param may appear once.
class ParamSet {
 public:
  ParamSet() = default;
  explicit ParamSet(std::vector<Param*> params);

  size_t size() const { return params_.size(); }
  Param& operator[](size_t i) { return *params_[i]; }
  const Param& operator[](size_t i) const { return *params_[i]; }
  const std::vector<Param*>& all() const { return params_; }
  Param* find(const std::string& name) const;
  size_t scalar_count() const;

  GradBuffer make_grads() const { return GradBuffer(params_); }
  /// Throws TrainingError naming the first parameter with a non-finite gradient.
  void check_finite(const GradBuffer& g) const;

 private:
  std::vector<Param*> params_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct LearningRates {
  double voxel = 0.02;
  double network = 3e-3;

  LearningRates scaled(double f) const { return {voxel * f, network * f}; }
  double for_group(ParamGroup g) const {
    return g == ParamGroup::voxel ? voxel : (g == ParamGroup::network ? network : 0.0);
  }
};

/// Exponential decay reaching `final_ratio` of the initial rate at `total`.
double lr_decay_factor(uint64_t iteration, uint64_t total, double final_ratio);

/// Bias-corrected Adam with float moments. Frozen parameters are skipped.
class Adam {
 public:
  Adam() = default;
  Adam(const ParamSet& params, AdamConfig cfg = {});

  void step(ParamSet& params, const GradBuffer& grads, const LearningRates& lr);
  uint64_t steps() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }
  bool matches(const ParamSet& params) const;

  void write(ByteWriter& w) const;
  static Adam read(ByteReader& r);

 private:
  AdamConfig cfg_;
  uint64_t steps_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

}  // namespace mixvox
