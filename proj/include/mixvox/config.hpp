#pragma once

#include <string>
#include <vector>

#include "mixvox/model.hpp"
#include "mixvox/params.hpp"
#include "mixvox/render.hpp"
#include "mixvox/variation.hpp"

namespace mixvox {

/// Every tunable of a run. Text form is flat `key = value` lines; `#` starts
/// a comment and `include = other.cfg` pulls in another file first-come.
struct RunConfig {
  // run
  uint64_t seed = 0;
  int threads = 0;
  std::string data_dir;
  std::string out_dir = "run";
  std::string preset = "S";
  double scale = 1.0;
  long iterations = -1;  ///< negative: derived from preset and scale
  uint32_t batch_rays = 4096;
  uint32_t time_queries = 32;
  double dynamic_fraction_floor = 0.0;
  uint32_t log_every = 50;
  uint32_t checkpoint_every = 0;
  std::string checkpoint_pattern = "checkpoint_{step}.mxvx";
  uint32_t eval_stride = 10;

  // grids and networks
  uint32_t start_resolution = 32;
  uint32_t final_resolution = 64;
  std::vector<double> upsample_steps{1500, 2000, 2500, 2750};
  std::string static_density_kind = "factorized";
  std::string static_color_kind = "factorized";
  std::string dynamic_kind = "factorized";
  uint32_t rank = 16;
  uint32_t color_channels = 27;
  uint32_t dynamic_density_channels = 27;
  uint32_t dynamic_color_channels = 27;
  uint32_t static_hidden = 128;
  uint32_t static_layers = 1;
  uint32_t decompressor_hidden = 512;
  uint32_t decompressor_layers = 1;
  uint32_t n_bands = 2;
  double density_shift = -1.0;
  double latent_std = 0.1;

  // variation field and mask
  double gamma = 0.05;
  double beta = 0.9;
  uint32_t k_m = 21;
  uint32_t variation_iterations = 2000;
  uint32_t variation_retrain_iterations = 2000;
  uint32_t variation_rays = 4096;
  double variation_lr = 0.1;
  double variation_init_logit = 3.0;
  double variation_step_scale = 1.0;
  std::string variation_kind = "dense";

  // optimization
  double lr_voxel = 0.02;
  double lr_network = 3e-3;
  double lr_final_ratio = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double tv_density = 1e-4;
  double tv_color = 1e-4;

  // rendering
  double step_scale = 4.0;
  double prune_alpha = 1e-4;
  std::vector<double> background{0, 0, 0};
  std::string render_mode = "mixed";

  /// Applies one `key = value`; unknown keys and malformed values raise ConfigError.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  /// Canonical text: every key in a fixed order, reals printed losslessly.
  std::string to_text() const;
  static RunConfig parse(const std::string& text, const std::string& base_dir = ".");
  static RunConfig load(const std::string& path);

  /// Range and enum checks across keys.
  void validate() const;

  uint64_t preset_iterations() const;
  uint64_t total_iterations() const;
  double sample_multiplier() const;
  /// Upsampling iterations after scaling, strictly inside (0, total).
  std::vector<uint64_t> upsample_iterations() const;
  /// Lattice size after `k` upsampling events (log-linear in between).
  uint32_t resolution_after(size_t k) const;
  uint32_t resolution_at(uint64_t iteration) const;

  ModelConfig model_config() const;
  RenderSettings render_settings() const;
  LearningRates learning_rates() const { return {lr_voxel, lr_network}; }
  AdamConfig adam_config() const { return {adam_beta1, adam_beta2, adam_eps}; }
  VariationTrainConfig variation_config(bool retrain) const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Substitutes {step} in a checkpoint pattern.
std::string format_checkpoint_name(const std::string& pattern, uint64_t step);

}  // namespace mixvox
