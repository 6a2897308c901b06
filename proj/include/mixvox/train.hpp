#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mixvox/checkpoint.hpp"
#include "mixvox/config.hpp"
#include "mixvox/dataset.hpp"
#include "mixvox/params.hpp"
#include "mixvox/render.hpp"

namespace mixvox {

/// Mean squared error over rays, times and channels.
double photometric_loss(std::span<const Rgb> pred, std::span<const Rgb> gt);

struct LossWeights {
  double tv_density = 1e-4;
  double tv_color = 1e-4;
};

struct BatchLoss {
  double photometric = 0;
  double tv = 0;
  double total = 0;
  size_t samples = 0;
  size_t dynamic_samples = 0;
};

/// photometric_loss over the batch at every queried time plus the weighted
/// TV of all radiance grids. Gradients are accumulated into `grads` (which
/// must be laid out for the model's ParamSet). Jitter streams are derived
/// from `jitter_seed` per ray; without a seed samples sit at segment midpoints.
BatchLoss total_loss(const Model& m, const MultiViewVideoDataset& ds, const RayBatch& batch,
                     const TimeQuerySet& times, const RenderSettings& rs, const LossWeights& w,
                     std::optional<uint64_t> jitter_seed, GradBuffer& grads, int threads = 1);

struct TrainLogRow {
  uint64_t iteration = 0;
  double wall_seconds = 0;
  double loss = 0;
  double psnr_train = 0;
  double lr = 0;
};

std::string train_log_header();
std::string format_log_row(const TrainLogRow& r);

struct TrainOptions {
  /// Checkpoints and the "last good" file go here; nothing is written when empty.
  std::string out_dir;
  /// Called for every logged row.
  std::function<void(const TrainLogRow&)> on_log;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TrainLogRow> log;
  double seconds = 0;
  double variation_seconds = 0;
};

/// Trains from scratch, or continues `resume` at its stored step.
/// Divergence writes last_good.mxvx (when out_dir is set) and throws TrainingError.
TrainResult train(const MultiViewVideoDataset& ds, const RunConfig& cfg, std::optional<Checkpoint> resume = {},
                  const TrainOptions& opts = {});

}  // namespace mixvox
