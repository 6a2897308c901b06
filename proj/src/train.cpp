#include "mixvox/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>

#include "mixvox/parallel.hpp"

namespace mixvox {

namespace {

constexpr uint64_t kBatchStream = 0x6261746368000000ULL;
constexpr uint64_t kInitStream = 0x696e6974ULL;
constexpr uint64_t kRetrainStream = 0x7265747261696eULL;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void refresh_mask(Model& m, const MultiViewVideoDataset& ds, const RunConfig& cfg, bool retrain, uint64_t event,
                  double& seconds) {
  if (cfg.render_settings().mode == RenderMode::full_dynamic) {
    // Every sample takes the dynamic branch; no variation stage is needed.
    m.mask = full_mask(GridDims::cube(m.resolution), m.bbox);
    return;
  }
  VariationTrainConfig vc = cfg.variation_config(retrain);
  if (retrain) vc.seed = mix_seed(vc.seed, kRetrainStream + event);
  VariationTrainReport rep;
  m.variation = train_variation_field(ds, vc, m.resolution, &rep);
  m.variation.set_trainable(false);
  m.mask = infer_dynamic_mask(m.variation, cfg.beta, cfg.k_m);
  seconds += rep.seconds;
}

}  // namespace

double photometric_loss(std::span<const Rgb> pred, std::span<const Rgb> gt) {
  if (pred.size() != gt.size()) throw DomainError("prediction and ground truth differ in size");
  if (pred.empty()) return 0.0;
  double acc = 0;
  for (size_t i = 0; i < pred.size(); ++i)
    for (int k = 0; k < 3; ++k) {
      const double d = pred[i][k] - gt[i][k];
      acc += d * d;
    }
  return acc / double(3 * pred.size());
}

BatchLoss total_loss(const Model& m, const MultiViewVideoDataset& ds, const RayBatch& batch,
                     const TimeQuerySet& times, const RenderSettings& rs, const LossWeights& w,
                     std::optional<uint64_t> jitter_seed, GradBuffer& grads, int threads) {
  BatchLoss out;
  const size_t n = batch.size();
  if (n == 0 || times.empty()) return out;
  const double scale = 1.0 / double(n * times.size() * 3);
  const int workers = std::max(1, std::min<int>(threads, int(n)));

  struct Partial {
    GradBuffer grads;
    double sq = 0;
    size_t samples = 0, dynamic = 0;
  };
  std::vector<Partial> parts(static_cast<size_t>(workers));
  // Worker 0 writes straight into the caller's buffer.
  parallel_for(n, workers, [&](size_t worker, size_t begin, size_t end) {
    Partial& p = parts[worker];
    GradBuffer* g = &grads;
    if (worker > 0) {
      p.grads = grads;
      p.grads.zero();
      g = &p.grads;
    }
    for (size_t i = begin; i < end; ++i) {
      const std::vector<Rgb> all = batch.ground_truth(ds, i);
      std::vector<Rgb> gt(times.size());
      for (size_t q = 0; q < times.size(); ++q) gt[q] = all[times[q]];
      Rng jitter = make_rng(jitter_seed.value_or(0), i);
      const RayTrainStats st =
          backprop_ray(m, batch.rays[i], times, gt, rs, jitter_seed ? &jitter : nullptr, scale, *g);
      p.sq += st.sq_error;
      p.samples += st.samples;
      p.dynamic += st.dynamic_samples;
    }
  });
  for (int k = 0; k < workers; ++k) {
    if (k > 0) grads.accumulate(parts[size_t(k)].grads);
    out.photometric += parts[size_t(k)].sq;
    out.samples += parts[size_t(k)].samples;
    out.dynamic_samples += parts[size_t(k)].dynamic;
  }
  out.photometric *= scale;
  out.tv = m.stat.tv_penalty(&grads, w.tv_density, w.tv_color) + m.dyn.tv_penalty(&grads, w.tv_density, w.tv_color);
  out.total = out.photometric + out.tv;
  return out;
}

std::string train_log_header() { return "iteration,wall_seconds,loss,psnr_train,lr\n"; }

std::string format_log_row(const TrainLogRow& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%llu,%.3f,%.8f,%.4f,%.6g\n", static_cast<unsigned long long>(r.iteration),
                r.wall_seconds, r.loss, r.psnr_train, r.lr);
  return buf;
}

TrainResult train(const MultiViewVideoDataset& ds, const RunConfig& cfg, std::optional<Checkpoint> resume,
                  const TrainOptions& opts) {
  cfg.validate();
  ds.validate();
  if (ds.train_cameras().empty()) throw DomainError("dataset has no training camera");
  const auto t0 = std::chrono::steady_clock::now();
  const int threads = resolve_threads(cfg.threads);
  const uint64_t total = cfg.total_iterations();
  const std::vector<uint64_t> events = cfg.upsample_iterations();
  const RenderSettings rs = cfg.render_settings();
  const LossWeights weights{cfg.tv_density, cfg.tv_color};
  const uint32_t q = std::min(cfg.time_queries, ds.frame_count);

  TrainResult res;
  Checkpoint& ck = res.checkpoint;
  ck.config_text = cfg.to_text();
  if (resume) {
    if (resume->model.frame_count != ds.frame_count)
      throw DomainError("checkpoint frame count does not match the dataset");
    if (resume->model.bbox != ds.bbox) throw DomainError("checkpoint bounds do not match the dataset");
    ck.model = std::move(resume->model);
    ck.step = resume->step;
  } else {
    Rng init = make_rng(cfg.seed, kInitStream);
    ck.model = Model(cfg.model_config(), ds.bbox, cfg.start_resolution, ds.frame_count, init);
    refresh_mask(ck.model, ds, cfg, false, 0, res.variation_seconds);
  }
  Model& m = ck.model;

  ParamSet params(m.parameters());
  Adam adam(params, cfg.adam_config());
  if (resume && resume->adam) {
    if (!resume->adam->matches(params)) throw LoadError("optimizer state does not match the model parameters");
    adam = std::move(*resume->adam);
  }
  GradBuffer grads = params.make_grads();

  auto snapshot = [&](const std::string& file) {
    if (opts.out_dir.empty()) return;
    std::filesystem::create_directories(opts.out_dir);
    ck.adam = adam;
    save_checkpoint((std::filesystem::path(opts.out_dir) / file).string(), ck);
    ck.adam.reset();
  };

  for (uint64_t it = ck.step; it < total; ++it) {
    for (size_t k = 0; k < events.size(); ++k) {
      if (events[k] != it) continue;
      const uint32_t r = cfg.resolution_at(it);
      if (r == m.resolution) continue;
      m.upsample(r);
      refresh_mask(m, ds, cfg, true, k, res.variation_seconds);
      params = ParamSet(m.parameters());
      adam = Adam(params, cfg.adam_config());
      grads = params.make_grads();
    }

    Rng rng = make_rng(cfg.seed, kBatchStream + it);
    const TimeQuerySet times = TimeQuerySet::random(q, ds.frame_count, rng);
    const RayBatch batch = sample_ray_batch(ds, cfg.batch_rays, rng, cfg.dynamic_fraction_floor, cfg.gamma);
    const uint64_t jitter_seed = rng();

    grads.zero();
    const BatchLoss loss = total_loss(m, ds, batch, times, rs, weights, jitter_seed, grads, threads);
    try {
      if (!std::isfinite(loss.total))
        throw TrainingError("loss became non-finite");
      params.check_finite(grads);
    } catch (const TrainingError& e) {
      snapshot("last_good.mxvx");
      throw TrainingError(std::string(e.what()) + " (iteration " + std::to_string(it) + ")");
    }

    const double decay = lr_decay_factor(it, total, cfg.lr_final_ratio);
    const LearningRates lr = cfg.learning_rates().scaled(decay);
    adam.step(params, grads, lr);
    ck.step = it + 1;

    const bool last = it + 1 == total;
    if ((cfg.log_every > 0 && (it % cfg.log_every == 0)) || last) {
      TrainLogRow row;
      row.iteration = it;
      row.wall_seconds = seconds_since(t0);
      row.loss = loss.total;
      row.psnr_train = loss.photometric > 0 ? -10.0 * std::log10(loss.photometric) : std::numeric_limits<double>::infinity();
      row.lr = lr.voxel;
      res.log.push_back(row);
      if (opts.on_log) opts.on_log(row);
    }
    if (cfg.checkpoint_every > 0 && ck.step % cfg.checkpoint_every == 0 && !last)
      snapshot(format_checkpoint_name(cfg.checkpoint_pattern, ck.step));
  }

  ck.adam = std::move(adam);
  res.seconds = seconds_since(t0);
  return res;
}

}  // namespace mixvox
