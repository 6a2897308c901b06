// mixvox: train, render, evaluate and inspect mixed static/dynamic voxel
// radiance fields.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mixvox/binary_io.hpp"
#include "mixvox/checkpoint.hpp"
#include "mixvox/config.hpp"
#include "mixvox/dataset.hpp"
#include "mixvox/image_io.hpp"
#include "mixvox/metrics.hpp"
#include "mixvox/parallel.hpp"
#include "mixvox/synthetic.hpp"
#include "mixvox/train.hpp"

namespace fs = std::filesystem;
using namespace mixvox;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Applies trailing `--key value` / `--key=value` pairs. Dashes in keys map
/// to underscores.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& extra) {
  for (size_t i = 0; i < extra.size(); ++i) {
    const std::string& a = extra[i];
    if (a.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + a + "'");
    std::string key = a.substr(2), value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= extra.size()) throw ConfigError("missing value for '--" + key + "'");
      value = extra[++i];
    }
    std::replace(key.begin(), key.end(), '-', '_');
    cfg.set(key, value);
  }
}

struct CommonArgs {
  std::string config;
  int threads = 0;
};

RunConfig resolve_config(const CommonArgs& a, const std::vector<std::string>& extra) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : RunConfig::load(a.config);
  apply_overrides(cfg, extra);
  if (a.threads > 0) cfg.threads = a.threads;
  cfg.threads = resolve_threads(cfg.threads);
  cfg.validate();
  return cfg;
}

void require_dir(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string(what) + " path is required");
  if (!fs::is_directory(path)) throw ConfigError(std::string(what) + " '" + path + "' does not exist");
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string(what) + " path is required");
  if (!fs::is_regular_file(path)) throw ConfigError(std::string(what) + " '" + path + "' does not exist");
}

std::string join(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

// ---------------------------------------------------------------------------

struct TrainArgs {
  CommonArgs common;
  std::string data, out, preset, resume;
  double scale = 0;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& extra) {
  RunConfig cfg = resolve_config(a.common, extra);
  if (!a.data.empty()) cfg.data_dir = a.data;
  if (!a.out.empty()) cfg.out_dir = a.out;
  if (!a.preset.empty()) cfg.preset = a.preset;
  if (a.scale > 0) cfg.scale = a.scale;
  cfg.validate();
  require_dir(cfg.data_dir, "dataset");

  fs::create_directories(cfg.out_dir);
  write_text_atomic(join(cfg.out_dir, "config.cfg"), cfg.to_text());
  std::printf("training for %llu iterations (preset %s, scale %g, %d threads)\n",
              static_cast<unsigned long long>(cfg.total_iterations()), cfg.preset.c_str(), cfg.scale, cfg.threads);

  const MultiViewVideoDataset ds = load_dataset(cfg.data_dir, true, cfg.threads);
  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) {
    require_file(a.resume, "checkpoint");
    resume = load_checkpoint(a.resume);
    std::printf("resuming at step %llu\n", static_cast<unsigned long long>(resume->step));
  }

  std::ofstream log(join(cfg.out_dir, "train_log.csv"));
  log << train_log_header();
  TrainOptions opts;
  opts.out_dir = cfg.out_dir;
  opts.on_log = [&](const TrainLogRow& r) {
    log << format_log_row(r) << std::flush;
    std::printf("it %6llu  loss %.6f  psnr %.2f  lr %.5f  %.1fs\n", static_cast<unsigned long long>(r.iteration),
                r.loss, r.psnr_train, r.lr, r.wall_seconds);
    std::fflush(stdout);
  };
  const TrainResult res = train(ds, cfg, std::move(resume), opts);
  const std::string final_path = join(cfg.out_dir, "final.mxvx");
  save_checkpoint(final_path, res.checkpoint);
  std::printf("wrote %s (step %llu, %.1fs, variation field %.1fs, dynamic voxels %.4f)\n", final_path.c_str(),
              static_cast<unsigned long long>(res.checkpoint.step), res.seconds, res.variation_seconds,
              res.checkpoint.model.mask.fraction());
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct RenderArgs {
  std::string checkpoint, data, camera, pose, time, out, mode;
  int threads = 0;
  bool depth = false;
};

std::pair<uint32_t, uint32_t> parse_time_range(const std::string& s, uint32_t frame_count) {
  if (s.empty()) return {0, 0};
  const auto dots = s.find("..");
  auto num = [&](const std::string& v) {
    try {
      size_t used = 0;
      const unsigned long x = std::stoul(v, &used);
      if (used != v.size()) throw ConfigError("");
      return uint32_t(x);
    } catch (...) {
      throw ConfigError("time must be N or A..B, got '" + s + "'");
    }
  };
  const uint32_t a = num(s.substr(0, dots));
  const uint32_t b = dots == std::string::npos ? a : num(s.substr(dots + 2));
  if (a > b || b >= frame_count)
    throw ConfigError("time range " + s + " is outside [0, " + std::to_string(frame_count) + ")");
  return {a, b};
}

int cmd_render(const RenderArgs& a) {
  require_file(a.checkpoint, "checkpoint");
  if (a.out.empty()) throw ConfigError("output directory is required");
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  RunConfig cfg = RunConfig::parse(ck.config_text);
  if (!a.mode.empty()) cfg.render_mode = a.mode;
  cfg.threads = resolve_threads(a.threads > 0 ? a.threads : cfg.threads);
  cfg.validate();

  CameraSpec cam;
  if (!a.pose.empty()) {
    require_file(a.pose, "pose");
    cam = parse_camera_json(read_text(a.pose));
  } else {
    require_dir(a.data, "dataset");
    const MultiViewVideoDataset poses = load_poses(a.data);
    const auto it = std::find_if(poses.cameras.begin(), poses.cameras.end(),
                                 [&](const CameraSpec& c) { return c.name == a.camera; });
    if (a.camera.empty()) throw ConfigError("--camera is required with --data");
    if (it == poses.cameras.end()) throw ConfigError("camera '" + a.camera + "' not found in " + a.data);
    cam = *it;
  }
  const auto [t0, t1] = parse_time_range(a.time, ck.model.frame_count);
  const RenderSettings rs = cfg.render_settings();

  fs::create_directories(a.out);
  write_text_atomic(join(a.out, "config.cfg"), cfg.to_text());
  for (uint32_t t = t0; t <= t1; ++t) {
    const RenderedFrame f = render_frame(ck.model, cam, t, rs, cfg.threads);
    char name[64];
    std::snprintf(name, sizeof name, "frame_%05u.png", t);
    write_png(join(a.out, name), f.rgb);
    if (a.depth) {
      std::snprintf(name, sizeof name, "depth_%05u.png", t);
      write_png_gray16(join(a.out, name), f.rgb.width, f.rgb.height, f.normalized_depth());
    }
  }
  std::printf("rendered %u frame(s) of camera '%s' into %s\n", t1 - t0 + 1, cam.name.c_str(), a.out.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint, data, out;
  uint32_t stride = 10;
  int threads = 0;
};

/// Training time from the log next to the checkpoint, when there is one.
double logged_train_seconds(const std::string& checkpoint) {
  std::ifstream in(join(fs::path(checkpoint).parent_path().string(), "train_log.csv"));
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  double secs = 0;
  unsigned long long it = 0;
  if (std::sscanf(last.c_str(), "%llu,%lf", &it, &secs) != 2) return 0.0;
  return secs;
}

int cmd_eval(const EvalArgs& a) {
  require_file(a.checkpoint, "checkpoint");
  require_dir(a.data, "dataset");
  if (a.stride == 0) throw ConfigError("stride must be positive");
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  RunConfig cfg = RunConfig::parse(ck.config_text);
  cfg.threads = resolve_threads(a.threads > 0 ? a.threads : cfg.threads);
  cfg.eval_stride = a.stride;
  const MultiViewVideoDataset poses = load_poses(a.data);
  if (std::none_of(poses.cameras.begin(), poses.cameras.end(), [](const CameraSpec& c) { return c.eval; }))
    throw ConfigError("dataset has no evaluation camera");
  const MultiViewVideoDataset ds = load_dataset(a.data, true, cfg.threads);
  MetricReport rep = evaluate(ck.model, ds, a.stride, cfg.render_settings(), cfg.threads);
  rep.train_seconds = logged_train_seconds(a.checkpoint);

  const std::string out = a.out.empty() ? fs::path(a.checkpoint).parent_path().string() : a.out;
  if (!out.empty()) fs::create_directories(out);
  const std::string dir = out.empty() ? "." : out;
  write_text_atomic(join(dir, "metrics.csv"), rep.csv());
  write_text_atomic(join(dir, "metrics_summary.txt"), rep.summary());
  write_text_atomic(join(dir, "eval_config.cfg"), cfg.to_text());
  std::fputs(rep.summary().c_str(), stdout);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct MaskArgs {
  CommonArgs common;
  std::string checkpoint, data, out;
  double beta = -1;
};

int cmd_mask(const MaskArgs& a, const std::vector<std::string>& extra) {
  if (a.checkpoint.empty() == a.data.empty()) throw ConfigError("give exactly one of --checkpoint or --data");
  RunConfig cfg;
  Model m;
  std::optional<MultiViewVideoDataset> ds;
  if (!a.checkpoint.empty()) {
    require_file(a.checkpoint, "checkpoint");
    Checkpoint ck = load_checkpoint(a.checkpoint);
    cfg = RunConfig::parse(ck.config_text);
    apply_overrides(cfg, extra);
    m = std::move(ck.model);
  } else {
    require_dir(a.data, "dataset");
    cfg = resolve_config(a.common, extra);
  }
  if (a.beta >= 0) cfg.beta = a.beta;
  cfg.threads = resolve_threads(a.common.threads > 0 ? a.common.threads : cfg.threads);
  cfg.validate();

  if (!a.data.empty()) {
    ds = load_dataset(a.data, true, cfg.threads);
    m.bbox = ds->bbox;
    m.frame_count = ds->frame_count;
    m.resolution = cfg.start_resolution;
    VariationTrainReport rep;
    m.variation = train_variation_field(*ds, cfg.variation_config(false), m.resolution, &rep);
    std::printf("variation field trained in %.2fs (final loss %.5f)\n", rep.seconds, rep.final_loss);
  }
  m.mask = infer_dynamic_mask(m.variation, cfg.beta, cfg.k_m);

  // Dynamic point fraction over every pixel of the cameras we know about.
  std::vector<Ray> rays;
  if (ds) {
    for (uint32_t c : ds->train_cameras()) {
      std::vector<uint32_t> px(ds->cameras[c].pixel_count());
      for (size_t i = 0; i < px.size(); ++i) px[i] = uint32_t(i);
      const auto r = generate_rays(ds->cameras[c], px);
      rays.insert(rays.end(), r.begin(), r.end());
    }
  }
  const RenderSettings rs = cfg.render_settings();
  const std::string out = a.out.empty() ? "mask.rle" : a.out;
  if (const auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
  write_file_atomic(out, encode_mask_rle(m.mask));
  write_text_atomic(out + ".cfg", cfg.to_text());

  std::printf("beta: %g\nkernel: %u\nlattice: %ux%ux%u\ndynamic_voxels: %zu\ndynamic_voxel_fraction: %.6f\n",
              cfg.beta, m.mask.kernel, m.mask.dims.nx, m.mask.dims.ny, m.mask.dims.nz, m.mask.count(),
              m.mask.fraction());
  if (!rays.empty())
    std::printf("dynamic_point_fraction: %.6f (over %zu rays)\n", dynamic_point_fraction(m, rays, rs), rays.size());
  std::printf("exported %s\n", out.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string spec, out;
  int threads = 0;
};

int cmd_synth(const SynthArgs& a) {
  if (a.out.empty()) throw ConfigError("output directory is required");
  SyntheticSceneSpec spec = default_synthetic_spec();
  if (!a.spec.empty()) {
    require_file(a.spec, "scene spec");
    spec = parse_synthetic_spec(read_text(a.spec));
  }
  const SyntheticScene scene = generate_synthetic(spec, resolve_threads(a.threads));
  fs::create_directories(a.out);
  save_dataset(scene.dataset, a.out);
  write_file_atomic(join(a.out, "labels.rle"), encode_mask_rle(scene.labels));
  write_text_atomic(join(a.out, "scene.json"), synthetic_spec_json(spec));
  std::printf("wrote %zu cameras x %u frames to %s (%zu dynamic label voxels)\n", scene.dataset.cameras.size(),
              scene.dataset.frame_count, a.out.c_str(), scene.labels.count());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixvox: mixed static/dynamic voxel radiance fields for multi-view video"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a model; extra --key value pairs override config keys");
  train_cmd->add_option("-c,--config", ta.common.config, "config file");
  train_cmd->add_option("--data", ta.data, "dataset directory");
  train_cmd->add_option("--out", ta.out, "output directory");
  train_cmd->add_option("--preset", ta.preset, "S, M, L or X");
  train_cmd->add_option("--scale", ta.scale, "iteration scale for desk runs");
  train_cmd->add_option("--resume", ta.resume, "checkpoint to continue from");
  train_cmd->add_option("--threads", ta.common.threads, "worker threads (default MIXVOXELS_THREADS)");
  train_cmd->allow_extras();

  RenderArgs ra;
  auto* render_cmd = app.add_subcommand("render", "render frames from a checkpoint");
  render_cmd->add_option("--checkpoint", ra.checkpoint)->required();
  render_cmd->add_option("--data", ra.data, "dataset directory holding poses.json");
  render_cmd->add_option("--camera", ra.camera, "camera name from poses.json");
  render_cmd->add_option("--pose", ra.pose, "JSON file with one camera object");
  render_cmd->add_option("--time", ra.time, "frame N or range A..B (inclusive)")->default_val("0");
  render_cmd->add_option("--out", ra.out)->required();
  render_cmd->add_option("--mode", ra.mode, "mixed, static or dynamic");
  render_cmd->add_flag("--depth", ra.depth, "also write 16-bit depth maps");
  render_cmd->add_option("--threads", ra.threads);

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "score held-out cameras");
  eval_cmd->add_option("--checkpoint", ea.checkpoint)->required();
  eval_cmd->add_option("--data", ea.data)->required();
  eval_cmd->add_option("--stride", ea.stride, "evaluate every n-th frame")->default_val(10);
  eval_cmd->add_option("--out", ea.out, "report directory (default: beside the checkpoint)");
  eval_cmd->add_option("--threads", ea.threads);

  MaskArgs ma;
  auto* mask_cmd = app.add_subcommand("mask", "infer and export the dynamic voxel mask");
  mask_cmd->add_option("--checkpoint", ma.checkpoint);
  mask_cmd->add_option("--data", ma.data, "train a variation field on this dataset instead");
  mask_cmd->add_option("-c,--config", ma.common.config);
  mask_cmd->add_option("--beta", ma.beta, "threshold on sigmoid(V)");
  mask_cmd->add_option("--out", ma.out, "RLE export path")->default_val("mask.rle");
  mask_cmd->add_option("--threads", ma.common.threads);
  mask_cmd->allow_extras();

  SynthArgs sa;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic multi-view video dataset");
  synth_cmd->add_option("--spec", sa.spec, "scene JSON (default scene when omitted)");
  synth_cmd->add_option("--out", sa.out)->required();
  synth_cmd->add_option("--threads", sa.threads);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(ta, train_cmd->remaining());
    if (*render_cmd) return cmd_render(ra);
    if (*eval_cmd) return cmd_eval(ea);
    if (*mask_cmd) return cmd_mask(ma, mask_cmd->remaining());
    if (*synth_cmd) return cmd_synth(sa);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
