#include "mixvox/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mixvox/binary_io.hpp"
#include "mixvox/image_io.hpp"
#include "mixvox/parallel.hpp"

namespace mixvox {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<uint32_t> MultiViewVideoDataset::train_cameras() const {
  std::vector<uint32_t> out;
  for (uint32_t i = 0; i < cameras.size(); ++i)
    if (!cameras[i].eval) out.push_back(i);
  return out;
}

std::vector<uint32_t> MultiViewVideoDataset::eval_cameras() const {
  std::vector<uint32_t> out;
  for (uint32_t i = 0; i < cameras.size(); ++i)
    if (cameras[i].eval) out.push_back(i);
  return out;
}

void MultiViewVideoDataset::validate() const {
  bbox.validate();
  if (frame_count == 0) throw DomainError("dataset has no frames");
  if (frames.size() != cameras.size()) throw DomainError("frame stacks do not match camera list");
  for (size_t c = 0; c < cameras.size(); ++c) {
    cameras[c].validate();
    if (frames[c].size() != frame_count)
      throw DomainError("camera '" + cameras[c].name + "' has " + std::to_string(frames[c].size()) +
                        " frames, expected " + std::to_string(frame_count));
    for (const Image& im : frames[c])
      if (im.width != cameras[c].width || im.height != cameras[c].height)
        throw DomainError("camera '" + cameras[c].name + "': frame size differs from intrinsics");
  }
}

void compute_variance_maps(MultiViewVideoDataset& ds, int threads) {
  if (ds.frame_count < 2) throw DomainError("variance maps need at least two frames");
  ds.variance.assign(ds.cameras.size(), VarianceMap{});
  const auto train = ds.train_cameras();
  parallel_for(train.size(), threads, [&](size_t, size_t b, size_t e) {
    std::vector<Rgb> seq(ds.frame_count);
    for (size_t k = b; k < e; ++k) {
      const uint32_t c = train[k];
      VarianceMap& m = ds.variance[c];
      m.width = ds.cameras[c].width;
      m.height = ds.cameras[c].height;
      m.stddev.resize(ds.cameras[c].pixel_count());
      for (size_t p = 0; p < m.stddev.size(); ++p) {
        for (uint32_t t = 0; t < ds.frame_count; ++t) seq[t] = ds.color(c, t, p);
        m.stddev[p] = float(pixel_variance(seq).stddev);
      }
    }
  });
}

std::string frame_path(const std::string& root, const std::string& camera, uint32_t t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05u.png", t);
  return (fs::path(root) / camera / buf).string();
}

std::string variance_cache_path(const std::string& root, const std::string& camera) {
  return (fs::path(root) / ".cache" / (camera + ".var")).string();
}

namespace {

std::array<float, 3> read_vec3f(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw LoadError("poses.json: '" + what + "' must be a 3-vector");
  return {j[0].get<float>(), j[1].get<float>(), j[2].get<float>()};
}

CameraSpec parse_camera(const json& j) {
  CameraSpec c;
  c.name = j.at("name").get<std::string>();
  const auto& m = j.at("camera_to_world");
  if (!m.is_array() || m.size() != 12) throw LoadError("camera '" + c.name + "': camera_to_world needs 12 reals");
  for (size_t i = 0; i < 12; ++i) c.camera_to_world[i] = m[i].get<double>();
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.width = j.at("width").get<uint32_t>();
  c.height = j.at("height").get<uint32_t>();
  c.near = j.at("near").get<double>();
  c.far = j.at("far").get<double>();
  const std::string split = j.value("split", "train");
  if (split != "train" && split != "eval") throw LoadError("camera '" + c.name + "': split must be train or eval");
  c.eval = split == "eval";
  return c;
}

json camera_json(const CameraSpec& c) {
  json j;
  j["name"] = c.name;
  j["camera_to_world"] = c.camera_to_world;
  j["fx"] = c.fx;
  j["fy"] = c.fy;
  j["cx"] = c.cx;
  j["cy"] = c.cy;
  j["width"] = c.width;
  j["height"] = c.height;
  j["near"] = c.near;
  j["far"] = c.far;
  j["split"] = c.eval ? "eval" : "train";
  return j;
}

}  // namespace

CameraSpec parse_camera_json(const std::string& text) {
  try {
    CameraSpec c = parse_camera(json::parse(text));
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw LoadError("camera description: " + std::string(e.what()));
  } catch (const DomainError& e) {
    throw LoadError("camera description: " + std::string(e.what()));
  }
}

MultiViewVideoDataset load_poses(const std::string& root) {
  const fs::path pose_file = fs::path(root) / "poses.json";
  if (!fs::exists(pose_file)) throw LoadError("missing pose file '" + pose_file.string() + "'");
  MultiViewVideoDataset ds;
  try {
    std::ifstream in(pose_file);
    const json j = json::parse(in);
    const auto& b = j.at("bbox");
    if (!b.is_array() || b.size() != 2) throw LoadError("poses.json: bbox must hold two 3-vectors");
    ds.bbox.lo = read_vec3f(b[0], "bbox[0]");
    ds.bbox.hi = read_vec3f(b[1], "bbox[1]");
    ds.frame_count = j.at("frame_count").get<uint32_t>();
    for (const auto& cj : j.at("cameras")) ds.cameras.push_back(parse_camera(cj));
  } catch (const json::exception& e) {
    throw LoadError("poses.json: " + std::string(e.what()));
  }
  try {
    ds.bbox.validate();
    for (const auto& c : ds.cameras) c.validate();
  } catch (const DomainError& e) {
    throw LoadError(std::string("poses.json: ") + e.what());
  }
  if (ds.cameras.empty()) throw LoadError("poses.json lists no cameras");
  if (ds.frame_count == 0) throw LoadError("poses.json: frame_count must be positive");
  return ds;
}

MultiViewVideoDataset load_dataset(const std::string& root, bool write_cache, int threads) {
  MultiViewVideoDataset ds = load_poses(root);
  ds.frames.assign(ds.cameras.size(), {});
  parallel_for(ds.cameras.size(), threads, [&](size_t, size_t b, size_t e) {
    for (size_t c = b; c < e; ++c) {
      const CameraSpec& cam = ds.cameras[c];
      ds.frames[c].reserve(ds.frame_count);
      for (uint32_t t = 0; t < ds.frame_count; ++t) {
        const std::string p = frame_path(root, cam.name, t);
        if (!fs::exists(p))
          throw LoadError("camera '" + cam.name + "' frame " + std::to_string(t) + ": missing file " + p);
        Image im;
        try {
          im = read_png(p);
        } catch (const LoadError& e) {
          throw LoadError("camera '" + cam.name + "' frame " + std::to_string(t) + ": " + e.what());
        }
        if (im.width != cam.width || im.height != cam.height)
          throw LoadError("camera '" + cam.name + "' frame " + std::to_string(t) + ": size mismatch");
        ds.frames[c].push_back(std::move(im));
      }
    }
  });
  // Surplus frames on disk mean the pose file disagrees with the sequence.
  for (const auto& cam : ds.cameras)
    if (fs::exists(frame_path(root, cam.name, ds.frame_count)))
      throw LoadError("camera '" + cam.name + "' has more frames than frame_count");

  if (ds.frame_count < 2) {
    ds.variance.assign(ds.cameras.size(), VarianceMap{});
    return ds;
  }
  bool cached = true;
  std::vector<VarianceMap> maps(ds.cameras.size());
  for (uint32_t c : ds.train_cameras()) {
    const std::string p = variance_cache_path(root, ds.cameras[c].name);
    if (!fs::exists(p)) {
      cached = false;
      break;
    }
    try {
      maps[c] = read_variance_map(p);
    } catch (const LoadError&) {
      cached = false;
      break;
    }
    if (maps[c].width != ds.cameras[c].width || maps[c].height != ds.cameras[c].height) {
      cached = false;
      break;
    }
  }
  if (cached) {
    ds.variance = std::move(maps);
  } else {
    compute_variance_maps(ds, threads);
    if (write_cache)
      for (uint32_t c : ds.train_cameras())
        write_variance_map(variance_cache_path(root, ds.cameras[c].name), ds.variance[c]);
  }
  return ds;
}

void save_dataset(const MultiViewVideoDataset& ds, const std::string& root) {
  ds.validate();
  json j;
  j["bbox"] = {{ds.bbox.lo[0], ds.bbox.lo[1], ds.bbox.lo[2]}, {ds.bbox.hi[0], ds.bbox.hi[1], ds.bbox.hi[2]}};
  j["frame_count"] = ds.frame_count;
  j["cameras"] = json::array();
  for (const auto& c : ds.cameras) j["cameras"].push_back(camera_json(c));
  for (size_t c = 0; c < ds.cameras.size(); ++c)
    for (uint32_t t = 0; t < ds.frame_count; ++t) write_png(frame_path(root, ds.cameras[c].name, t), ds.frames[c][t]);
  write_text_atomic((fs::path(root) / "poses.json").string(), j.dump(2) + "\n");
}

std::vector<Rgb> RayBatch::ground_truth(const MultiViewVideoDataset& ds, size_t i) const {
  std::vector<Rgb> out(ds.frame_count);
  for (uint32_t t = 0; t < ds.frame_count; ++t) out[t] = ds.color(camera[i], t, pixel[i]);
  return out;
}

RayBatch sample_ray_batch(const MultiViewVideoDataset& ds, size_t n, Rng& rng, double dynamic_fraction_floor,
                          double gamma) {
  if (n == 0) throw DomainError("ray batch size must be at least 1");
  const auto train = ds.train_cameras();
  if (train.empty()) throw DomainError("dataset has no training cameras");
  std::vector<uint64_t> offsets{0};
  for (uint32_t c : train) offsets.push_back(offsets.back() + ds.cameras[c].pixel_count());
  const uint64_t total = offsets.back();

  auto is_dynamic = [&](uint32_t c, size_t p) -> uint8_t {
    if (ds.variance.size() <= c) return 0;
    const VarianceMap& m = ds.variance[c];
    return !m.stddev.empty() && m.dynamic(p, gamma) ? 1 : 0;
  };

  RayBatch b;
  b.rays.reserve(n);
  auto push = [&](uint32_t c, uint32_t p) {
    const CameraSpec& cam = ds.cameras[c];
    b.rays.push_back(generate_ray(cam, p % cam.width, p / cam.width));
    b.camera.push_back(c);
    b.pixel.push_back(p);
    b.dynamic.push_back(is_dynamic(c, p));
  };

  size_t n_dyn = 0;
  std::vector<std::pair<uint32_t, uint32_t>> dyn_pixels;
  if (dynamic_fraction_floor > 0.0) {
    for (uint32_t c : train)
      for (uint32_t p = 0; p < ds.cameras[c].pixel_count(); ++p)
        if (is_dynamic(c, p)) dyn_pixels.emplace_back(c, p);
    if (!dyn_pixels.empty())
      n_dyn = std::min(n, size_t(std::ceil(std::min(dynamic_fraction_floor, 1.0) * double(n))));
  }
  for (size_t i = 0; i < n_dyn; ++i) {
    const size_t k = std::min(dyn_pixels.size() - 1, size_t(uniform01(rng) * double(dyn_pixels.size())));
    push(dyn_pixels[k].first, dyn_pixels[k].second);
  }
  for (size_t i = n_dyn; i < n; ++i) {
    const uint64_t g = std::min(total - 1, uint64_t(uniform01(rng) * double(total)));
    const size_t ci = size_t(std::upper_bound(offsets.begin(), offsets.end(), g) - offsets.begin()) - 1;
    push(train[ci], uint32_t(g - offsets[ci]));
  }
  return b;
}

}  // namespace mixvox
