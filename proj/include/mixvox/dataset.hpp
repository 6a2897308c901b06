#pragma once

#include <string>
#include <vector>

#include "mixvox/camera.hpp"
#include "mixvox/variance.hpp"

namespace mixvox {

/// H x W RGB image in [0,1], row-major, channels interleaved.
struct Image {
  uint32_t width = 0;
  uint32_t height = 0;
  std::vector<float> data;

  Image() = default;
  Image(uint32_t w, uint32_t h) : width(w), height(h), data(size_t(w) * h * 3, 0.f) {}
  size_t pixel_count() const { return size_t(width) * height; }
  Rgb pixel(size_t i) const { return {data[3 * i], data[3 * i + 1], data[3 * i + 2]}; }
  void set(size_t i, const Rgb& c) {
    for (int k = 0; k < 3; ++k) data[3 * i + k] = float(c[k]);
  }
  friend bool operator==(const Image&, const Image&) = default;
};

struct MultiViewVideoDataset {
  BBox bbox;
  uint32_t frame_count = 0;
  std::vector<CameraSpec> cameras;
  std::vector<std::vector<Image>> frames;  // [camera][t]
  std::vector<VarianceMap> variance;       // [camera]; empty map for eval cameras

  std::vector<uint32_t> train_cameras() const;
  std::vector<uint32_t> eval_cameras() const;
  Rgb color(uint32_t cam, uint32_t t, size_t pixel) const { return frames[cam][t].pixel(pixel); }
  /// Checks shapes, camera validity and the shared frame count.
  void validate() const;
};

/// Computes D(r) for every training camera, overwriting `variance`.
void compute_variance_maps(MultiViewVideoDataset& ds, int threads = 1);

/// Reads only poses.json: bounds, frame count and cameras, no frames.
MultiViewVideoDataset load_poses(const std::string& root);
/// One camera object in the poses.json layout.
CameraSpec parse_camera_json(const std::string& text);

/// Loads poses.json and the PNG frames. Variance maps come from
/// root/.cache/<name>.var when present and consistent, are computed
/// otherwise, and are then written to the cache when `write_cache` is set.
MultiViewVideoDataset load_dataset(const std::string& root, bool write_cache = true, int threads = 1);
/// Writes poses.json and 8-bit PNG frames.
void save_dataset(const MultiViewVideoDataset& ds, const std::string& root);

std::string frame_path(const std::string& root, const std::string& camera, uint32_t t);
std::string variance_cache_path(const std::string& root, const std::string& camera);

/// Rays with their source pixel; ground truth is read back from the dataset.
struct RayBatch {
  std::vector<Ray> rays;
  std::vector<uint32_t> camera;
  std::vector<uint32_t> pixel;
  std::vector<uint8_t> dynamic;  // M(r)

  size_t size() const { return rays.size(); }
  std::vector<Rgb> ground_truth(const MultiViewVideoDataset& ds, size_t i) const;
};

/// Uniform pixels over training cameras; at least ceil(floor * n) rays come
/// from M = 1 pixels when such pixels exist.
RayBatch sample_ray_batch(const MultiViewVideoDataset& ds, size_t n, Rng& rng, double dynamic_fraction_floor,
                          double gamma);

}  // namespace mixvox
