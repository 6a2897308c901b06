#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mixvox/core.hpp"

namespace mixvox {

/// r(s) = o + s * d for s in [near, far]; d is unit length.
struct Ray {
  Vec3 o;
  Vec3 d;
  double near = 0.0;
  double far = 1.0;
};

/// Pinhole camera. camera_to_world is a row-major 3x4 [R | t] whose rotation
/// columns are the camera's right, down and forward axes (OpenCV convention).
struct CameraSpec {
  std::string name;
  std::array<double, 12> camera_to_world{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
  double fx = 1, fy = 1, cx = 0.5, cy = 0.5;
  uint32_t width = 1, height = 1;
  double near = 0.01, far = 100.0;
  bool eval = false;

  /// Throws DomainError for a non-orthonormal/singular rotation, non-positive
  /// focal lengths, empty images or near >= far.
  void validate() const;
  Vec3 origin() const { return {camera_to_world[3], camera_to_world[7], camera_to_world[11]}; }
  Vec3 rotate(Vec3 v) const;          ///< camera -> world direction
  Vec3 rotate_inverse(Vec3 v) const;  ///< world -> camera direction
  size_t pixel_count() const { return size_t(width) * height; }
};

/// Camera at `eye` looking at `target`; fov_y in degrees.
CameraSpec look_at(std::string name, Vec3 eye, Vec3 target, Vec3 up, double fov_y_deg, uint32_t width,
                   uint32_t height, double near, double far);

/// Ray through the centre of pixel (px, py).
Ray generate_ray(const CameraSpec& cam, uint32_t px, uint32_t py);
/// Rays for flat pixel indices (y * width + x).
std::vector<Ray> generate_rays(const CameraSpec& cam, std::span<const uint32_t> pixels);
/// Continuous pixel coordinates of a world point in front of the camera.
std::optional<std::array<double, 2>> project(const CameraSpec& cam, Vec3 p);

/// Restricts [near, far] to the part of the ray inside the box. Returns false
/// when the ray misses it.
bool clip_to_bbox(Ray& ray, const BBox& bbox);

/// Positions along one ray with the segment length each sample stands for.
struct RaySamples {
  std::vector<double> s;
  std::vector<double> delta;
  std::vector<Vec3> points;
  size_t size() const { return s.size(); }
};

/// ceil((far - near) / (step_scale * voxel_width)), at least 1.
size_t sample_count(double near, double far, double step_scale, double voxel_width);

/// Stratified samples: one uniform jitter per equal segment when `jitter` is
/// given, segment midpoints otherwise. Points are clamped into `bbox`.
RaySamples sample_ray(const Ray& ray, double step_scale, double voxel_width, const BBox& bbox, Rng* jitter = nullptr);

}  // namespace mixvox
