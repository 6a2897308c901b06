#include "mixvox/camera.hpp"

#include <algorithm>
#include <cmath>

namespace mixvox {

namespace {
constexpr size_t kMaxSamplesPerRay = 1 << 14;
}

void CameraSpec::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw DomainError("camera '" + name + "': focal lengths must be positive");
  if (width == 0 || height == 0) throw DomainError("camera '" + name + "': empty image size");
  if (!(near < far) || !(near >= 0)) throw DomainError("camera '" + name + "': need 0 <= near < far");
  const auto& m = camera_to_world;
  for (double v : m)
    if (!std::isfinite(v)) throw DomainError("camera '" + name + "': non-finite pose");
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double d = 0;
      for (int k = 0; k < 3; ++k) d += m[k * 4 + i] * m[k * 4 + j];
      if (std::abs(d - (i == j ? 1.0 : 0.0)) > 1e-4)
        throw DomainError("camera '" + name + "': singular or non-orthonormal rotation");
    }
}

Vec3 CameraSpec::rotate(Vec3 v) const {
  const auto& m = camera_to_world;
  return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[4] * v.x + m[5] * v.y + m[6] * v.z,
          m[8] * v.x + m[9] * v.y + m[10] * v.z};
}

Vec3 CameraSpec::rotate_inverse(Vec3 v) const {
  const auto& m = camera_to_world;
  return {m[0] * v.x + m[4] * v.y + m[8] * v.z, m[1] * v.x + m[5] * v.y + m[9] * v.z,
          m[2] * v.x + m[6] * v.y + m[10] * v.z};
}

CameraSpec look_at(std::string name, Vec3 eye, Vec3 target, Vec3 up, double fov_y_deg, uint32_t width,
                   uint32_t height, double near, double far) {
  const Vec3 fwd = normalized(target - eye);
  const Vec3 right = normalized(cross(fwd, up));
  const Vec3 down = cross(fwd, right);
  CameraSpec c;
  c.name = std::move(name);
  c.camera_to_world = {right.x, down.x, fwd.x, eye.x, right.y, down.y, fwd.y, eye.y, right.z, down.z, fwd.z, eye.z};
  c.width = width;
  c.height = height;
  c.fy = 0.5 * height / std::tan(0.5 * fov_y_deg * M_PI / 180.0);
  c.fx = c.fy;
  c.cx = 0.5 * width;
  c.cy = 0.5 * height;
  c.near = near;
  c.far = far;
  return c;
}

Ray generate_ray(const CameraSpec& cam, uint32_t px, uint32_t py) {
  const Vec3 dc{(px + 0.5 - cam.cx) / cam.fx, (py + 0.5 - cam.cy) / cam.fy, 1.0};
  Ray r;
  r.o = cam.origin();
  r.d = normalized(cam.rotate(dc));
  // near/far are distances along the optical axis; convert to ray length.
  const double stretch = norm(dc);
  r.near = cam.near * stretch;
  r.far = cam.far * stretch;
  return r;
}

std::vector<Ray> generate_rays(const CameraSpec& cam, std::span<const uint32_t> pixels) {
  cam.validate();
  std::vector<Ray> out;
  out.reserve(pixels.size());
  for (uint32_t idx : pixels) {
    if (idx >= cam.pixel_count()) throw DomainError("pixel index outside image");
    out.push_back(generate_ray(cam, idx % cam.width, idx / cam.width));
  }
  return out;
}

std::optional<std::array<double, 2>> project(const CameraSpec& cam, Vec3 p) {
  const Vec3 c = cam.rotate_inverse(p - cam.origin());
  if (c.z <= 0) return std::nullopt;
  return std::array<double, 2>{cam.fx * c.x / c.z + cam.cx, cam.fy * c.y / c.z + cam.cy};
}

bool clip_to_bbox(Ray& ray, const BBox& bbox) {
  double t0 = ray.near, t1 = ray.far;
  for (int a = 0; a < 3; ++a) {
    const double o = ray.o[a], d = ray.d[a];
    if (std::abs(d) < 1e-12) {
      if (o < bbox.lo[a] || o > bbox.hi[a]) return false;
      continue;
    }
    double ta = (bbox.lo[a] - o) / d, tb = (bbox.hi[a] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (!(t0 < t1)) return false;
  ray.near = t0;
  ray.far = t1;
  return true;
}

size_t sample_count(double near, double far, double step_scale, double voxel_width) {
  if (!(near < far)) throw DomainError("ray near must be below far");
  if (!(step_scale > 0) || !(voxel_width > 0)) throw DomainError("step size must be positive");
  const double n = std::ceil((far - near) / (step_scale * voxel_width));
  return std::clamp<size_t>(size_t(n), 1, kMaxSamplesPerRay);
}

RaySamples sample_ray(const Ray& ray, double step_scale, double voxel_width, const BBox& bbox, Rng* jitter) {
  const size_t n = sample_count(ray.near, ray.far, step_scale, voxel_width);
  const double seg = (ray.far - ray.near) / double(n);
  RaySamples out;
  out.s.resize(n);
  out.delta.assign(n, seg);
  out.points.resize(n);
  for (size_t k = 0; k < n; ++k) {
    const double u = jitter ? uniform01(*jitter) : 0.5;
    out.s[k] = ray.near + (double(k) + u) * seg;
    out.points[k] = bbox.clamp(ray.o + ray.d * out.s[k]);
  }
  return out;
}

}  // namespace mixvox
