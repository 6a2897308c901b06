#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mixvox/dataset.hpp"
#include "mixvox/variation.hpp"

namespace mixvox {

enum class ShapeKind { box, sphere };
enum class MotionKind { fixed, oscillate, traverse };

/// Opaque emissive primitive. `oscillate` moves the centre by
/// offset * sin(2 pi cycles t / T); `traverse` sweeps it linearly from
/// center - offset/2 at the first frame to center + offset/2 at the last.
struct SceneObject {
  ShapeKind shape = ShapeKind::box;
  Vec3 center;
  Vec3 half_extent{0.2, 0.2, 0.2};  // box
  double radius = 0.2;               // sphere
  Rgb color{1, 1, 1};
  MotionKind motion = MotionKind::fixed;
  Vec3 offset;
  double cycles = 1.0;
  /// Checker cell size in object coordinates; 0 renders a flat color.
  double checker = 0.0;

  bool moving() const { return motion != MotionKind::fixed && norm(offset) > 0; }
  Vec3 center_at(uint32_t t, uint32_t frame_count) const;
  bool contains(Vec3 p, uint32_t t, uint32_t frame_count) const;
  /// Nearest entry distance along the ray within [near, far].
  std::optional<double> hit(const Ray& ray, uint32_t t, uint32_t frame_count) const;
  /// Surface color at world point q on the object at frame t.
  Rgb shade(Vec3 q, uint32_t t, uint32_t frame_count) const;
  /// World bounds of the object at frame t.
  BBox bounds_at(uint32_t t, uint32_t frame_count) const;
};

/// Cameras on a horizontal ring around `target`, all looking at it. Train
/// camera k sits at angle 2 pi k / train and height heights[k % size];
/// eval cameras sit halfway between train cameras at eval_height.
struct CameraRing {
  uint32_t train = 8;
  uint32_t eval = 1;
  double radius = 3.5;
  std::vector<double> heights{2.0, 0.2};
  double eval_height = 1.0;
  double fov_deg = 40.0;
  Vec3 target;
  double near = 0.1;
  double far = 10.0;
};

struct SyntheticSceneSpec {
  BBox bbox;
  uint32_t frame_count = 30;
  uint32_t width = 48;
  uint32_t height = 48;
  CameraRing ring;
  double noise = 0.0;
  uint64_t seed = 0;
  Rgb background{0, 0, 0};
  uint32_t label_resolution = 64;
  std::vector<SceneObject> objects;

  /// Throws ConfigError for objects leaving the box or overlapping at any frame.
  void validate() const;
};

/// One large moving box above three static objects in a [-1,1]^3 box.
SyntheticSceneSpec default_synthetic_spec();
SyntheticSceneSpec parse_synthetic_spec(const std::string& json_text);
std::string synthetic_spec_json(const SyntheticSceneSpec& spec);

struct SyntheticScene {
  SyntheticSceneSpec spec;
  MultiViewVideoDataset dataset;
  DynamicMask labels;  // lattice corners covered by a moving object at some frame
};

/// Closed-form opaque render of one ray at frame t.
Rgb analytic_color(const SyntheticSceneSpec& spec, const Ray& ray, uint32_t t);
/// Exact dynamic labels on an n^3 lattice over the scene box.
DynamicMask dynamic_labels(const SyntheticSceneSpec& spec, uint32_t resolution);
/// Renders every camera and frame (quantized to 8 bits, so a PNG round trip
/// is exact) and computes variance maps.
SyntheticScene generate_synthetic(const SyntheticSceneSpec& spec, int threads = 1);

}  // namespace mixvox
