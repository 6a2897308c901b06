#include "mixvox/synthetic.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

#include "mixvox/image_io.hpp"
#include "mixvox/parallel.hpp"

namespace mixvox {

using nlohmann::json;

Vec3 SceneObject::center_at(uint32_t t, uint32_t frame_count) const {
  switch (motion) {
    case MotionKind::fixed:
      return center;
    case MotionKind::oscillate:
      return center + offset * std::sin(2.0 * M_PI * cycles * double(t) / double(frame_count));
    case MotionKind::traverse: {
      const double u = frame_count > 1 ? double(t) / double(frame_count - 1) : 0.0;
      return center + offset * (u - 0.5);
    }
  }
  return center;
}

bool SceneObject::contains(Vec3 p, uint32_t t, uint32_t frame_count) const {
  const Vec3 d = p - center_at(t, frame_count);
  if (shape == ShapeKind::sphere) return dot(d, d) <= radius * radius;
  return std::abs(d.x) <= half_extent.x && std::abs(d.y) <= half_extent.y && std::abs(d.z) <= half_extent.z;
}

Rgb SceneObject::shade(Vec3 q, uint32_t t, uint32_t frame_count) const {
  if (!(checker > 0)) return color;
  // Small bias keeps face points off cell boundaries.
  const Vec3 l = q - center_at(t, frame_count) + Vec3{1e-7, 1e-7, 1e-7};
  long parity = 0;
  for (int a = 0; a < 3; ++a) parity += long(std::floor(l[a] / checker));
  if (parity % 2 == 0) return color;
  return {0.5 * color[0], 0.5 * color[1], 0.5 * color[2]};
}

BBox SceneObject::bounds_at(uint32_t t, uint32_t frame_count) const {
  const Vec3 c = center_at(t, frame_count);
  const Vec3 h = shape == ShapeKind::sphere ? Vec3{radius, radius, radius} : half_extent;
  BBox b;
  for (int a = 0; a < 3; ++a) {
    b.lo[a] = float(c[a] - h[a]);
    b.hi[a] = float(c[a] + h[a]);
  }
  return b;
}

std::optional<double> SceneObject::hit(const Ray& ray, uint32_t t, uint32_t frame_count) const {
  const Vec3 c = center_at(t, frame_count);
  double s;
  if (shape == ShapeKind::sphere) {
    const Vec3 oc = ray.o - c;
    const double b = dot(oc, ray.d);
    const double disc = b * b - (dot(oc, oc) - radius * radius);
    if (disc < 0) return std::nullopt;
    const double r = std::sqrt(disc);
    s = -b - r;
    if (s < ray.near) s = -b + r;
  } else {
    double t0 = -INFINITY, t1 = INFINITY;
    for (int a = 0; a < 3; ++a) {
      const double lo = c[a] - half_extent[a], hi = c[a] + half_extent[a];
      if (std::abs(ray.d[a]) < 1e-15) {
        if (ray.o[a] < lo || ray.o[a] > hi) return std::nullopt;
        continue;
      }
      double ta = (lo - ray.o[a]) / ray.d[a], tb = (hi - ray.o[a]) / ray.d[a];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
    }
    if (t0 > t1) return std::nullopt;
    s = t0 >= ray.near ? t0 : t1;
  }
  if (s < ray.near || s > ray.far) return std::nullopt;
  return s;
}

namespace {

bool boxes_overlap(const BBox& a, const BBox& b) {
  for (int k = 0; k < 3; ++k)
    if (a.hi[k] <= b.lo[k] || b.hi[k] <= a.lo[k]) return false;
  return true;
}

bool objects_overlap(const SceneObject& a, const SceneObject& b, uint32_t t, uint32_t T) {
  const Vec3 ca = a.center_at(t, T), cb = b.center_at(t, T);
  if (a.shape == ShapeKind::sphere && b.shape == ShapeKind::sphere) return norm(ca - cb) < a.radius + b.radius;
  if (a.shape == ShapeKind::box && b.shape == ShapeKind::box) return boxes_overlap(a.bounds_at(t, T), b.bounds_at(t, T));
  const SceneObject& box = a.shape == ShapeKind::box ? a : b;
  const SceneObject& sph = a.shape == ShapeKind::box ? b : a;
  const Vec3 cbox = box.center_at(t, T), csph = sph.center_at(t, T);
  double d2 = 0;
  for (int k = 0; k < 3; ++k) {
    const double e = std::max(0.0, std::abs(csph[k] - cbox[k]) - box.half_extent[k]);
    d2 += e * e;
  }
  return d2 < sph.radius * sph.radius;
}

}  // namespace

void SyntheticSceneSpec::validate() const {
  try {
    bbox.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  if (frame_count == 0) throw ConfigError("synthetic spec: frame_count must be positive");
  if (width == 0 || height == 0) throw ConfigError("synthetic spec: empty image size");
  if (ring.train == 0) throw ConfigError("synthetic spec: need at least one training camera");
  if (ring.heights.empty()) throw ConfigError("synthetic spec: camera ring needs at least one height");
  if (label_resolution < 2) throw ConfigError("synthetic spec: label_resolution must be >= 2");
  if (noise < 0) throw ConfigError("synthetic spec: noise must be non-negative");
  for (const auto& o : objects)
    if (!(o.checker >= 0)) throw ConfigError("synthetic spec: checker size must be non-negative");
  for (size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    if (o.shape == ShapeKind::sphere ? !(o.radius > 0)
                                     : !(o.half_extent.x > 0 && o.half_extent.y > 0 && o.half_extent.z > 0))
      throw ConfigError("synthetic spec: object " + std::to_string(i) + " has no volume");
    for (uint32_t t = 0; t < frame_count; ++t) {
      const BBox b = o.bounds_at(t, frame_count);
      for (int a = 0; a < 3; ++a)
        if (b.lo[a] < bbox.lo[a] || b.hi[a] > bbox.hi[a])
          throw ConfigError("synthetic spec: object " + std::to_string(i) + " leaves the scene box at frame " +
                            std::to_string(t));
      for (size_t j = 0; j < i; ++j)
        if (objects_overlap(o, objects[j], t, frame_count))
          throw ConfigError("synthetic spec: objects " + std::to_string(j) + " and " + std::to_string(i) +
                            " overlap at frame " + std::to_string(t) + " (ambiguous occlusion order)");
    }
  }
}

SyntheticSceneSpec default_synthetic_spec() {
  SyntheticSceneSpec s;
  SceneObject mover;
  mover.shape = ShapeKind::box;
  mover.center = {0.0, 0.0, 0.35};
  mover.half_extent = {0.25, 0.25, 0.2};
  mover.color = {0.95, 0.35, 0.15};
  mover.motion = MotionKind::traverse;
  mover.offset = {0.9, 0.0, 0.0};
  mover.checker = 0.125;
  s.objects.push_back(mover);

  SceneObject a;
  a.shape = ShapeKind::sphere;
  a.center = {0.5, -0.5, -0.55};
  a.radius = 0.3;
  a.color = {0.2, 0.8, 0.3};
  s.objects.push_back(a);

  SceneObject b;
  b.shape = ShapeKind::box;
  b.center = {-0.5, 0.5, -0.6};
  b.half_extent = {0.25, 0.25, 0.25};
  b.color = {0.25, 0.35, 0.95};
  s.objects.push_back(b);

  SceneObject c;
  c.shape = ShapeKind::sphere;
  c.center = {0.5, 0.55, -0.6};
  c.radius = 0.25;
  c.color = {0.9, 0.85, 0.3};
  s.objects.push_back(c);
  return s;
}

namespace {

Vec3 vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("synthetic spec: expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}
json vec3_json(Vec3 v) { return json::array({v.x, v.y, v.z}); }

const char* shape_name(ShapeKind k) { return k == ShapeKind::box ? "box" : "sphere"; }
const char* motion_name(MotionKind m) {
  return m == MotionKind::fixed ? "static" : (m == MotionKind::oscillate ? "oscillate" : "traverse");
}

}  // namespace

SyntheticSceneSpec parse_synthetic_spec(const std::string& text) {
  SyntheticSceneSpec s;
  try {
    const json j = json::parse(text);
    for (auto it = j.begin(); it != j.end(); ++it) {
      static const char* known[] = {"bbox",   "frame_count", "width",      "height",          "noise",  "seed",
                                    "background", "label_resolution", "cameras", "objects"};
      if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return it.key() == k; }) ==
          std::end(known))
        throw ConfigError("synthetic spec: unknown key '" + it.key() + "'");
    }
    if (j.contains("bbox")) {
      const Vec3 lo = vec3_from(j["bbox"].at(0)), hi = vec3_from(j["bbox"].at(1));
      for (int a = 0; a < 3; ++a) {
        s.bbox.lo[a] = float(lo[a]);
        s.bbox.hi[a] = float(hi[a]);
      }
    }
    s.frame_count = j.value("frame_count", s.frame_count);
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.noise = j.value("noise", s.noise);
    s.seed = j.value("seed", s.seed);
    s.label_resolution = j.value("label_resolution", s.label_resolution);
    if (j.contains("background")) {
      const Vec3 bg = vec3_from(j["background"]);
      s.background = {bg.x, bg.y, bg.z};
    }
    if (j.contains("cameras")) {
      const json& c = j["cameras"];
      s.ring.train = c.value("train", s.ring.train);
      s.ring.eval = c.value("eval", s.ring.eval);
      s.ring.radius = c.value("radius", s.ring.radius);
      if (c.contains("heights")) s.ring.heights = c["heights"].get<std::vector<double>>();
      s.ring.eval_height = c.value("eval_height", s.ring.eval_height);
      s.ring.fov_deg = c.value("fov_deg", s.ring.fov_deg);
      if (c.contains("target")) s.ring.target = vec3_from(c["target"]);
      s.ring.near = c.value("near", s.ring.near);
      s.ring.far = c.value("far", s.ring.far);
    }
    if (j.contains("objects")) {
      for (const json& o : j["objects"]) {
        SceneObject ob;
        const std::string shape = o.at("shape").get<std::string>();
        if (shape == "box")
          ob.shape = ShapeKind::box;
        else if (shape == "sphere")
          ob.shape = ShapeKind::sphere;
        else
          throw ConfigError("synthetic spec: unknown shape '" + shape + "'");
        ob.center = vec3_from(o.at("center"));
        if (o.contains("half_extent")) ob.half_extent = vec3_from(o["half_extent"]);
        ob.radius = o.value("radius", ob.radius);
        const Vec3 col = vec3_from(o.at("color"));
        ob.color = {col.x, col.y, col.z};
        const std::string motion = o.value("motion", std::string("static"));
        if (motion == "static")
          ob.motion = MotionKind::fixed;
        else if (motion == "oscillate")
          ob.motion = MotionKind::oscillate;
        else if (motion == "traverse")
          ob.motion = MotionKind::traverse;
        else
          throw ConfigError("synthetic spec: unknown motion '" + motion + "'");
        if (o.contains("offset")) ob.offset = vec3_from(o["offset"]);
        ob.cycles = o.value("cycles", ob.cycles);
        ob.checker = o.value("checker", ob.checker);
        s.objects.push_back(ob);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string synthetic_spec_json(const SyntheticSceneSpec& s) {
  json j;
  j["bbox"] = {{s.bbox.lo[0], s.bbox.lo[1], s.bbox.lo[2]}, {s.bbox.hi[0], s.bbox.hi[1], s.bbox.hi[2]}};
  j["frame_count"] = s.frame_count;
  j["width"] = s.width;
  j["height"] = s.height;
  j["noise"] = s.noise;
  j["seed"] = s.seed;
  j["background"] = s.background;
  j["label_resolution"] = s.label_resolution;
  j["cameras"] = {{"train", s.ring.train},         {"eval", s.ring.eval},       {"radius", s.ring.radius},
                  {"heights", s.ring.heights},     {"eval_height", s.ring.eval_height},
                  {"fov_deg", s.ring.fov_deg},     {"target", vec3_json(s.ring.target)},
                  {"near", s.ring.near},           {"far", s.ring.far}};
  j["objects"] = json::array();
  for (const auto& o : s.objects) {
    json jo;
    jo["shape"] = shape_name(o.shape);
    jo["center"] = vec3_json(o.center);
    if (o.shape == ShapeKind::box)
      jo["half_extent"] = vec3_json(o.half_extent);
    else
      jo["radius"] = o.radius;
    jo["color"] = o.color;
    jo["motion"] = motion_name(o.motion);
    if (o.motion != MotionKind::fixed) {
      jo["offset"] = vec3_json(o.offset);
      jo["cycles"] = o.cycles;
    }
    if (o.checker > 0) jo["checker"] = o.checker;
    j["objects"].push_back(jo);
  }
  return j.dump(2) + "\n";
}

Rgb analytic_color(const SyntheticSceneSpec& spec, const Ray& ray, uint32_t t) {
  double best = INFINITY;
  Rgb out = spec.background;
  for (const auto& o : spec.objects)
    if (auto s = o.hit(ray, t, spec.frame_count); s && *s < best) {
      best = *s;
      out = o.shade(ray.o + ray.d * *s, t, spec.frame_count);
    }
  return out;
}

DynamicMask dynamic_labels(const SyntheticSceneSpec& spec, uint32_t n) {
  const GridDims dims = GridDims::cube(n, 0);
  DynamicMask m = empty_mask(dims, spec.bbox);
  DenseGrid probe(dims, spec.bbox);
  for (const auto& o : spec.objects) {
    if (!o.moving()) continue;
    for (uint32_t t = 0; t < spec.frame_count; ++t) {
      const BBox b = o.bounds_at(t, spec.frame_count);
      uint32_t lo[3], hi[3];
      for (int a = 0; a < 3; ++a) {
        const double scale = double(n - 1) / spec.bbox.extent(a);
        lo[a] = uint32_t(std::clamp(std::floor((b.lo[a] - spec.bbox.lo[a]) * scale), 0.0, double(n - 1)));
        hi[a] = uint32_t(std::clamp(std::ceil((b.hi[a] - spec.bbox.lo[a]) * scale), 0.0, double(n - 1)));
      }
      for (uint32_t x = lo[0]; x <= hi[0]; ++x)
        for (uint32_t y = lo[1]; y <= hi[1]; ++y)
          for (uint32_t z = lo[2]; z <= hi[2]; ++z)
            if (o.contains(probe.corner_position(x, y, z), t, spec.frame_count))
              m.bits[(size_t(x) * n + y) * n + z] = 1;
    }
  }
  return m;
}

SyntheticScene generate_synthetic(const SyntheticSceneSpec& spec, int threads) {
  spec.validate();
  SyntheticScene out;
  out.spec = spec;
  MultiViewVideoDataset& ds = out.dataset;
  ds.bbox = spec.bbox;
  ds.frame_count = spec.frame_count;
  const CameraRing& r = spec.ring;
  const Vec3 up{0, 0, 1};
  for (uint32_t k = 0; k < r.train; ++k) {
    const double th = 2.0 * M_PI * k / r.train;
    const Vec3 eye = r.target + Vec3{r.radius * std::cos(th), r.radius * std::sin(th), r.heights[k % r.heights.size()]};
    ds.cameras.push_back(
        look_at("train_" + std::to_string(k), eye, r.target, up, r.fov_deg, spec.width, spec.height, r.near, r.far));
  }
  for (uint32_t k = 0; k < r.eval; ++k) {
    const double th = 2.0 * M_PI * (k + 0.5) / std::max(r.eval, 1u) + M_PI / r.train;
    const Vec3 eye = r.target + Vec3{r.radius * std::cos(th), r.radius * std::sin(th), r.eval_height};
    CameraSpec c = look_at("eval_" + std::to_string(k), eye, r.target, up, r.fov_deg, spec.width, spec.height, r.near,
                           r.far);
    c.eval = true;
    ds.cameras.push_back(c);
  }
  const size_t ncam = ds.cameras.size();
  ds.frames.assign(ncam, std::vector<Image>(spec.frame_count));
  parallel_for(ncam * spec.frame_count, threads, [&](size_t, size_t b, size_t e) {
    for (size_t job = b; job < e; ++job) {
      const size_t c = job / spec.frame_count;
      const uint32_t t = uint32_t(job % spec.frame_count);
      const CameraSpec& cam = ds.cameras[c];
      Image img(cam.width, cam.height);
      Rng rng = make_rng(spec.seed, job);
      for (uint32_t py = 0; py < cam.height; ++py)
        for (uint32_t px = 0; px < cam.width; ++px) {
          Rgb col = analytic_color(spec, generate_ray(cam, px, py), t);
          if (spec.noise > 0)
            for (auto& v : col) v = std::clamp(v + normal(rng, 0.0, spec.noise), 0.0, 1.0);
          img.set(size_t(py) * cam.width + px, col);
        }
      quantize_8bit(img);
      ds.frames[c][t] = std::move(img);
    }
  });
  if (spec.frame_count >= 2)
    compute_variance_maps(ds, threads);
  else
    ds.variance.assign(ncam, VarianceMap{});
  out.labels = dynamic_labels(spec, spec.label_resolution);
  return out;
}

}  // namespace mixvox
