#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "fixtures.hpp"
#include "mixvox/binary_io.hpp"
#include "mixvox/image_io.hpp"
#include "mixvox/synthetic.hpp"

using namespace mixvox;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mixvox_io_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<uint8_t> slurp(const fs::path& p) { return read_file_bytes(p.string()); }

}  // namespace

TEST_SUITE("scene-io") {
  TEST_CASE("minimal two-frame dataset round trip") {
    SyntheticSceneSpec spec = fixture::tiny_spec();
    spec.frame_count = 2;
    const SyntheticScene s = generate_synthetic(spec);
    const fs::path root = scratch("minimal");
    save_dataset(s.dataset, root.string());
    CHECK(fs::exists(root / "poses.json"));
    const MultiViewVideoDataset back = load_dataset(root.string());
    CHECK(back.frame_count == 2);
    CHECK(back.bbox == s.dataset.bbox);
    REQUIRE(back.cameras.size() == s.dataset.cameras.size());
    for (size_t c = 0; c < back.cameras.size(); ++c) {
      CHECK(back.cameras[c].name == s.dataset.cameras[c].name);
      CHECK(back.cameras[c].eval == s.dataset.cameras[c].eval);
      for (uint32_t t = 0; t < 2; ++t) CHECK(back.frames[c][t] == s.dataset.frames[c][t]);
    }
    CHECK(back.variance == s.dataset.variance);
  }

  TEST_CASE("saving a loaded dataset reproduces the files byte for byte") {
    const SyntheticScene s = fixture::tiny_scene();
    const fs::path a = scratch("save_a"), b = scratch("save_b");
    save_dataset(s.dataset, a.string());
    save_dataset(load_dataset(a.string(), false), b.string());
    CHECK(slurp(a / "poses.json") == slurp(b / "poses.json"));
    for (const CameraSpec& cam : s.dataset.cameras)
      for (uint32_t t = 0; t < s.dataset.frame_count; ++t)
        CHECK(slurp(frame_path(a.string(), cam.name, t)) == slurp(frame_path(b.string(), cam.name, t)));
  }

  TEST_CASE("a corrupt frame names its camera and frame") {
    const SyntheticScene s = fixture::tiny_scene();
    const fs::path root = scratch("corrupt");
    save_dataset(s.dataset, root.string());
    const std::string& cam = s.dataset.cameras[1].name;
    {
      std::ofstream f(frame_path(root.string(), cam, 3), std::ios::binary | std::ios::trunc);
      f << "not a png";
    }
    try {
      load_dataset(root.string());
      FAIL("expected a load error");
    } catch (const LoadError& e) {
      const std::string msg = e.what();
      CHECK(msg.find(cam) != std::string::npos);
      CHECK(msg.find("frame 3") != std::string::npos);
    }
    fs::remove(frame_path(root.string(), cam, 4));
    CHECK_THROWS_AS(load_dataset(root.string()), LoadError);
  }

  TEST_CASE("missing or malformed poses") {
    const fs::path root = scratch("poses");
    CHECK_THROWS_AS(load_dataset(root.string()), LoadError);
    {
      std::ofstream f(root / "poses.json");
      f << "{\"frame_count\": 3, \"cameras\": [";
    }
    CHECK_THROWS_AS(load_dataset(root.string()), LoadError);
    CHECK_THROWS_AS(parse_camera_json("{\"name\": \"x\"}"), LoadError);
  }

  TEST_CASE("variance cache is written once and read back bit-exactly") {
    const SyntheticScene s = fixture::tiny_scene();
    const fs::path root = scratch("cache");
    save_dataset(s.dataset, root.string());
    const MultiViewVideoDataset first = load_dataset(root.string());
    const uint32_t cam = first.train_cameras()[0];
    const fs::path cache = variance_cache_path(root.string(), first.cameras[cam].name);
    REQUIRE(fs::exists(cache));
    CHECK(slurp(cache) == encode_variance_map(first.variance[cam]));
    const MultiViewVideoDataset second = load_dataset(root.string());
    CHECK(second.variance == first.variance);
    CHECK(decode_variance_map(slurp(cache)) == first.variance[cam]);

    // A stale cache of the wrong shape is ignored.
    VarianceMap bogus{3, 3, std::vector<float>(9, 0.5f)};
    write_variance_map(cache.string(), bogus);
    CHECK(load_dataset(root.string(), false).variance == first.variance);
    CHECK_THROWS_AS(decode_variance_map(std::vector<uint8_t>{1, 2, 3}), LoadError);
  }

  TEST_CASE("ray batches") {
    const SyntheticScene s = fixture::tiny_scene();
    const auto& ds = s.dataset;
    Rng a = make_rng(7), b = make_rng(7);
    const RayBatch one = sample_ray_batch(ds, 1, a, 0.0, 0.05);
    CHECK(one.size() == 1);
    a = make_rng(7);
    const RayBatch x = sample_ray_batch(ds, 300, a, 0.3, 0.05), y = sample_ray_batch(ds, 300, b, 0.3, 0.05);
    CHECK(x.pixel == y.pixel);
    CHECK(x.camera == y.camera);
    size_t dyn = 0;
    for (size_t i = 0; i < x.size(); ++i) {
      CHECK_FALSE(ds.cameras[x.camera[i]].eval);
      CHECK(x.dynamic[i] == uint8_t(ds.variance[x.camera[i]].dynamic(x.pixel[i], 0.05)));
      dyn += x.dynamic[i];
      const auto gt = x.ground_truth(ds, i);
      CHECK(gt.size() == ds.frame_count);
      CHECK(gt[2] == ds.color(x.camera[i], 2, x.pixel[i]));
    }
    CHECK(dyn >= 90);
    Rng c = make_rng(7);
    CHECK_THROWS_AS(sample_ray_batch(ds, 0, c, 0.0, 0.05), DomainError);
  }

  TEST_CASE("pixel variance maps flag the moving object") {
    const SyntheticScene s = fixture::tiny_scene();
    size_t flagged = 0;
    for (uint32_t c : s.dataset.train_cameras())
      for (uint8_t m : s.dataset.variance[c].binarize(0.05)) flagged += m;
    CHECK(flagged > 0);
    for (uint32_t c : s.dataset.eval_cameras()) CHECK(s.dataset.variance[c].stddev.empty());
  }

  TEST_CASE("synthetic generation is deterministic") {
    const SyntheticScene a = fixture::tiny_scene(), b = fixture::tiny_scene();
    CHECK(a.dataset.frames == b.dataset.frames);
    CHECK(a.labels == b.labels);
    SyntheticSceneSpec noisy = fixture::tiny_spec();
    noisy.noise = 0.02;
    noisy.seed = 4;
    CHECK(generate_synthetic(noisy).dataset.frames == generate_synthetic(noisy).dataset.frames);
  }

  TEST_CASE("a motionless scene has no dynamic labels and zero variance") {
    SyntheticSceneSpec spec = fixture::tiny_spec();
    for (auto& o : spec.objects) o.motion = MotionKind::fixed;
    const SyntheticScene s = generate_synthetic(spec);
    CHECK(s.labels.count() == 0);
    for (uint32_t c : s.dataset.train_cameras())
      for (float v : s.dataset.variance[c].stddev) CHECK(v == 0.f);
  }

  TEST_CASE("a traversing box labels both ends of its path") {
    SyntheticSceneSpec spec = fixture::tiny_spec();
    spec.objects.clear();
    SceneObject o;
    o.center = {0, 0, 0};
    o.half_extent = {0.1, 0.1, 0.1};
    o.motion = MotionKind::traverse;
    o.offset = {1.0, 0, 0};
    spec.objects.push_back(o);
    const DynamicMask m = dynamic_labels(spec, 21);
    CHECK(m.at({-0.5, 0, 0}));
    CHECK(m.at({0.5, 0, 0}));
    CHECK(m.at({0, 0, 0}));
    CHECK_FALSE(m.at({0, 0.5, 0}));
    CHECK_FALSE(m.at({0.9, 0, 0}));
    CHECK(o.center_at(0, spec.frame_count) == Vec3{-0.5, 0, 0});
    CHECK(o.center_at(spec.frame_count - 1, spec.frame_count) == Vec3{0.5, 0, 0});
  }

  TEST_CASE("objects leaving the box are rejected") {
    SyntheticSceneSpec spec = fixture::tiny_spec();
    spec.objects[0].offset = {5, 0, 0};
    spec.objects[0].motion = MotionKind::traverse;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
  }

  TEST_CASE("analytic colors agree with the rendered frames") {
    const SyntheticScene s = fixture::tiny_scene();
    const CameraSpec& cam = s.dataset.cameras[0];
    for (uint32_t t : {0u, 5u})
      for (uint32_t px : {0u, 30u, 77u, 143u}) {
        const Rgb c = analytic_color(s.spec, generate_ray(cam, px % cam.width, px / cam.width), t);
        for (int k = 0; k < 3; ++k) CHECK(std::abs(c[k] - s.dataset.color(0, t, px)[k]) <= 0.5 / 255 + 1e-6);
      }
  }

  TEST_CASE("projection inverts ray generation") {
    const SyntheticScene s = fixture::tiny_scene();
    for (const CameraSpec& cam : s.dataset.cameras)
      for (uint32_t px : {0u, 5u, 100u}) {
        const uint32_t x = px % cam.width, y = px / cam.width;
        const Ray r = generate_ray(cam, x, y);
        const auto uv = project(cam, r.o + r.d * 2.5);
        REQUIRE(uv.has_value());
        CHECK((*uv)[0] == doctest::Approx(x + 0.5));
        CHECK((*uv)[1] == doctest::Approx(y + 0.5));
      }
  }

  TEST_CASE("synthetic specs survive a json round trip") {
    const SyntheticSceneSpec a = fixture::tiny_spec();
    const std::string j = synthetic_spec_json(a);
    CHECK(synthetic_spec_json(parse_synthetic_spec(j)) == j);
    CHECK_THROWS_AS(parse_synthetic_spec("{"), ConfigError);
  }
}
