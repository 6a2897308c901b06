#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "mixvox/render.hpp"
#include "oracles.hpp"

using namespace mixvox;

namespace {

void randomize(Grid& g, Rng& rng, double mean, double std) {
  std::vector<Param*> ps;
  g.collect(ps);
  for (Param* p : ps)
    for (auto& v : p->value) v = float(normal(rng, mean, std));
}

Model tiny_model(uint64_t seed, uint32_t res = 8, uint32_t T = 5) {
  ModelConfig cfg;
  cfg.static_field.density_kind = cfg.static_field.color_kind = GridKind::dense;
  cfg.static_field.color_channels = 4;
  cfg.static_field.net_hidden = 8;
  cfg.dynamic_field.kind = GridKind::dense;
  cfg.dynamic_field.density_channels = 3;
  cfg.dynamic_field.color_channels = 3;
  cfg.dynamic_field.hidden = 6;
  cfg.dynamic_field.latent_std = 0.8;
  Rng rng = make_rng(seed);
  Model m(cfg, BBox{}, res, T, rng);
  randomize(m.stat.density_grid, rng, 0.5, 1.5);
  randomize(m.stat.color_grid, rng, 0.0, 1.0);
  randomize(m.dyn.density_feat, rng, 0.0, 1.0);
  randomize(m.dyn.color_feat, rng, 0.0, 1.0);
  return m;
}

Ray axis_ray(double y, double z) {
  Ray r;
  r.o = {-3, y, z};
  r.d = {1, 0, 0};
  r.near = 0.1;
  r.far = 6;
  return r;
}

RenderSettings exact() {
  RenderSettings rs;
  rs.step_scale = 0.7;
  rs.prune_alpha = 0.0;
  return rs;
}

void random_mask(Model& m, Rng& rng, uint32_t kernel) {
  m.mask = empty_mask(GridDims::cube(m.resolution), m.bbox);
  m.mask.kernel = kernel;
  for (auto& b : m.mask.bits) b = uint8_t(rng() % 3 == 0);
}

}  // namespace

TEST_SUITE("renderer") {
  TEST_CASE("two-sample worked example") {
    const std::vector<double> sigma{1.0, 2.0}, delta{0.5, 0.5}, s{0.25, 0.75};
    const std::vector<Rgb> c{{1, 0, 0}, {0, 1, 0}};
    const CompositeResult r = composite(sigma, c, delta, s, {0, 0, 0});
    CHECK(r.color[0] == doctest::Approx(0.39347).epsilon(1e-4));
    CHECK(r.color[1] == doctest::Approx(0.38340).epsilon(1e-4));
    CHECK(r.color[2] == 0.0);
    const auto o = oracle::composite(sigma, c, delta, s, {0, 0, 0});
    for (int k = 0; k < 3; ++k) CHECK(std::abs(r.color[k] - o.color[k]) < 1e-12);
  }

  TEST_CASE("empty density shows the background") {
    const std::vector<double> sigma{0.0}, delta{0.3};
    const std::vector<Rgb> c{{1, 1, 1}};
    const CompositeResult r = composite(sigma, c, delta, {}, {0.2, 0.4, 0.6});
    CHECK(r.opacity == 0.0);
    CHECK(r.color == Rgb{0.2, 0.4, 0.6});
  }

  TEST_CASE("an opaque first sample hides the rest") {
    const std::vector<double> sigma{50.0, 3.0}, delta{0.5, 0.5};
    const std::vector<Rgb> c{{0.1, 0.7, 0.3}, {1, 0, 1}};
    const CompositeResult r = composite(sigma, c, delta, {}, {1, 1, 1});
    for (int k = 0; k < 3; ++k) CHECK(std::abs(r.color[k] - c[0][k]) < 1e-8);
  }

  TEST_CASE("composite matches the brute-force oracle on random sequences") {
    Rng rng = make_rng(11);
    for (int k = 0; k < 200; ++k) {
      const size_t n = 1 + rng() % 40;
      std::vector<double> sigma(n), delta(n), s(n);
      std::vector<Rgb> c(n);
      double pos = 0;
      for (size_t i = 0; i < n; ++i) {
        sigma[i] = uniform01(rng) < 0.3 ? 0.0 : -std::log(uniform01(rng) + 1e-12) * 3;
        delta[i] = 0.01 + uniform01(rng) * 0.3;
        pos += delta[i];
        s[i] = pos;
        c[i] = {uniform01(rng), uniform01(rng), uniform01(rng)};
      }
      const Rgb bg{uniform01(rng), uniform01(rng), uniform01(rng)};
      const CompositeResult r = composite(sigma, c, delta, s, bg);
      const auto o = oracle::composite(sigma, c, delta, s, bg);
      for (int ch = 0; ch < 3; ++ch) {
        CHECK(std::abs(r.color[ch] - o.color[ch]) < 1e-6);
        CHECK(r.color[ch] >= -1e-12);
        CHECK(r.color[ch] <= 1 + 1e-12);
      }
      CHECK(std::abs(r.opacity - o.opacity) < 1e-6);
      CHECK(r.opacity >= 0.0);
      CHECK(r.opacity <= 1.0);
      if (o.opacity > 1e-6) CHECK(std::abs(r.depth - o.depth) < 1e-6 * std::max(1.0, o.depth));
    }
  }

  TEST_CASE("transmittance telescopes") {
    // Opacity after i samples must equal 1 - prod exp(-sigma_j delta_j).
    Rng rng = make_rng(12);
    std::vector<double> sigma, delta;
    std::vector<Rgb> c;
    double trans = 1.0;
    for (int i = 0; i < 30; ++i) {
      sigma.push_back(uniform01(rng) * 4);
      delta.push_back(0.05 + uniform01(rng) * 0.1);
      c.push_back({0, 0, 0});
      trans *= std::exp(-sigma.back() * delta.back());
      const CompositeResult r = composite(sigma, c, delta, {}, {1, 1, 1});
      CHECK(std::abs(r.color[0] - trans) < 1e-7);
      CHECK(std::abs(r.opacity - (1 - trans)) < 1e-7);
    }
  }

  TEST_CASE("gradients against finite differences") { CHECK(gradcheck::check_compositing(10, 51).ok(10)); }

  TEST_CASE("midpoint sampling and sample count") {
    Ray r = axis_ray(0, 0);
    r.near = 1.0;
    r.far = 3.0;
    const double vw = 2.0 / 63.0;  // 64^3 over [-1,1]^3
    const size_t n = sample_count(1.0, 3.0, 4.0, vw);
    CHECK(n == size_t(std::ceil(2.0 / (4.0 * vw))));
    const BBox wide{{-10, -10, -10}, {10, 10, 10}};
    const RaySamples s = sample_ray(r, 4.0, vw, wide);
    REQUIRE(s.size() == n);
    for (size_t k = 0; k < n; ++k) CHECK(s.s[k] == doctest::Approx(1.0 + (k + 0.5) * 2.0 / double(n)));
    CHECK_THROWS_AS(sample_count(2.0, 2.0, 4.0, vw), DomainError);

    Rng rng = make_rng(13);
    const RaySamples j = sample_ray(r, 4.0, vw, wide, &rng);
    for (size_t k = 0; k < j.size(); ++k) {
      CHECK(j.s[k] >= 1.0);
      CHECK(j.s[k] <= 3.0);
      if (k) CHECK(j.s[k] > j.s[k - 1]);
    }
  }

  TEST_CASE("pinhole rays") {
    const CameraSpec cam = look_at("c", {0, 0, -4}, {0, 0, 0}, {0, -1, 0}, 60.0, 8, 6, 0.1, 10);
    // Pixel centre at the principal point looks straight ahead.
    CameraSpec centred = cam;
    centred.cx = 3.5;
    centred.cy = 2.5;
    const Ray r = generate_ray(centred, 3, 2);
    CHECK(r.d.z == doctest::Approx(1.0));
    CHECK(r.o == Vec3{0, 0, -4});
    const Ray e = generate_ray(cam, 7, 5);
    const auto px = project(cam, e.o + e.d * 3.0);
    REQUIRE(px.has_value());
    CHECK((*px)[0] == doctest::Approx(7.5));
    CHECK((*px)[1] == doctest::Approx(5.5));
  }

  TEST_CASE("an empty mask renders the static branch at every time") {
    Model m = tiny_model(1);
    const TimeQuerySet all = TimeQuerySet::all(m.frame_count);
    RenderSettings rs = exact();
    RenderSettings st = rs;
    st.mode = RenderMode::pure_static;
    for (double y : {-0.6, 0.0, 0.45}) {
      const Ray r = axis_ray(y, 0.2);
      const RayRender mix = render_ray(m, r, all, rs);
      const RayRender ref = render_ray(m, r, all, st);
      CHECK(mix.dynamic_samples == 0);
      for (size_t q = 0; q < all.size(); ++q)
        for (int k = 0; k < 3; ++k) {
          CHECK(mix.color[q][k] == mix.color[0][k]);
          CHECK(std::abs(mix.color[q][k] - ref.color[q][k]) < 1e-6);
        }
    }
  }

  TEST_CASE("a full mask renders like the full-dynamic model") {
    Model m = tiny_model(2);
    m.mask = full_mask(GridDims::cube(m.resolution), m.bbox);
    const TimeQuerySet all = TimeQuerySet::all(m.frame_count);
    RenderSettings dyn = exact();
    dyn.mode = RenderMode::full_dynamic;
    for (double z : {-0.3, 0.5}) {
      const Ray r = axis_ray(0.1, z);
      const RayRender a = render_ray(m, r, all, exact());
      const RayRender b = render_ray(m, r, all, dyn);
      CHECK(a.dynamic_samples == a.samples);
      for (size_t q = 0; q < all.size(); ++q)
        for (int k = 0; k < 3; ++k) CHECK(std::abs(a.color[q][k] - b.color[q][k]) < 1e-6);
    }
  }

  TEST_CASE("merged rendering matches the per-time reference") {
    Rng rng = make_rng(3);
    for (int trial = 0; trial < 6; ++trial) {
      Model m = tiny_model(10 + trial);
      random_mask(m, rng, trial % 2 ? 3 : 1);
      const TimeQuerySet times({0, 2, 4}, m.frame_count);
      for (int k = 0; k < 5; ++k) {
        Ray r;
        r.o = {2 * uniform01(rng) - 1, 2 * uniform01(rng) - 1, -3};
        r.d = normalized({0.3 * (uniform01(rng) - 0.5), 0.3 * (uniform01(rng) - 0.5), 1});
        r.near = 0.5;
        r.far = 6;
        const RayRender a = render_ray(m, r, times, exact());
        const RayRender b = render_ray_reference(m, r, times, exact());
        CHECK(a.dynamic_samples == b.dynamic_samples);
        for (size_t q = 0; q < times.size(); ++q) {
          for (int ch = 0; ch < 3; ++ch) CHECK(std::abs(a.color[q][ch] - b.color[q][ch]) < 1e-6);
          CHECK(std::abs(a.opacity[q] - b.opacity[q]) < 1e-6);
        }
      }
    }
  }

  TEST_CASE("a 2x2 frame equals four ray renders") {
    Model m = tiny_model(4);
    Rng rng = make_rng(4);
    random_mask(m, rng, 3);
    const CameraSpec cam = look_at("c", {0.2, 0.3, -3.5}, {0, 0, 0}, {0, -1, 0}, 30.0, 2, 2, 0.1, 10);
    const RenderSettings rs;
    const RenderedFrame f = render_frame(m, cam, 3, rs, 2);
    for (uint32_t y = 0; y < 2; ++y)
      for (uint32_t x = 0; x < 2; ++x) {
        const RayRender r = render_ray(m, generate_ray(cam, x, y), TimeQuerySet::single(3, m.frame_count), rs);
        for (int k = 0; k < 3; ++k) CHECK(f.rgb.pixel(y * 2 + x)[k] == float(std::clamp(r.color[0][k], 0.0, 1.0)));
        CHECK(f.depth[y * 2 + x] == float(r.depth[0]));
      }
  }

  TEST_CASE("pruning only skips near-transparent samples") {
    Model m = tiny_model(5);
    RenderSettings pruned = exact();
    pruned.prune_alpha = 1e-4;
    Rng rng = make_rng(5);
    size_t skipped = 0;
    for (int k = 0; k < 20; ++k) {
      const Ray r = axis_ray(2 * uniform01(rng) - 1, 2 * uniform01(rng) - 1);
      const RayRender a = render_ray(m, r, TimeQuerySet::single(0, m.frame_count), exact());
      const RayRender b = render_ray(m, r, TimeQuerySet::single(0, m.frame_count), pruned);
      skipped += a.colored_samples - b.colored_samples;
      // Each skipped sample carries weight below 1e-4.
      for (int ch = 0; ch < 3; ++ch) CHECK(std::abs(a.color[0][ch] - b.color[0][ch]) < 1e-4 * double(a.samples));
    }
    // Random densities include near-empty regions.
    randomize(m.stat.density_grid, rng, -30, 0.1);
    const RayRender e = render_ray(m, axis_ray(0, 0), TimeQuerySet::single(0, m.frame_count), pruned);
    CHECK(e.colored_samples == 0);
    (void)skipped;
  }

  TEST_CASE("depth of an opaque plane") {
    Model m = tiny_model(6, 33);
    // Empty for x < 0.25, opaque beyond.
    DenseGrid& g = m.stat.density_grid.dense();
    for (uint32_t x = 0; x < 33; ++x)
      for (uint32_t y = 0; y < 33; ++y)
        for (uint32_t z = 0; z < 33; ++z) g.at(0, x, y, z) = g.corner_position(x, y, z).x >= 0.25 ? 60.f : -30.f;
    RenderSettings rs;
    rs.step_scale = 0.5;
    const Ray r = axis_ray(0.1, -0.2);
    const RayRender out = render_ray(m, r, TimeQuerySet::single(0, m.frame_count), rs);
    const double step = rs.step_scale * m.voxel_width();
    CHECK(out.opacity[0] > 0.999);
    CHECK(std::abs(out.depth[0] - 3.25) <= m.voxel_width() + step);
  }

  TEST_CASE("dynamic point fraction follows the mask") {
    Model m = tiny_model(7);
    std::vector<Ray> rays{axis_ray(0, 0), axis_ray(0.5, 0.5)};
    CHECK(dynamic_point_fraction(m, rays, RenderSettings{}) == 0.0);
    m.mask = full_mask(GridDims::cube(m.resolution), m.bbox);
    CHECK(dynamic_point_fraction(m, rays, RenderSettings{}) == 1.0);
  }

  TEST_CASE("render modes parse") {
    CHECK(parse_render_mode("static") == RenderMode::pure_static);
    CHECK(to_string(parse_render_mode("dynamic")) == "dynamic");
    CHECK_THROWS_AS(parse_render_mode("foo"), ConfigError);
  }
}
