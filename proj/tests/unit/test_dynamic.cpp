#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "mixvox/dynamic_field.hpp"
#include "oracles.hpp"

using namespace mixvox;

namespace {

DynamicField small_field(uint64_t seed, uint32_t T = 7, GridKind kind = GridKind::dense) {
  DynamicFieldConfig cfg;
  cfg.kind = kind;
  cfg.density_channels = 5;
  cfg.color_channels = 4;
  cfg.rank = 3;
  cfg.hidden = 6;
  cfg.latent_std = 0.5;
  Rng rng = make_rng(seed);
  return DynamicField(cfg, 4, BBox{}, T, rng);
}

double dot_row(const Param& latents, uint32_t t, const std::vector<double>& f) {
  double s = 0;
  for (size_t j = 0; j < f.size(); ++j) s += double(latents.value[t * f.size() + j]) * f[j];
  return s;
}

}  // namespace

TEST_SUITE("dynamic-branch") {
  TEST_CASE("time query sets are strictly increasing and in range") {
    CHECK_NOTHROW(TimeQuerySet({0, 3, 5}, 6));
    CHECK_THROWS_AS(TimeQuerySet({0, 3, 3}, 6), DomainError);
    CHECK_THROWS_AS(TimeQuerySet({4, 2}, 6), DomainError);
    CHECK_THROWS_AS(TimeQuerySet({6}, 6), DomainError);
    Rng rng = make_rng(1);
    const TimeQuerySet r = TimeQuerySet::random(5, 9, rng);
    CHECK(r.size() == 5);
    for (size_t i = 1; i < r.size(); ++i) CHECK(r[i] > r[i - 1]);
  }

  TEST_CASE("equal latent rows give a time-constant density") {
    DynamicField f = small_field(2);
    const uint32_t H = f.hidden();
    for (uint32_t t = 1; t < f.frame_count(); ++t)
      for (uint32_t j = 0; j < H; ++j) f.latent_sigma.value[t * H + j] = f.latent_sigma.value[j];
    const auto s = f.density({0.2, -0.3, 0.1}, TimeQuerySet::all(f.frame_count()));
    for (double v : s) CHECK(v == s[0]);
  }

  TEST_CASE("a zero latent row falls back to the shifted baseline") {
    DynamicField f = small_field(3);
    const uint32_t H = f.hidden();
    for (uint32_t j = 0; j < H; ++j) f.latent_sigma.value[2 * H + j] = 0.f;
    const auto inner = f.density_inner({0.5, 0.5, 0.5}, TimeQuerySet::single(2, f.frame_count()));
    CHECK(inner[0] == 0.0);
    const auto s = f.density({0.5, 0.5, 0.5}, TimeQuerySet::single(2, f.frame_count()));
    CHECK(s[0] == doctest::Approx(std::log1p(std::exp(-1.0))));
  }

  TEST_CASE("inner products match naive dot products") {
    DynamicField f = small_field(4);
    const Vec3 p{-0.3, 0.8, 0.05};
    const auto feat = oracle::mlp_forward(f.density_dec, trilinear_sample(f.density_feat, p));
    REQUIRE(feat.size() == f.hidden());
    const TimeQuerySet times({1, 4, 6}, f.frame_count());
    const auto inner = f.density_inner(p, times);
    for (size_t q = 0; q < times.size(); ++q)
      CHECK(inner[q] == doctest::Approx(dot_row(f.latent_sigma, times[q], feat)).epsilon(1e-9));
  }

  TEST_CASE("color blocks match naive dot products per channel") {
    DynamicField f = small_field(5);
    const Vec3 p{0.4, -0.1, -0.7}, d = normalized({0.3, -1, 0.2});
    std::vector<double> in = trilinear_sample(f.color_feat, p);
    const auto enc = f.encoding(d);
    in.insert(in.end(), enc.begin(), enc.end());
    const auto dec = oracle::mlp_forward(f.color_dec, in);
    const uint32_t H = f.hidden();
    REQUIRE(dec.size() == 3 * H);
    const TimeQuerySet times({0, 5}, f.frame_count());
    const auto rgb = f.color(p, d, times);
    for (size_t q = 0; q < times.size(); ++q)
      for (int c = 0; c < 3; ++c) {
        double s = 0;
        for (uint32_t j = 0; j < H; ++j) s += double(f.latent_color.value[times[q] * H + j]) * dec[c * H + j];
        CHECK(rgb[q][size_t(c)] == doctest::Approx(oracle::logistic(s)).epsilon(1e-9));
      }
    CHECK(rgb[0] != rgb[1]);
  }

  TEST_CASE("zero color latents give mid grey at every time") {
    DynamicField f = small_field(6);
    for (auto& v : f.latent_color.value) v = 0.f;
    for (const Rgb& c : f.color({0, 0, 0}, {0, 1, 0}, TimeQuerySet::all(f.frame_count())))
      for (double v : c) CHECK(v == 0.5);
  }

  TEST_CASE("the raw density is linear in the latent") {
    DynamicField f = small_field(7);
    const Vec3 p{0.1, 0.2, 0.3};
    const TimeQuerySet one = TimeQuerySet::single(3, f.frame_count());
    const double base = f.density_inner(p, one)[0];
    const uint32_t H = f.hidden();
    for (uint32_t j = 0; j < H; ++j) f.latent_sigma.value[3 * H + j] *= 2.5f;
    CHECK(f.density_inner(p, one)[0] == doctest::Approx(2.5 * base).epsilon(1e-6));
  }

  TEST_CASE("one decompressor pass per point regardless of Q") {
    DynamicField f = small_field(8, 300);
    f.reset_call_counters();
    DynamicField::DensityCache dc;
    DynamicField::ColorCache cc;
    const TimeQuerySet all = TimeQuerySet::all(300);
    std::vector<double> sigma(300);
    std::vector<Rgb> rgb(300);
    f.density_forward({0.1, 0.1, 0.1}, all, dc, sigma);
    CHECK(f.density_dec.calls().value() == 1);
    f.color_forward({0.1, 0.1, 0.1}, f.encoding({0, 0, 1}), all, cc, rgb);
    CHECK(f.color_dec.calls().value() == 1);
    CHECK(f.decompressor_calls() == 2);
  }

  TEST_CASE("empty and out-of-range queries") {
    DynamicField f = small_field(9);
    CHECK(f.density({0, 0, 0}, TimeQuerySet({}, f.frame_count())).empty());
    CHECK_THROWS_AS(f.density({0, 0, 0}, TimeQuerySet({0, 8}, 9)), DomainError);
  }

  TEST_CASE("flop arithmetic") {
    const FlopsReport r = flops_from_counts(1e5, 1e3, 1e5, 300);
    CHECK(r.inner_total == doctest::Approx(4e5));
    CHECK(r.concat_total >= 3e7);
    CHECK(r.ratio >= 75.0);
    // Q = 1: both designs pay one decompressor pass.
    CHECK(flops_from_counts(1e5, 1e3, 1e5, 1).ratio == doctest::Approx(1e5 / 1.01e5));
    const DynamicField f = small_field(10);
    double prev = 0;
    for (uint32_t q : {1u, 2u, 8u, 32u, 300u}) {
      const FlopsReport x = flops_report(f, 300, q);
      CHECK(x.ratio > prev);
      if (q >= 2) CHECK(x.inner_total < x.concat_total);
      prev = x.ratio;
    }
  }

  TEST_CASE("gradients against finite differences") { CHECK(gradcheck::check_inner_products(10, 31).ok(10)); }
}
