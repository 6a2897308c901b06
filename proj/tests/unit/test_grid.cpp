#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "mixvox/binary_io.hpp"
#include "mixvox/grid.hpp"
#include "oracles.hpp"

using namespace mixvox;

namespace {

DenseGrid random_dense(GridDims dims, uint64_t seed, BBox box = {}) {
  DenseGrid g(dims, box);
  Rng rng = make_rng(seed);
  for (auto& v : g.values().value) v = float(normal(rng, 0, 1));
  return g;
}

FactorizedGrid random_factorized(GridDims dims, uint32_t rank, uint64_t seed, BBox box = {}) {
  FactorizedGrid g(dims, box, rank);
  Rng rng = make_rng(seed);
  g.init_random(rng, 0.8, 0.8);
  return g;
}

double sample1(const Grid& g, Vec3 p) { return trilinear_sample(g, p)[0]; }

}  // namespace

TEST_SUITE("grid-core") {
  TEST_CASE("dims reject lattices without a full cell") {
    CHECK_THROWS_AS(DenseGrid(GridDims{1, 4, 4, 0}, BBox{}), DomainError);
    CHECK_NOTHROW(DenseGrid(GridDims{2, 2, 2, 0}, BBox{}));
  }

  TEST_CASE("sample at a corner returns the stored value") {
    const DenseGrid g = random_dense({4, 3, 5, 2}, 1);
    for (uint32_t x : {0u, 2u, 3u})
      for (uint32_t z : {0u, 4u}) {
        const auto v = trilinear_sample(Grid(g), g.corner_position(x, 1, z));
        CHECK(v[0] == doctest::Approx(g.at(0, x, 1, z)).epsilon(1e-12));
        CHECK(v[1] == doctest::Approx(g.at(1, x, 1, z)).epsilon(1e-12));
      }
  }

  TEST_CASE("sample at a cell centre is the mean of its corners") {
    const DenseGrid g = random_dense({3, 3, 3, 0}, 2);
    const Vec3 a = g.corner_position(1, 0, 1), b = g.corner_position(2, 1, 2);
    double mean = 0;
    for (int k = 0; k < 8; ++k) mean += g.at(0, 1 + (k >> 2 & 1), (k >> 1) & 1, 1 + (k & 1)) / 8.0;
    CHECK(sample1(Grid(g), (a + b) * 0.5) == doctest::Approx(mean).epsilon(1e-12));
  }

  TEST_CASE("one cell with corners 0..7 against the 8-term formula") {
    DenseGrid g({2, 2, 2, 0}, BBox{{0, 0, 0}, {1, 1, 1}});
    std::array<double, 8> c{};
    for (int k = 0; k < 8; ++k) {
      g.at(0, k >> 2 & 1, k >> 1 & 1, k & 1) = float(k);
      c[size_t(k)] = k;
    }
    const double expect = oracle::trilinear8(c, 0.25, 0.5, 0.75);
    CHECK(sample1(Grid(g), {0.25, 0.5, 0.75}) == doctest::Approx(expect).epsilon(1e-12));
    // By hand: x contributes 4 * 0.25, y 2 * 0.5, z 1 * 0.75.
    CHECK(expect == doctest::Approx(2.75));
  }

  TEST_CASE("out-of-box points are rejected") {
    const Grid g(random_dense({3, 3, 3, 0}, 3));
    CHECK_THROWS_AS(trilinear_sample(g, {1.01, 0, 0}), DomainError);
    CHECK_THROWS_AS(trilinear_sample(g, {0, -1.5, 0}), DomainError);
  }

  TEST_CASE("interpolation weights form a partition of unity") {
    const GridDims dims{5, 4, 6, 0};
    Rng rng = make_rng(4);
    for (int i = 0; i < 500; ++i) {
      const Vec3 p{2 * uniform01(rng) - 1, 2 * uniform01(rng) - 1, 2 * uniform01(rng) - 1};
      const auto w = corner_weights(locate(dims, BBox{}, p));
      double s = 0;
      for (double x : w) {
        CHECK(x >= 0.0);
        s += x;
      }
      CHECK(std::abs(s - 1.0) < 1e-7);
    }
  }

  TEST_CASE("sampling is continuous across cell faces") {
    const Grid g(random_dense({4, 4, 4, 2}, 5));
    const double face = -1.0 + 2.0 / 3.0;
    for (double y : {-0.7, 0.1, 0.8}) {
      const auto a = trilinear_sample(g, {face - 1e-6, y, 0.3});
      const auto b = trilinear_sample(g, {face + 1e-6, y, 0.3});
      for (size_t c = 0; c < a.size(); ++c) CHECK(std::abs(a[c] - b[c]) < 1e-4);
    }
  }

  TEST_CASE("factorized sampling matches its dense reconstruction") {
    for (uint32_t rank = 1; rank <= 4; ++rank) {
      const FactorizedGrid f = random_factorized({8, 8, 8, 3}, rank, 10 + rank);
      const Grid fg(f), dg(reconstruct_dense(f));
      Rng rng = make_rng(rank);
      for (int i = 0; i < 50; ++i) {
        const Vec3 p{2 * uniform01(rng) - 1, 2 * uniform01(rng) - 1, 2 * uniform01(rng) - 1};
        const auto a = trilinear_sample(fg, p), b = trilinear_sample(dg, p);
        for (size_t c = 0; c < a.size(); ++c)
          CHECK(std::abs(a[c] - b[c]) <= 1e-5 * std::max(1.0, std::abs(b[c])));
      }
    }
  }

  TEST_CASE("reconstruction of degenerate factorizations") {
    FactorizedGrid ones({4, 4, 4, 0}, BBox{}, 1);
    for (int m = 0; m < 3; ++m) {
      for (auto& v : ones.line(m).value) v = 1.f;
      for (auto& v : ones.plane(m).value) v = 1.f;
    }
    for (auto& v : ones.mix().value) v = 1.f;
    const DenseGrid r1 = reconstruct_dense(ones);
    for (float v : r1.values().value) CHECK(v == doctest::Approx(3.0));

    const FactorizedGrid zero({4, 3, 2, 2}, BBox{}, 2);
    const DenseGrid r0 = reconstruct_dense(zero);
    for (float v : r0.values().value) CHECK(v == 0.f);
  }

  TEST_CASE("upsampling a constant grid keeps it constant") {
    DenseGrid g({3, 3, 3, 2}, BBox{}, 0.75f);
    const DenseGrid u = g.upsampled({7, 5, 6, 2});
    for (float v : u.values().value) CHECK(v == doctest::Approx(0.75f));
    CHECK(u.bbox() == g.bbox());
  }

  TEST_CASE("upsampling reproduces linear fields") {
    DenseGrid g({3, 3, 3, 0}, BBox{});
    for (uint32_t x = 0; x < 3; ++x)
      for (uint32_t y = 0; y < 3; ++y)
        for (uint32_t z = 0; z < 3; ++z) g.at(0, x, y, z) = float(0.5 * g.corner_position(x, y, z).x + 0.25);
    const DenseGrid u = g.upsampled({9, 4, 5, 0});
    for (uint32_t x = 0; x < 9; ++x)
      for (uint32_t y = 0; y < 4; ++y)
        for (uint32_t z = 0; z < 5; ++z)
          CHECK(std::abs(u.at(0, x, y, z) - (0.5 * u.corner_position(x, y, z).x + 0.25)) < 1e-6);
  }

  TEST_CASE("upsampling 2^3 to 3^3 keeps values at the old corners") {
    // Corners of a 2-lattice coincide with the even corners of a 3-lattice.
    const DenseGrid g = random_dense({2, 2, 2, 0}, 6);
    const DenseGrid u = g.upsampled({3, 3, 3, 0});
    for (int k = 0; k < 8; ++k) {
      const uint32_t x = k >> 2 & 1, y = k >> 1 & 1, z = k & 1;
      CHECK(u.at(0, 2 * x, 2 * y, 2 * z) == doctest::Approx(g.at(0, x, y, z)).epsilon(1e-6));
    }
    // 2 -> 4: old corner positions land on new corners 0 and 3.
    const DenseGrid v = g.upsampled({4, 4, 4, 0});
    for (int k = 0; k < 8; ++k) {
      const uint32_t x = k >> 2 & 1, y = k >> 1 & 1, z = k & 1;
      CHECK(v.at(0, 3 * x, 3 * y, 3 * z) == doctest::Approx(g.at(0, x, y, z)).epsilon(1e-6));
    }
  }

  TEST_CASE("upsampling to the same dims is the identity and shrinking is refused") {
    const Grid g(random_dense({4, 4, 4, 1}, 7));
    CHECK(upsample(g, g.dims()).dense().values().value == g.dense().values().value);
    CHECK_THROWS_AS(upsample(g, GridDims{3, 4, 4, 1}), UnsupportedError);
    const Grid f(random_factorized({4, 4, 4, 2}, 2, 8));
    const Grid fu = upsample(f, f.dims());
    for (int m = 0; m < 3; ++m) CHECK(fu.factorized().plane(m).value == f.factorized().plane(m).value);
    CHECK_THROWS_AS(upsample(f, GridDims{4, 4, 3, 2}), UnsupportedError);
  }

  TEST_CASE("factorized upsampling follows the continuous field") {
    const Grid f(random_factorized({4, 5, 4, 2}, 3, 9));
    const Grid u = upsample(f, GridDims{8, 9, 7, 2});
    Rng rng = make_rng(9);
    for (int i = 0; i < 20; ++i) {
      // Corner positions of the new lattice are exact for both.
      const uint32_t x = uint32_t(rng() % 8), y = uint32_t(rng() % 9), z = uint32_t(rng() % 7);
      const Vec3 p = DenseGrid(u.dims(), u.bbox()).corner_position(x, y, z);
      const auto a = trilinear_sample(f, p), b = trilinear_sample(u, p);
      for (size_t c = 0; c < a.size(); ++c) CHECK(std::abs(a[c] - b[c]) < 1e-4);
    }
  }

  TEST_CASE("tv of a constant grid is zero") {
    CHECK(tv_penalty(Grid(DenseGrid({4, 4, 4, 3}, BBox{}, 2.f))) == 0.0);
  }

  TEST_CASE("tv of a 2x2x2 grid alternating along x") {
    DenseGrid g({2, 2, 2, 0}, BBox{});
    for (uint32_t y = 0; y < 2; ++y)
      for (uint32_t z = 0; z < 2; ++z) g.at(0, 1, y, z) = 1.f;
    // Four x-adjacent pairs each differ by 1 (mean 1); y and z pairs are equal.
    CHECK(tv_penalty(Grid(g)) == doctest::Approx(1.0));
  }

  TEST_CASE("gradients against finite differences") {
    CHECK(gradcheck::check_interpolation(10, 11).ok(10));
    CHECK(gradcheck::check_tv(10, 11).ok(10));
  }

  TEST_CASE("serialization round trip is byte exact") {
    for (const Grid& g : {Grid(random_dense({3, 4, 5, 2}, 12)), Grid(random_factorized({3, 4, 5, 2}, 2, 12))}) {
      ByteWriter w;
      write_grid(w, g);
      ByteReader r(w.bytes());
      const Grid back = read_grid(r, "g", ParamGroup::voxel);
      CHECK(r.done());
      ByteWriter w2;
      write_grid(w2, back);
      CHECK(w.bytes() == w2.bytes());
    }
  }

  TEST_CASE("dense block layout: dims, bbox, then values") {
    DenseGrid g({2, 2, 2, 0}, BBox{{0, 0, 0}, {1, 2, 3}}, 0.5f);
    ByteWriter w;
    write_dense_grid(w, g);
    const auto& b = w.bytes();
    REQUIRE(b.size() == 16 + 24 + 8 * 4);
    uint32_t dims[4];
    std::memcpy(dims, b.data(), 16);
    CHECK(dims[0] == 2);
    CHECK(dims[3] == 0);
    float hi_z;
    std::memcpy(&hi_z, b.data() + 16 + 20, 4);
    CHECK(hi_z == 3.f);
  }
}
