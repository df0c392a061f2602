#include "oracles.hpp"

#include "sdnet/rng.hpp"
#include "sdnet/tiler.hpp"

#include <doctest.h>

#include <cmath>

using namespace sdnet;

TEST_CASE("plan_grid: exact fit and the 2048-wide example") {
  const auto one = plan_grid(1024, 1024, 1024, 0.2);
  REQUIRE(one.origins.size() == 1);
  CHECK(one.origins[0] == TileOrigin{0, 0});

  const auto wide = plan_grid(2048, 1024, 1024, 0.2);
  CHECK(wide.stride == 819);
  CHECK(wide.xs == std::vector<int>{0, 819, 1024});
  CHECK(wide.ys == std::vector<int>{0});
}

TEST_CASE("plan_grid: coverage, counts and stride spacing on random cases") {
  Rng rng(2024);
  for (int t = 0; t < 200; ++t) {
    const int tile = 8 + int(rng() % 120);
    const int w = tile + int(rng() % 400), h = tile + int(rng() % 400);
    const auto g = plan_grid(w, h, tile, 0.2);
    CHECK(g.stride == std::max(1, int(std::lround(tile * 0.8))));
    CHECK(oracle::grid_covers(g));
    CHECK(int(g.xs.size()) == oracle::expected_axis_count(w, tile, g.stride));
    CHECK(int(g.ys.size()) == oracle::expected_axis_count(h, tile, g.stride));
    CHECK(g.origins.size() == g.xs.size() * g.ys.size());
    for (std::size_t i = 1; i + 1 < g.xs.size(); ++i) CHECK(g.xs[i] - g.xs[i - 1] == g.stride);
    CHECK(g.xs.back() == w - tile);
    // Dropping any column would leave pixels uncovered.
    if (g.xs.size() > 1) CHECK(g.xs[g.xs.size() - 2] + tile < w);
  }
}

TEST_CASE("plan_grid: invalid requests") {
  CHECK_THROWS_AS(plan_grid(100, 100, 200, 0.2), InvalidArgument);
  CHECK_THROWS_AS(plan_grid(100, 100, 10, 1.0), InvalidArgument);
  CHECK_THROWS_AS(plan_grid(100, 100, 0, 0.2), InvalidArgument);
  CHECK(plan_grid(10, 10, 1, 0.9).stride == 1);
}

TEST_CASE("tissue filter") {
  Image8 white(64, 64, 3, 255);
  const auto grid = plan_grid(64, 64, 16, 0.2);
  CHECK(extract(white, grid, TissueFilter{0.05, 0.1}).empty());
  CHECK(extract(white, grid, TissueFilter{0.05, 0.0}).size() == grid.origins.size());

  // Left half pink, right half white.
  Image8 half(64, 64, 3, 255);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 32; ++x) {
      half(y, x, 1) = 120;
      half(y, x, 2) = 200;
    }
  const auto records = scan_tiles(half, grid, TissueFilter{});
  for (const auto& r : records) {
    int saturated = 0;
    for (int y = r.origin.y; y < r.origin.y + 16; ++y)
      for (int x = r.origin.x; x < r.origin.x + 16; ++x) {
        const int mx = std::max({half(y, x, 0), half(y, x, 1), half(y, x, 2)});
        const int mn = std::min({half(y, x, 0), half(y, x, 1), half(y, x, 2)});
        saturated += mx > 0 && double(mx - mn) / mx > 0.05;
      }
    CHECK(r.tissue_fraction == doctest::Approx(saturated / 256.0));
    CHECK(r.kept == (saturated / 256.0 >= 0.1));
  }
}

TEST_CASE("extract is deterministic and crops exact pixels") {
  Image8 img(50, 70, 3);
  Rng rng(3);
  for (Eigen::Index i = 0; i < img.pixels.size(); ++i) img.pixels.data()[i] = std::uint8_t(rng() & 0xFF);
  const auto grid = plan_grid(70, 50, 20, 0.2);
  const auto a = extract(img, grid, TissueFilter{});
  const auto b = extract(img, grid, TissueFilter{});
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].origin == b[i].origin);
    CHECK(a[i].image == b[i].image);
    CHECK(a[i].image(3, 4, 1) == img(a[i].origin.y + 3, a[i].origin.x + 4, 1));
  }
  CHECK_THROWS_AS(crop(img, 60, 0, 20, 20), InvalidArgument);
}
