#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "popclim/grid.hpp"

using namespace popclim;

namespace {

GridRaster make_grid(std::size_t rows, std::size_t cols) {
  return GridRaster::global(rows, cols);
}

GridRaster random_grid(std::size_t rows, std::size_t cols, std::uint64_t seed,
                       double masked_frac = 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-50.0, 50.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  GridRaster g = make_grid(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      if (unit(rng) < masked_frac)
        g.set_masked(r, c);
      else
        g.set(r, c, dist(rng));
    }
  return g;
}

}  // namespace

TEST_CASE("aggregate_blocks sums uniform blocks") {
  GridRaster g = make_grid(6, 6);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 6; ++c) g.set(r, c, 1.0);
  GridRaster coarse = aggregate_blocks(g, 6, Reducer::Sum);
  REQUIRE(coarse.n_rows() == 1);
  REQUIRE(coarse.n_cols() == 1);
  CHECK(coarse.at(0, 0) == 36.0);
  CHECK(coarse.valid(0, 0));
  CHECK(coarse.cell_size() == g.cell_size() * 6);
}

TEST_CASE("aggregate_blocks masks empty blocks") {
  GridRaster g = make_grid(6, 6);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 6; ++c) g.set_masked(r, c);
  GridRaster coarse = aggregate_blocks(g, 6, Reducer::Sum);
  CHECK_FALSE(coarse.valid(0, 0));
}

TEST_CASE("aggregate_blocks matches double-loop block summation") {
  GridRaster g = make_grid(12, 12);
  for (std::size_t r = 0; r < 12; ++r)
    for (std::size_t c = 0; c < 12; ++c)
      g.set(r, c, static_cast<double>(r * 12 + c));
  GridRaster coarse = aggregate_blocks(g, 6, Reducer::Sum);
  REQUIRE(coarse.n_rows() == 2);
  REQUIRE(coarse.n_cols() == 2);
  for (std::size_t R = 0; R < 2; ++R)
    for (std::size_t C = 0; C < 2; ++C) {
      double expect = 0.0;
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j)
          expect += static_cast<double>((R * 6 + i) * 12 + (C * 6 + j));
      CHECK(coarse.at(R, C) == expect);
    }
}

TEST_CASE("aggregate_blocks mean averages valid cells only") {
  GridRaster g = make_grid(2, 2);
  g.set(0, 0, 10.0);
  g.set(0, 1, 20.0);
  g.set_masked(1, 0);
  g.set(1, 1, 30.0);
  GridRaster coarse = aggregate_blocks(g, 2, Reducer::Mean);
  CHECK(coarse.at(0, 0) == 20.0);
}

TEST_CASE("aggregate_blocks sum conserves the global total") {
  GridRaster g = random_grid(24, 48, 7, 0.2);
  GridRaster coarse = aggregate_blocks(g, 4, Reducer::Sum);
  CompensatedSum fine_total, coarse_total;
  for (std::size_t i = 0; i < g.n_cells(); ++i)
    if (g.mask()[i]) fine_total.add(g.values()[i]);
  for (std::size_t i = 0; i < coarse.n_cells(); ++i)
    if (coarse.mask()[i]) coarse_total.add(coarse.values()[i]);
  CHECK_THAT(coarse_total.value(),
             Catch::Matchers::WithinRel(fine_total.value(), 1e-9));
}

TEST_CASE("aggregate_blocks rejects bad factors") {
  GridRaster g = make_grid(6, 6);
  CHECK_THROWS_AS(aggregate_blocks(g, 0, Reducer::Sum), GridError);
  CHECK_THROWS_AS(aggregate_blocks(g, 4, Reducer::Sum), GridError);
}

TEST_CASE("reorient reverses rows and updates the origin") {
  GridRaster g(2, 1, -45.0, 0.0, 90.0, Orientation::NorthToSouth);
  g.set(0, 0, 1.0);
  g.set(1, 0, 2.0);
  CHECK(g.origin_lat() == 45.0);
  GridRaster flipped = reorient(g, Orientation::SouthToNorth);
  CHECK(flipped.at(0, 0) == 2.0);
  CHECK(flipped.at(1, 0) == 1.0);
  CHECK(flipped.origin_lat() == -45.0);
}

TEST_CASE("reorient is the identity when already oriented") {
  GridRaster g = random_grid(5, 7, 11, 0.1);
  CHECK(reorient(g, g.orientation()) == g);
}

TEST_CASE("reorient is an exact involution") {
  GridRaster g = random_grid(9, 4, 13, 0.3);
  GridRaster back = reorient(reorient(g, Orientation::NorthToSouth),
                             Orientation::SouthToNorth);
  CHECK(back == g);
}

TEST_CASE("monthly_to_annual averages twelve months") {
  MonthlyArchive archive;
  archive.start_year = 1990;
  archive.n_years = 1;
  for (int m = 0; m < 12; ++m) {
    GridRaster g = make_grid(1, 2);
    g.set(0, 0, 5.0);
    g.set(0, 1, static_cast<double>(m + 1));
    archive.grids.push_back(g);
  }
  SnapshotSeries annual = monthly_to_annual(archive);
  REQUIRE(annual.epochs == std::vector<int>{1990});
  CHECK_THAT(annual.grids[0].at(0, 0), Catch::Matchers::WithinAbs(5.0, 1e-15));
  CHECK_THAT(annual.grids[0].at(0, 1), Catch::Matchers::WithinAbs(6.5, 1e-15));
}

TEST_CASE("monthly_to_annual masks a year when any month is masked") {
  MonthlyArchive archive;
  archive.start_year = 1990;
  archive.n_years = 1;
  for (int m = 0; m < 12; ++m) {
    GridRaster g = make_grid(1, 1);
    if (m == 4)
      g.set_masked(0, 0);
    else
      g.set(0, 0, 1.0);
    archive.grids.push_back(g);
  }
  SnapshotSeries annual = monthly_to_annual(archive);
  CHECK_FALSE(annual.grids[0].valid(0, 0));
}

TEST_CASE("monthly_to_annual global mean equals mean of all months when unmasked") {
  MonthlyArchive archive;
  archive.start_year = 2000;
  archive.n_years = 2;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(-30.0, 30.0);
  CompensatedSum monthly_total;
  for (int i = 0; i < 24; ++i) {
    GridRaster g = make_grid(3, 4);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 4; ++c) {
        const double v = dist(rng);
        g.set(r, c, v);
        monthly_total.add(v);
      }
    archive.grids.push_back(g);
  }
  SnapshotSeries annual = monthly_to_annual(archive);
  CompensatedSum annual_total;
  for (const GridRaster& g : annual.grids)
    for (double v : g.values()) annual_total.add(v);
  // mean over all monthly values == mean over annual values
  CHECK_THAT(annual_total.value() / 24.0,
             Catch::Matchers::WithinRel(monthly_total.value() / (24.0 * 12.0), 1e-12));
}

namespace {

SnapshotSeries annual_series(int start_year, const std::vector<double>& vals) {
  SnapshotSeries s;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    GridRaster g = GridRaster::global(1, 1);
    g.set(0, 0, vals[i]);
    s.epochs.push_back(start_year + static_cast<int>(i));
    s.grids.push_back(g);
  }
  return s;
}

}  // namespace

TEST_CASE("centered_mean of a constant series is the constant") {
  SnapshotSeries s = annual_series(1900, std::vector<double>(31, 3.25));
  SnapshotSeries m = centered_mean(s, {1910, 1920}, 21);
  CHECK_THAT(m.grids[0].at(0, 0), Catch::Matchers::WithinAbs(3.25, 1e-15));
  CHECK_THAT(m.grids[1].at(0, 0), Catch::Matchers::WithinAbs(3.25, 1e-15));
}

TEST_CASE("centered_mean with window 1 is the identity") {
  SnapshotSeries s = annual_series(1900, {1.0, 2.0, 3.0, 4.0});
  SnapshotSeries m = centered_mean(s, {1901, 1903}, 1);
  CHECK(m.grids[0].at(0, 0) == 2.0);
  CHECK(m.grids[1].at(0, 0) == 4.0);
}

TEST_CASE("centered_mean 21-year window of 0..20 centered on the middle") {
  std::vector<double> vals;
  for (int i = 0; i <= 20; ++i) vals.push_back(static_cast<double>(i));
  SnapshotSeries s = annual_series(1, vals);
  SnapshotSeries m = centered_mean(s, {11}, 21);
  CHECK_THAT(m.grids[0].at(0, 0), Catch::Matchers::WithinAbs(10.0, 1e-13));
}

TEST_CASE("centered_mean rejects even windows and out-of-range windows") {
  SnapshotSeries s = annual_series(1900, std::vector<double>(30, 1.0));
  CHECK_THROWS_AS(centered_mean(s, {1915}, 10), GridError);
  CHECK_THROWS_AS(centered_mean(s, {1905}, 21), GridError);
  CHECK_THROWS_AS(centered_mean(s, {1925}, 21), GridError);
}

TEST_CASE("centered_mean masks a center year when any contributing year is masked") {
  SnapshotSeries s = annual_series(1900, std::vector<double>(5, 1.0));
  s.grids[2].set_masked(0, 0);
  SnapshotSeries m = centered_mean(s, {1902}, 3);
  CHECK_FALSE(m.grids[0].valid(0, 0));
}

TEST_CASE("centered_mean is linear in the input fields") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> dist(-10.0, 10.0);
  auto rand_series = [&](void) {
    SnapshotSeries s;
    for (int y = 0; y < 9; ++y) {
      GridRaster g = make_grid(2, 3);
      for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 3; ++c) g.set(r, c, dist(rng));
      s.epochs.push_back(2000 + y);
      s.grids.push_back(g);
    }
    return s;
  };
  SnapshotSeries x = rand_series();
  SnapshotSeries y = rand_series();
  const double a = 2.5, b = -0.75;
  SnapshotSeries combo = x;
  for (std::size_t i = 0; i < combo.grids.size(); ++i)
    for (std::size_t j = 0; j < combo.grids[i].n_cells(); ++j)
      combo.grids[i].values()[j] =
          a * x.grids[i].values()[j] + b * y.grids[i].values()[j];
  SnapshotSeries mx = centered_mean(x, {2004}, 5);
  SnapshotSeries my = centered_mean(y, {2004}, 5);
  SnapshotSeries mc = centered_mean(combo, {2004}, 5);
  for (std::size_t j = 0; j < mc.grids[0].n_cells(); ++j)
    CHECK_THAT(mc.grids[0].values()[j],
               Catch::Matchers::WithinAbs(
                   a * mx.grids[0].values()[j] + b * my.grids[0].values()[j],
                   1e-12));
}

TEST_CASE("convert_units applies the affine map and preserves the mask") {
  GridRaster g = make_grid(1, 2);
  g.set(0, 0, 156.0);
  g.set_masked(0, 1);
  GridRaster k = convert_units(g, 0.1, 273.15);
  CHECK_THAT(k.at(0, 0), Catch::Matchers::WithinAbs(288.75, 1e-12));
  CHECK_FALSE(k.valid(0, 1));
  GridRaster same = convert_units(g, 1.0, 0.0);
  CHECK(same == g);
}

TEST_CASE("GridRaster rejects extents beyond the globe") {
  CHECK_THROWS_AS(GridRaster(10, 10, 0.0, 0.0, 90.0), GridError);
}
