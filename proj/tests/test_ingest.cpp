#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "popclim/ingest.hpp"
#include "popclim/synthetic.hpp"

using namespace popclim;

TEST_CASE("parse_ascii_grid masks sentinel cells in headerless bodies") {
  std::istringstream in("1 2\n-9999 4\n");
  GridGeometry geom{2, 2, -45.0, -90.0, 90.0};
  GridRaster g = parse_ascii_grid(in, -9999.0, geom);
  CHECK(g.orientation() == Orientation::NorthToSouth);
  CHECK(g.at(0, 0) == 1.0);
  CHECK(g.at(0, 1) == 2.0);
  CHECK_FALSE(g.valid(1, 0));
  CHECK(g.at(1, 1) == 4.0);
}

TEST_CASE("parse_ascii_grid reads the six-line header") {
  std::istringstream in(
      "ncols 2\nnrows 2\nxllcorner -180\nyllcorner -90\ncellsize 90\n"
      "NODATA_value -1\n1 2\n-1 4\n");
  GridRaster g = parse_ascii_grid(in, -9999.0);
  CHECK(g.cell_size() == 90.0);
  CHECK(g.west_lon() == -135.0);
  CHECK(g.south_lat() == -45.0);
  CHECK_FALSE(g.valid(1, 0));  // header nodata wins over the argument
}

TEST_CASE("parse_ascii_grid reports ragged rows with position") {
  std::istringstream in(
      "ncols 3\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n"
      "NODATA_value -9999\n1 2 3\n4 5\n");
  try {
    parse_ascii_grid(in, -9999.0, {}, "fixture.asc");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.source() == "fixture.asc");
    CHECK(e.line() == 8);
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("ragged"));
  }
}

TEST_CASE("parse_ascii_grid rejects excess fields, bad tokens and short files") {
  std::istringstream extra("1 2 3\n4 5\n");
  GridGeometry geom{2, 2, 0.5, 0.5, 1.0};
  CHECK_THROWS_AS(parse_ascii_grid(extra, -9999.0, geom), ParseError);
  std::istringstream bad("1 x\n3 4\n");
  CHECK_THROWS_AS(parse_ascii_grid(bad, -9999.0, geom), ParseError);
  std::istringstream shortf("1 2\n");
  CHECK_THROWS_AS(parse_ascii_grid(shortf, -9999.0, geom), ParseError);
  std::istringstream headerless("1 2\n3 4\n");
  CHECK_THROWS_AS(parse_ascii_grid(headerless, -9999.0), ParseError);
}

TEST_CASE("ascii grid round-trips value-exactly") {
  SyntheticWorld world =
      generate_synthetic_world(3, 18, 36, {2000}, TrendSpec{.noise_amplitude = 2.0,
                                                            .masked_fraction = 0.25});
  const GridRaster& g = world.population.grids[0];
  std::stringstream buf;
  write_ascii_grid(buf, g, -9999.0);
  GridRaster parsed = parse_ascii_grid(buf, -9999.0);
  GridRaster back = reorient(parsed, g.orientation());
  REQUIRE(back.same_layout(g));
  CHECK(back.mask() == g.mask());
  for (std::size_t i = 0; i < g.n_cells(); ++i)
    if (g.mask()[i]) CHECK(back.values()[i] == g.values()[i]);
  // serialize again: byte-identical
  std::stringstream buf2;
  write_ascii_grid(buf2, parsed, -9999.0);
  std::stringstream buf3;
  write_ascii_grid(buf3, g, -9999.0);
  CHECK(buf2.str() == buf3.str());
}

namespace {

/// Build a CRU .dat body by the same (year, month, lat) index arithmetic the
/// parser must honor, with value = encode(y, m, lat, col).
std::string cru_fixture(const CruLayout& layout,
                        double (*encode)(std::size_t, std::size_t, std::size_t,
                                         std::size_t)) {
  std::string out;
  for (std::size_t y = 0; y < layout.n_years; ++y)
    for (std::size_t m = 0; m < 12; ++m)
      for (std::size_t l = 0; l < layout.n_lat; ++l) {
        for (std::size_t c = 0; c < layout.n_cols; ++c) {
          if (c) out += ' ';
          char buf[32];
          std::snprintf(buf, sizeof buf, "%g", encode(y, m, l, c));
          out += buf;
        }
        out += '\n';
      }
  return out;
}

double encode_cell(std::size_t y, std::size_t m, std::size_t l, std::size_t c) {
  return static_cast<double>(y * 10000 + m * 100 + l * 10 + c);
}

}  // namespace

TEST_CASE("parse_cru_dat places every value per the index arithmetic") {
  CruLayout layout{.n_lat = 2, .n_cols = 3, .start_year = 1901, .n_years = 1};
  std::istringstream in(cru_fixture(layout, encode_cell));
  MonthlyArchive archive = parse_cru_dat(in, layout);
  REQUIRE(archive.grids.size() == 12);
  // triple-loop oracle: exact equality of every cell
  for (std::size_t m = 0; m < 12; ++m)
    for (std::size_t l = 0; l < 2; ++l)
      for (std::size_t c = 0; c < 3; ++c)
        CHECK(archive.month(0, m).at(l, c) == encode_cell(0, m, l, c));
  CHECK(archive.month(0, 0).orientation() == Orientation::SouthToNorth);
}

TEST_CASE("parse_cru_dat masks the -999 sentinel at the right cell") {
  CruLayout layout{.n_lat = 2, .n_cols = 3, .start_year = 1901, .n_years = 2};
  std::string body = cru_fixture(layout, encode_cell);
  // overwrite the (year 1, month 2, lat 1) line's middle field
  std::istringstream count(body);
  std::string line;
  std::string rebuilt;
  const std::size_t target = 1 * 2 * 12 + 2 * 2 + 1;
  std::size_t i = 0;
  while (std::getline(count, line)) {
    if (i == target) line = "10 -999 30";
    rebuilt += line + "\n";
    ++i;
  }
  std::istringstream in(rebuilt);
  MonthlyArchive archive = parse_cru_dat(in, layout);
  CHECK_FALSE(archive.month(1, 2).valid(1, 1));
  CHECK(archive.month(1, 2).valid(1, 0));
  CHECK(archive.month(1, 2).at(1, 2) == 30.0);
}

TEST_CASE("parse_cru_dat names expected vs found rows on truncation") {
  CruLayout layout{.n_lat = 2, .n_cols = 3, .start_year = 1901, .n_years = 1};
  std::string body = cru_fixture(layout, encode_cell);
  body.resize(body.find('\n', body.size() / 2) + 1);  // drop trailing rows
  std::istringstream in(body);
  try {
    parse_cru_dat(in, layout, "trunc.dat");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("expected 24"));
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("trunc.dat"));
  }
}

TEST_CASE("parse_cru_annual equals monthly_to_annual of the full archive") {
  CruLayout layout{.n_lat = 3, .n_cols = 4, .start_year = 1950, .n_years = 3};
  std::string body = cru_fixture(layout, [](std::size_t y, std::size_t m,
                                            std::size_t l, std::size_t c) {
    return std::sin(static_cast<double>(y * 1000 + m * 50 + l * 7 + c)) * 100.0;
  });
  std::istringstream in1(body);
  SnapshotSeries streaming = parse_cru_annual(in1, layout);
  std::istringstream in2(body);
  SnapshotSeries reference = monthly_to_annual(parse_cru_dat(in2, layout));
  REQUIRE(streaming.epochs == reference.epochs);
  for (std::size_t e = 0; e < streaming.grids.size(); ++e)
    for (std::size_t i = 0; i < streaming.grids[e].n_cells(); ++i)
      CHECK(streaming.grids[e].values()[i] == reference.grids[e].values()[i]);
}

TEST_CASE("cru archive round-trips through write_cru_dat") {
  CruLayout layout{.n_lat = 2, .n_cols = 3, .start_year = 1901, .n_years = 1};
  std::istringstream in(cru_fixture(layout, encode_cell));
  MonthlyArchive archive = parse_cru_dat(in, layout);
  archive.grids[5].set_masked(0, 1);
  std::stringstream buf;
  write_cru_dat(buf, archive);
  MonthlyArchive back = parse_cru_dat(buf, layout);
  for (std::size_t i = 0; i < archive.grids.size(); ++i) {
    CHECK(back.grids[i].mask() == archive.grids[i].mask());
    for (std::size_t j = 0; j < archive.grids[i].n_cells(); ++j)
      if (archive.grids[i].mask()[j])
        CHECK(back.grids[i].values()[j] == archive.grids[i].values()[j]);
  }
}

TEST_CASE("parse_city_table reads one record") {
  std::istringstream in(
      "city_id,name,country,lat,lon,pop_1950\n"
      "L1,London,GB,51.5,-0.1,8000000\n");
  CityTable t = parse_city_table(in);
  REQUIRE(t.epochs == std::vector<int>{1950});
  REQUIRE(t.cities.size() == 1);
  CHECK(t.cities[0].name == "London");
  CHECK(t.cities[0].population.at(1950) == 8000000.0);
}

TEST_CASE("parse_city_table distinguishes absent populations from zero") {
  std::istringstream in(
      "city_id,name,country,lat,lon,pop_1950,pop_1960\n"
      "A,Alpha,XA,10,20,,5\n");
  CityTable t = parse_city_table(in);
  CHECK_FALSE(t.cities[0].population.contains(1950));
  CHECK(t.cities[0].population.at(1960) == 5.0);
}

TEST_CASE("parse_city_table validates coordinates, schema and populations") {
  std::istringstream bad_lat(
      "city_id,name,country,lat,lon,pop_1950\nA,Alpha,XA,95,0,1\n");
  CHECK_THROWS_AS(parse_city_table(bad_lat), ParseError);
  std::istringstream bad_pop(
      "city_id,name,country,lat,lon,pop_1950\nA,Alpha,XA,5,0,-1\n");
  CHECK_THROWS_AS(parse_city_table(bad_pop), ParseError);
  std::istringstream bad_schema("id,name,country,lat,lon,pop_1950\n");
  CHECK_THROWS_AS(parse_city_table(bad_schema), ParseError);
  std::istringstream bad_order(
      "city_id,name,country,lat,lon,pop_1960,pop_1950\n");
  CHECK_THROWS_AS(parse_city_table(bad_order), ParseError);
}

TEST_CASE("city table round-trips, names with commas included") {
  CityTable t;
  t.epochs = {1950, 1960};
  CityRecord rec;
  rec.id = "W1";
  rec.name = "Washington, D.C.";
  rec.country = "US";
  rec.lat = 38.9;
  rec.lon = -77.0;
  rec.population[1950] = 802178.0;
  t.cities.push_back(rec);
  std::stringstream buf;
  write_city_table(buf, t);
  CityTable back = parse_city_table(buf);
  REQUIRE(back.cities.size() == 1);
  CHECK(back.cities[0].name == "Washington, D.C.");
  CHECK(back.cities[0].population.at(1950) == 802178.0);
  CHECK_FALSE(back.cities[0].population.contains(1960));
}

TEST_CASE("parse_migration_tables builds the stock matrix") {
  std::istringstream stocks(
      "epoch,origin,destination,stock\n1990,AA,BB,100\n");
  std::istringstream temps(
      "country,epoch,mean_temp_c\nAA,1990,25\nBB,1990,10\n");
  MigrationStockTable t = parse_migration_tables(stocks, temps);
  REQUIRE(t.countries == std::vector<std::string>{"AA", "BB"});
  CHECK(t.stock(1990, t.country_index("AA"), t.country_index("BB")) == 100.0);
  CHECK(t.stock(1990, t.country_index("BB"), t.country_index("AA")) == 0.0);
}

TEST_CASE("parse_migration_tables enforces referential integrity") {
  std::istringstream stocks(
      "epoch,origin,destination,stock\n1990,AA,BB,100\n");
  std::istringstream temps("country,epoch,mean_temp_c\nAA,1990,25\n");
  CHECK_THROWS_WITH(parse_migration_tables(stocks, temps),
                    Catch::Matchers::ContainsSubstring("BB"));
}

TEST_CASE("parse_migration_tables rejects negative stocks and missing epochs") {
  std::istringstream neg("epoch,origin,destination,stock\n1990,AA,BB,-5\n");
  std::istringstream temps("country,epoch,mean_temp_c\nAA,1990,25\nBB,1990,10\n");
  CHECK_THROWS_AS(parse_migration_tables(neg, temps), ParseError);
  std::istringstream stocks(
      "epoch,origin,destination,stock\n1990,AA,BB,5\n2000,AA,BB,9\n");
  std::istringstream temps90(
      "country,epoch,mean_temp_c\nAA,1990,25\nBB,1990,10\n");
  CHECK_THROWS_WITH(parse_migration_tables(stocks, temps90),
                    Catch::Matchers::ContainsSubstring("2000"));
}

TEST_CASE("migration tables round-trip through the writers") {
  SyntheticWorld world = generate_synthetic_world(11, 4, 4, {1990, 2000}, {});
  const MigrationStockTable& t = world.migration;
  std::stringstream stocks, temps, pops;
  write_migration_tables(stocks, temps, t, &pops);
  MigrationStockTable back =
      parse_migration_tables(stocks, temps, &pops);
  REQUIRE(back.countries == t.countries);
  REQUIRE(back.epochs == t.epochs);
  for (int e : t.epochs) {
    CHECK(back.stocks.at(e) == t.stocks.at(e));
    CHECK(back.country_temp.at(e) == t.country_temp.at(e));
    CHECK(back.country_pop.at(e) == t.country_pop.at(e));
  }
}

TEST_CASE("generate_synthetic_world is deterministic per seed") {
  const std::vector<int> epochs{1950, 1960, 1970};
  TrendSpec spec{.warming_per_epoch = 0.5,
                 .pop_shift_per_epoch = 0.05,
                 .noise_amplitude = 1.0,
                 .masked_fraction = 0.1};
  SyntheticWorld a = generate_synthetic_world(1, 6, 8, epochs, spec);
  SyntheticWorld b = generate_synthetic_world(1, 6, 8, epochs, spec);
  for (std::size_t e = 0; e < epochs.size(); ++e) {
    CHECK(a.temperature.grids[e] == b.temperature.grids[e]);
    CHECK(a.population.grids[e] == b.population.grids[e]);
  }
  CHECK(a.migration.stocks.at(1960) == b.migration.stocks.at(1960));
  SyntheticWorld c = generate_synthetic_world(2, 6, 8, epochs, spec);
  CHECK_FALSE(a.temperature.grids[0] == c.temperature.grids[0]);
}

TEST_CASE("uniform-warming trend spec warms every cell by exactly the step") {
  SyntheticWorld w = generate_synthetic_world(
      4, 5, 6, {1900, 1910, 1920}, TrendSpec{.warming_per_epoch = 1.0});
  for (std::size_t e = 1; e < w.temperature.grids.size(); ++e)
    for (std::size_t i = 0; i < w.temperature.grids[e].n_cells(); ++i)
      CHECK(w.temperature.grids[e].values()[i] ==
            w.temperature.grids[e - 1].values()[i] + 1.0);
}

TEST_CASE("pure population shift keeps cellwise temperature constant") {
  SyntheticWorld w = generate_synthetic_world(
      4, 5, 6, {1900, 1910, 1920}, TrendSpec{.pop_shift_per_epoch = 0.1});
  for (std::size_t e = 1; e < w.temperature.grids.size(); ++e)
    CHECK(w.temperature.grids[e] == w.temperature.grids[0]);
  CHECK_FALSE(w.population.grids[1] == w.population.grids[0]);
}
