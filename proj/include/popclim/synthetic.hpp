#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "popclim/grid.hpp"
#include "popclim/ingest.hpp"

namespace popclim {

/// Controls for the deterministic test-world generator. The defaults give a
/// mildly warming, mildly redistributing world; the degenerate settings let
/// tests construct known-answer scenarios.
struct TrendSpec {
  /// Added uniformly to every cell's temperature per epoch step.
  double warming_per_epoch = 0.0;
  /// Fraction of each cell's population moved toward the warm half of the
  /// grid per epoch step (0 = static population).
  double pop_shift_per_epoch = 0.0;
  /// Multiplicative population growth per epoch step.
  double pop_growth_per_epoch = 0.0;
  /// Amplitude of cellwise noise on the base fields (0 = smooth fields).
  double noise_amplitude = 0.0;
  /// Fraction of cells masked out as "no data" (ocean analogue).
  double masked_fraction = 0.0;
};

struct SyntheticWorld {
  SnapshotSeries population;
  SnapshotSeries temperature;  // degC levels
  GridRaster area;
  CityTable cities;
  MigrationStockTable migration;
};

/// Deterministic synthetic dataset: same seed, same world, bit for bit.
inline SyntheticWorld generate_synthetic_world(std::uint64_t seed,
                                               std::size_t n_rows,
                                               std::size_t n_cols,
                                               const std::vector<int>& epochs,
                                               const TrendSpec& spec) {
  if (n_rows == 0 || n_cols == 0)
    throw std::invalid_argument("generate_synthetic_world: dimensions must be positive");
  if (epochs.empty())
    throw std::invalid_argument("generate_synthetic_world: epochs must be non-empty");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SyntheticWorld world;
  world.area = GridRaster::global(n_rows, n_cols);
  // cos(latitude)-shaped cell areas, arbitrary units
  for (std::size_t r = 0; r < n_rows; ++r) {
    const double lat = world.area.south_lat() +
                       static_cast<double>(r) * world.area.cell_size();
    const double a = std::cos(lat * std::numbers::pi / 180.0);
    for (std::size_t c = 0; c < n_cols; ++c)
      world.area.set(r, c, std::max(a, 1e-3));
  }

  // base fields: temperature warm at the "equator" rows, population clumped
  GridRaster temp0 = GridRaster::global(n_rows, n_cols);
  GridRaster pop0 = GridRaster::global(n_rows, n_cols);
  std::vector<std::uint8_t> land(n_rows * n_cols, 1);
  for (std::size_t i = 0; i < land.size(); ++i)
    if (unit(rng) < spec.masked_fraction) land[i] = 0;
  for (std::size_t r = 0; r < n_rows; ++r) {
    const double lat_frac =
        (static_cast<double>(r) + 0.5) / static_cast<double>(n_rows);
    for (std::size_t c = 0; c < n_cols; ++c) {
      const double lon_frac =
          (static_cast<double>(c) + 0.5) / static_cast<double>(n_cols);
      const double t = 28.0 - 35.0 * std::abs(2.0 * lat_frac - 1.0) +
                       spec.noise_amplitude * (2.0 * unit(rng) - 1.0);
      const double p =
          1000.0 * (0.2 + std::pow(std::sin(lat_frac * std::numbers::pi), 2.0) *
                              (0.5 + 0.5 * std::sin(lon_frac * 2.0 * std::numbers::pi))) *
          (1.0 + spec.noise_amplitude * unit(rng) / 10.0);
      const std::size_t i = r * n_cols + c;
      if (land[i]) {
        temp0.set(r, c, t);
        pop0.set(r, c, p);
      } else {
        temp0.set_masked(r, c);
        pop0.set_masked(r, c);
        world.area.set_masked(r, c);
      }
    }
  }

  // the "warm half" receiving shifted population: cells warmer than the
  // base-field median band
  GridRaster temp = temp0;
  GridRaster pop = pop0;
  for (std::size_t e = 0; e < epochs.size(); ++e) {
    world.temperature.epochs.push_back(epochs[e]);
    world.temperature.grids.push_back(temp);
    world.population.epochs.push_back(epochs[e]);
    world.population.grids.push_back(pop);
    if (e + 1 == epochs.size()) break;
    // advance temperature
    for (std::size_t i = 0; i < temp.n_cells(); ++i)
      if (temp.mask()[i]) temp.values()[i] += spec.warming_per_epoch;
    // advance population: collect the shifted mass, hand it to warm cells
    if (spec.pop_shift_per_epoch > 0.0) {
      CompensatedSum moved;
      std::size_t n_warm = 0;
      for (std::size_t i = 0; i < pop.n_cells(); ++i) {
        if (!pop.mask()[i]) continue;
        const double take = pop.values()[i] * spec.pop_shift_per_epoch;
        pop.values()[i] -= take;
        moved.add(take);
        if (temp0.mask()[i] && temp0.values()[i] > 15.0) ++n_warm;
      }
      if (n_warm > 0) {
        const double grant = moved.value() / static_cast<double>(n_warm);
        for (std::size_t i = 0; i < pop.n_cells(); ++i)
          if (pop.mask()[i] && temp0.mask()[i] && temp0.values()[i] > 15.0)
            pop.values()[i] += grant;
      }
    }
    if (spec.pop_growth_per_epoch != 0.0) {
      for (std::size_t i = 0; i < pop.n_cells(); ++i)
        if (pop.mask()[i]) pop.values()[i] *= 1.0 + spec.pop_growth_per_epoch;
    }
  }

  // a handful of cities on the most populous cells
  world.cities.epochs = epochs;
  const std::size_t n_cities = std::min<std::size_t>(8, n_rows * n_cols / 4 + 1);
  std::vector<std::size_t> order(pop0.n_cells());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double pa = pop0.mask()[a] ? pop0.values()[a] : -1.0;
    const double pb = pop0.mask()[b] ? pop0.values()[b] : -1.0;
    if (pa != pb) return pa > pb;
    return a < b;
  });
  for (std::size_t k = 0; k < n_cities && k < order.size(); ++k) {
    const std::size_t i = order[k];
    if (!pop0.mask()[i]) break;
    const std::size_t r = i / n_cols;
    const std::size_t c = i % n_cols;
    CityRecord city;
    city.id = "C" + std::to_string(k);
    city.name = "City " + std::to_string(k);
    city.country = "X" + std::to_string(k % 3);
    city.lat = pop0.south_lat() + static_cast<double>(r) * pop0.cell_size();
    city.lon = pop0.west_lon() + static_cast<double>(c) * pop0.cell_size();
    double frac = 0.2 + 0.3 * unit(rng);
    for (std::size_t e = 0; e < epochs.size(); ++e) {
      const double cell_pop = world.population.grids[e].mask()[i]
                                  ? world.population.grids[e].values()[i]
                                  : 0.0;
      city.population[epochs[e]] = frac * cell_pop;
      frac = std::min(frac * (1.0 + 0.1 * unit(rng)), 0.95);
    }
    world.cities.cities.push_back(std::move(city));
  }

  // a small migration system over synthetic countries
  const std::size_t n_countries = 5;
  world.migration.countries.clear();
  for (std::size_t k = 0; k < n_countries; ++k)
    world.migration.countries.push_back("K" + std::to_string(k));
  std::sort(world.migration.countries.begin(), world.migration.countries.end());
  world.migration.epochs = epochs;
  for (std::size_t e = 0; e < epochs.size(); ++e) {
    std::vector<double>& st = world.migration.stocks[epochs[e]];
    st.assign(n_countries * n_countries, 0.0);
    std::vector<double>& ct = world.migration.country_temp[epochs[e]];
    std::vector<double>& cp = world.migration.country_pop[epochs[e]];
    ct.resize(n_countries);
    cp.resize(n_countries);
    for (std::size_t k = 0; k < n_countries; ++k) {
      ct[k] = -5.0 + 8.0 * static_cast<double>(k) +
              spec.warming_per_epoch * static_cast<double>(e);
      cp[k] = 1.0e6 * (1.0 + static_cast<double>(k));
    }
    for (std::size_t o = 0; o < n_countries; ++o)
      for (std::size_t d = 0; d < n_countries; ++d) {
        if (o == d) continue;
        // stocks grow over time so flows are positive
        st[o * n_countries + d] =
            1000.0 * (1.0 + static_cast<double>((o * 7 + d * 3) % 5)) *
            (1.0 + 0.2 * static_cast<double>(e)) * (0.5 + unit(rng));
      }
  }
  return world;
}

}  // namespace popclim
