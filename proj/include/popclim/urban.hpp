#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "popclim/grid.hpp"
#include "popclim/indices.hpp"
#include "popclim/ingest.hpp"
#include "popclim/sum.hpp"

namespace popclim {

/// Urban-heat-island power law parameters (degC = alpha * pop^beta).
struct UhiParams {
  double alpha = 0.00174;
  double beta = 0.45;

  void validate() const {
    if (alpha < 0.0) throw std::invalid_argument("UhiParams: alpha must be >= 0");
    if (beta <= 0.0 || beta >= 1.0)
      throw std::invalid_argument("UhiParams: beta must lie in (0, 1)");
  }
};

/// Warming attributed to a city of the given population.
inline double uhi_intensity(double pop, const UhiParams& params) {
  params.validate();
  if (pop < 0.0) throw std::invalid_argument("uhi_intensity: negative population");
  if (pop == 0.0) return 0.0;
  return params.alpha * std::pow(pop, params.beta);
}

/// Per-cell urbanization state for one epoch: the fraction of the cell's
/// population living in cities and the population-weighted mean heat-island
/// intensity over those cities.
struct UrbanGridEpoch {
  int epoch = 0;
  GridRaster urban_frac;
  GridRaster uhi;
  /// Number of cells where summed city population exceeded the gridded cell
  /// population and was capped.
  std::size_t cap_events = 0;
  /// Total persons removed by capping.
  double capped_population = 0.0;
};

/// Bin cities into grid cells by point coordinate. Cell urban population is
/// the sum of its cities' populations, capped at the gridded cell population
/// (cap events are counted, not hidden). Cells without population data or
/// with zero population get urban_frac 0.
inline UrbanGridEpoch build_urban_epoch(const CityTable& cities,
                                        const GridRaster& pop, int epoch,
                                        const UhiParams& params) {
  params.validate();
  if (std::find(cities.epochs.begin(), cities.epochs.end(), epoch) ==
      cities.epochs.end())
    throw std::runtime_error("build_urban_epoch: epoch " +
                             std::to_string(epoch) +
                             " absent from city table");
  UrbanGridEpoch out;
  out.epoch = epoch;
  out.urban_frac = pop;
  out.uhi = pop;
  for (std::size_t i = 0; i < pop.n_cells(); ++i) {
    out.urban_frac.values()[i] = 0.0;
    out.urban_frac.mask()[i] = 1;
    out.uhi.values()[i] = 0.0;
    out.uhi.mask()[i] = 1;
  }
  // accumulate urban population and population-weighted intensity per cell
  std::vector<CompensatedSum> upop(pop.n_cells());
  std::vector<CompensatedSum> wint(pop.n_cells());
  for (const CityRecord& city : cities.cities) {
    auto it = city.population.find(epoch);
    if (it == city.population.end()) continue;
    const double cp = it->second;
    auto [r, c] = pop.cell_of(city.lat, city.lon);  // throws if outside grid
    const std::size_t idx = r * pop.n_cols() + c;
    upop[idx].add(cp);
    wint[idx].add(cp * uhi_intensity(cp, params));
  }
  for (std::size_t i = 0; i < pop.n_cells(); ++i) {
    double u = upop[i].value();
    if (u <= 0.0) continue;
    out.uhi.values()[i] = wint[i].value() / u;
    const double cell_pop = pop.mask()[i] ? pop.values()[i] : 0.0;
    if (u > cell_pop) {
      ++out.cap_events;
      out.capped_population += u - cell_pop;
      u = cell_pop;
    }
    out.urban_frac.values()[i] = cell_pop > 0.0 ? u / cell_pop : 0.0;
  }
  return out;
}

/// Population-weighted mean temperature with urban dwellers experiencing
/// T + U: weighted_mean(T, P) + sum(U * P * nu) / sum(P).
inline double uhi_adjusted_level(const GridRaster& temps, const GridRaster& pop,
                                 const UrbanGridEpoch& urban,
                                 MaskPolicy policy) {
  temps.require_same_layout(pop);
  temps.require_same_layout(urban.urban_frac);
  temps.require_same_layout(urban.uhi);
  CompensatedSum num, den;
  for (std::size_t i = 0; i < temps.n_cells(); ++i) {
    const bool contributes =
        policy == MaskPolicy::PaperCompat ||
        (temps.mask()[i] && pop.mask()[i]);
    if (!contributes && policy == MaskPolicy::Strict) {
      continue;
    }
    const double p = pop.mask()[i] ? pop.values()[i] : 0.0;
    const double u = urban.uhi.mask()[i] ? urban.uhi.values()[i] : 0.0;
    const double nu = urban.urban_frac.mask()[i] ? urban.urban_frac.values()[i] : 0.0;
    num.add(u * p * nu);
    den.add(p);
  }
  if (den.value() <= 0.0)
    throw GridError("uhi_adjusted_level: total effective weight is zero");
  return weighted_mean(temps, pop, policy) + num.value() / den.value();
}

enum class UhiIndexMethod : std::uint8_t { Laspeyres, Paasche, Fisher };

struct UhiAdjustedResult {
  /// Change in the urbanization-adjusted index per transition.
  ChangeSeries adjusted;
  /// Change in the unadjusted population-weighted index.
  ChangeSeries base;
  /// Urban-share times heat-island index change; adjusted = base + this,
  /// exactly.
  ChangeSeries uhi_component;
  /// Share of population living in cities, per epoch (diagnostic).
  std::vector<double> urban_share;
  /// Population-weighted mean heat-island intensity over urban dwellers,
  /// per epoch (diagnostic).
  std::vector<double> mean_urban_uhi;
};

namespace detail {

struct UhiTransitionTerms {
  double base_change = 0.0;
  double uhi_term = 0.0;
};

/// One transition under one frozen weight grid: base index change plus the
/// weight-share-weighted heat-island change, per the adjusted-Laspeyres
/// algebra.
inline UhiTransitionTerms uhi_transition(const GridRaster& t0,
                                         const GridRaster& t1,
                                         const GridRaster& w,
                                         const UrbanGridEpoch& u0,
                                         const UrbanGridEpoch& u1,
                                         MaskPolicy policy) {
  UhiTransitionTerms out;
  out.base_change = laspeyres_change(t0, t1, w, policy);
  CompensatedSum num, den;
  for (std::size_t i = 0; i < w.n_cells(); ++i) {
    if (policy == MaskPolicy::Strict &&
        (!w.mask()[i] || !t0.mask()[i] || !t1.mask()[i]))
      continue;
    const double wi = w.mask()[i] ? w.values()[i] : 0.0;
    // nu is frozen with the weights; only U varies across the transition
    const double nu = u0.urban_frac.values()[i];
    num.add((u1.uhi.values()[i] - u0.uhi.values()[i]) * wi * nu);
    den.add(wi);
  }
  if (den.value() > 0.0) out.uhi_term = num.value() / den.value();
  return out;
}

}  // namespace detail

/// Decompose the urbanization-adjusted index change into the unadjusted
/// change plus an urban-share-weighted heat-island change, per transition.
/// The identity adjusted == base + uhi_component holds exactly.
inline UhiAdjustedResult uhi_adjusted_changes(
    const SnapshotSeries& temps, const SnapshotSeries& pops,
    const std::vector<UrbanGridEpoch>& urban, UhiIndexMethod method,
    MaskPolicy policy) {
  temps.validate();
  pops.validate();
  if (temps.epochs != pops.epochs)
    throw GridError("uhi_adjusted_changes: temperature and population epochs differ");
  if (urban.size() != temps.epochs.size())
    throw GridError("uhi_adjusted_changes: need one urban epoch per snapshot");
  for (std::size_t i = 0; i < urban.size(); ++i)
    if (urban[i].epoch != temps.epochs[i])
      throw GridError("uhi_adjusted_changes: urban epoch mismatch at " +
                      std::to_string(temps.epochs[i]));

  UhiAdjustedResult out;
  out.adjusted.epochs = temps.epochs;
  out.base.epochs = temps.epochs;
  out.uhi_component.epochs = temps.epochs;
  for (std::size_t i = 0; i < temps.epochs.size(); ++i) {
    CompensatedSum unum, uden, inum;
    const GridRaster& p = pops.grids[i];
    for (std::size_t j = 0; j < p.n_cells(); ++j) {
      const double pj = p.mask()[j] ? p.values()[j] : 0.0;
      const double nu = urban[i].urban_frac.values()[j];
      unum.add(pj * nu);
      uden.add(pj);
      inum.add(pj * nu * urban[i].uhi.values()[j]);
    }
    out.urban_share.push_back(uden.value() > 0.0 ? unum.value() / uden.value()
                                                 : 0.0);
    out.mean_urban_uhi.push_back(
        unum.value() > 0.0 ? inum.value() / unum.value() : 0.0);
  }
  for (std::size_t i = 0; i + 1 < temps.epochs.size(); ++i) {
    const GridRaster& t0 = temps.grids[i];
    const GridRaster& t1 = temps.grids[i + 1];
    detail::UhiTransitionTerms lasp = detail::uhi_transition(
        t0, t1, pops.grids[i], urban[i], urban[i + 1], policy);
    double base = 0.0, uhi_term = 0.0;
    if (method == UhiIndexMethod::Laspeyres) {
      base = lasp.base_change;
      uhi_term = lasp.uhi_term;
    } else {
      // Paasche freezes end-period weights and end-period urban shares
      detail::UhiTransitionTerms paas = detail::uhi_transition(
          t0, t1, pops.grids[i + 1], urban[i + 1], urban[i], policy);
      // uhi_transition computes (u1 - u0) with its argument order; swap sign
      paas.uhi_term = -paas.uhi_term;
      if (method == UhiIndexMethod::Paasche) {
        base = paas.base_change;
        uhi_term = paas.uhi_term;
      } else {
        base = fisher_change(lasp.base_change, paas.base_change);
        uhi_term = 0.5 * (lasp.uhi_term + paas.uhi_term);
      }
    }
    out.base.deltas.push_back(base);
    out.uhi_component.deltas.push_back(uhi_term);
    out.adjusted.deltas.push_back(base + uhi_term);
  }
  return out;
}

}  // namespace popclim
