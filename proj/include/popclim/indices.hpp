#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "popclim/grid.hpp"
#include "popclim/sum.hpp"

namespace popclim {

/// How masked cells enter weighted means.
/// Strict: a cell contributes iff both value and weight are valid; the
/// denominator runs over contributing cells only.
/// PaperCompat: invalid values and weights are replaced by zero and the
/// denominator runs over all weights, reproducing the zero-fill arithmetic
/// of the original Matlab pipeline.
enum class MaskPolicy : std::uint8_t { Strict, PaperCompat };

inline const char* to_string(MaskPolicy p) {
  return p == MaskPolicy::Strict ? "strict" : "paper_compat";
}

enum class SeriesKind : std::uint8_t { Level, Anomaly };

enum class IndexMethod : std::uint8_t {
  Area,
  NaivePop,
  LaspeyresFixed,
  PaascheFixed,
  LaspeyresChained,
  PaascheChained,
  FisherChained,
  UhiAdjusted,
  MigrationAdjusted,
};

inline const char* to_string(IndexMethod m) {
  switch (m) {
    case IndexMethod::Area: return "area";
    case IndexMethod::NaivePop: return "naive_pop";
    case IndexMethod::LaspeyresFixed: return "laspeyres_fixed";
    case IndexMethod::PaascheFixed: return "paasche_fixed";
    case IndexMethod::LaspeyresChained: return "laspeyres_chained";
    case IndexMethod::PaascheChained: return "paasche_chained";
    case IndexMethod::FisherChained: return "fisher_chained";
    case IndexMethod::UhiAdjusted: return "uhi_adjusted";
    case IndexMethod::MigrationAdjusted: return "migration_adjusted";
  }
  return "?";
}

struct IndexSeries {
  std::vector<int> epochs;
  std::vector<double> values;
  SeriesKind kind = SeriesKind::Level;
  IndexMethod method = IndexMethod::Area;
  int base_epoch = 0;

  double at_epoch(int year) const {
    for (std::size_t i = 0; i < epochs.size(); ++i)
      if (epochs[i] == year) return values[i];
    throw std::runtime_error("epoch " + std::to_string(year) +
                             " not in index series");
  }
};

/// Per-transition changes; deltas[i] is the change from epochs[i] to
/// epochs[i+1].
struct ChangeSeries {
  std::vector<int> epochs;
  std::vector<double> deltas;
};

struct WeightedMeanResult {
  double value = 0.0;
  /// Fraction of valid weight that sat on cells with no valid value
  /// (strict policy only; always 0 under paper_compat).
  double excluded_weight_fraction = 0.0;
};

inline WeightedMeanResult weighted_mean_detail(const GridRaster& value,
                                               const GridRaster& weight,
                                               MaskPolicy policy) {
  value.require_same_layout(weight);
  CompensatedSum num, den;
  WeightedMeanResult out;
  if (policy == MaskPolicy::PaperCompat) {
    for (std::size_t i = 0; i < value.n_cells(); ++i) {
      const double v = value.mask()[i] ? value.values()[i] : 0.0;
      const double w = weight.mask()[i] ? weight.values()[i] : 0.0;
      num.add(v * w);
      den.add(w);
    }
  } else {
    CompensatedSum excluded;
    for (std::size_t i = 0; i < value.n_cells(); ++i) {
      if (!weight.mask()[i]) continue;
      const double w = weight.values()[i];
      if (!value.mask()[i]) {
        excluded.add(w);
        continue;
      }
      num.add(value.values()[i] * w);
      den.add(w);
    }
    const double total = den.value() + excluded.value();
    if (total > 0.0) out.excluded_weight_fraction = excluded.value() / total;
  }
  if (den.value() <= 0.0)
    throw GridError("weighted_mean: total effective weight is zero");
  out.value = num.value() / den.value();
  return out;
}

inline double weighted_mean(const GridRaster& value, const GridRaster& weight,
                            MaskPolicy policy) {
  return weighted_mean_detail(value, weight, policy).value;
}

inline IndexSeries area_series(const SnapshotSeries& temps,
                               const GridRaster& area, MaskPolicy policy) {
  temps.validate();
  IndexSeries out;
  out.method = IndexMethod::Area;
  out.kind = SeriesKind::Level;
  out.epochs = temps.epochs;
  out.base_epoch = temps.epochs.front();
  for (const GridRaster& t : temps.grids)
    out.values.push_back(weighted_mean(t, area, policy));
  return out;
}

/// Each epoch's temperature weighted by that epoch's own population. This is
/// the series that conflates warming with population redistribution.
inline IndexSeries naive_pop_series(const SnapshotSeries& temps,
                                    const SnapshotSeries& pops,
                                    MaskPolicy policy) {
  temps.validate();
  pops.validate();
  if (temps.epochs != pops.epochs)
    throw GridError("naive_pop_series: temperature and population epochs differ");
  IndexSeries out;
  out.method = IndexMethod::NaivePop;
  out.kind = SeriesKind::Level;
  out.epochs = temps.epochs;
  out.base_epoch = temps.epochs.front();
  for (std::size_t i = 0; i < temps.grids.size(); ++i)
    out.values.push_back(weighted_mean(temps.grids[i], pops.grids[i], policy));
  return out;
}

/// Additive Laspeyres change: mean warming weighted by start-period
/// population.
inline double laspeyres_change(const GridRaster& temp_from,
                               const GridRaster& temp_to,
                               const GridRaster& pop_from, MaskPolicy policy) {
  temp_from.require_same_layout(temp_to);
  temp_from.require_same_layout(pop_from);
  CompensatedSum num_to, num_from, den;
  if (policy == MaskPolicy::PaperCompat) {
    for (std::size_t i = 0; i < temp_from.n_cells(); ++i) {
      const double t0 = temp_from.mask()[i] ? temp_from.values()[i] : 0.0;
      const double t1 = temp_to.mask()[i] ? temp_to.values()[i] : 0.0;
      const double w = pop_from.mask()[i] ? pop_from.values()[i] : 0.0;
      num_to.add(t1 * w);
      num_from.add(t0 * w);
      den.add(w);
    }
  } else {
    for (std::size_t i = 0; i < temp_from.n_cells(); ++i) {
      if (!temp_from.mask()[i] || !temp_to.mask()[i] || !pop_from.mask()[i])
        continue;
      const double w = pop_from.values()[i];
      num_to.add(temp_to.values()[i] * w);
      num_from.add(temp_from.values()[i] * w);
      den.add(w);
    }
  }
  if (den.value() <= 0.0)
    throw GridError("laspeyres_change: total effective weight is zero");
  return (num_to.value() - num_from.value()) / den.value();
}

/// Additive Paasche change: the same difference weighted by end-period
/// population.
inline double paasche_change(const GridRaster& temp_from,
                             const GridRaster& temp_to,
                             const GridRaster& pop_to, MaskPolicy policy) {
  return laspeyres_change(temp_from, temp_to, pop_to, policy);
}

/// Additive Fisher change: arithmetic mean of the Laspeyres and Paasche
/// changes.
inline double fisher_change(double laspeyres, double paasche) {
  if (!std::isfinite(laspeyres) || !std::isfinite(paasche))
    throw std::invalid_argument("fisher_change: non-finite input");
  return 0.5 * (laspeyres + paasche);
}

/// Accumulate per-transition changes from a base value.
inline IndexSeries chain(const ChangeSeries& changes, double base_value,
                         IndexMethod method = IndexMethod::FisherChained) {
  if (!changes.epochs.empty() &&
      changes.deltas.size() + 1 != changes.epochs.size())
    throw std::runtime_error("chain: need one delta per transition");
  IndexSeries out;
  out.method = method;
  out.kind = base_value == 0.0 ? SeriesKind::Anomaly : SeriesKind::Level;
  out.epochs = changes.epochs;
  out.base_epoch = changes.epochs.empty() ? 0 : changes.epochs.front();
  CompensatedSum acc;
  acc.add(base_value);
  out.values.push_back(acc.value());
  for (double d : changes.deltas) {
    acc.add(d);
    out.values.push_back(acc.value());
  }
  return out;
}

inline ChangeSeries diff(const IndexSeries& series) {
  ChangeSeries out;
  out.epochs = series.epochs;
  for (std::size_t i = 1; i < series.values.size(); ++i)
    out.deltas.push_back(series.values[i] - series.values[i - 1]);
  return out;
}

enum class FixedBaseEpoch : std::uint8_t { First, Last };

/// Every epoch's temperature weighted by one frozen population grid: the
/// first epoch gives the fixed-base Laspeyres series, the last the
/// fixed-base Paasche series.
inline IndexSeries fixed_base_series(const SnapshotSeries& temps,
                                     const SnapshotSeries& pops,
                                     FixedBaseEpoch which, MaskPolicy policy) {
  temps.validate();
  pops.validate();
  if (temps.epochs != pops.epochs)
    throw GridError("fixed_base_series: temperature and population epochs differ");
  const GridRaster& w = which == FixedBaseEpoch::First ? pops.grids.front()
                                                       : pops.grids.back();
  IndexSeries out;
  out.method = which == FixedBaseEpoch::First ? IndexMethod::LaspeyresFixed
                                              : IndexMethod::PaascheFixed;
  out.kind = SeriesKind::Level;
  out.epochs = temps.epochs;
  out.base_epoch = temps.epochs.front();
  for (const GridRaster& t : temps.grids)
    out.values.push_back(weighted_mean(t, w, policy));
  return out;
}

inline ChangeSeries chained_changes(const SnapshotSeries& temps,
                                    const SnapshotSeries& pops,
                                    IndexMethod method, MaskPolicy policy) {
  temps.validate();
  pops.validate();
  if (temps.epochs != pops.epochs)
    throw GridError("chained_changes: temperature and population epochs differ");
  ChangeSeries out;
  out.epochs = temps.epochs;
  for (std::size_t i = 0; i + 1 < temps.grids.size(); ++i) {
    const GridRaster& t0 = temps.grids[i];
    const GridRaster& t1 = temps.grids[i + 1];
    double d = 0.0;
    switch (method) {
      case IndexMethod::LaspeyresChained:
        d = laspeyres_change(t0, t1, pops.grids[i], policy);
        break;
      case IndexMethod::PaascheChained:
        d = paasche_change(t0, t1, pops.grids[i + 1], policy);
        break;
      case IndexMethod::FisherChained:
        d = fisher_change(laspeyres_change(t0, t1, pops.grids[i], policy),
                          paasche_change(t0, t1, pops.grids[i + 1], policy));
        break;
      default:
        throw std::invalid_argument("chained_changes: method must be chained");
    }
    out.deltas.push_back(d);
  }
  return out;
}

/// Subtract the value at base_epoch everywhere.
inline IndexSeries rebase_anomaly(const IndexSeries& series, int base_epoch) {
  const double base = series.at_epoch(base_epoch);
  IndexSeries out = series;
  out.kind = SeriesKind::Anomaly;
  out.base_epoch = base_epoch;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] -= base;
    if (out.epochs[i] == base_epoch) out.values[i] = 0.0;
  }
  return out;
}

/// Split one naive population-weighted transition into a pure-temperature
/// term (share-weighted warming) and a composition term (temperature-weighted
/// share drift). The split is a first-order approximation; the residual makes
/// it exact.
struct ConflationDecomposition {
  double total = 0.0;
  double pure_temp = 0.0;
  double composition = 0.0;
  double residual = 0.0;
};

inline ConflationDecomposition conflation_decomposition(
    const GridRaster& temp_from, const GridRaster& temp_to,
    const GridRaster& pop_from, const GridRaster& pop_to, MaskPolicy policy) {
  temp_from.require_same_layout(temp_to);
  temp_from.require_same_layout(pop_from);
  temp_from.require_same_layout(pop_to);
  ConflationDecomposition out;
  out.total = weighted_mean(temp_to, pop_to, policy) -
              weighted_mean(temp_from, pop_from, policy);

  auto contributes = [&](std::size_t i) {
    if (policy == MaskPolicy::PaperCompat) return true;
    return temp_from.mask()[i] && temp_to.mask()[i] && pop_from.mask()[i] &&
           pop_to.mask()[i];
  };
  CompensatedSum den_from, den_to;
  for (std::size_t i = 0; i < temp_from.n_cells(); ++i) {
    if (policy == MaskPolicy::PaperCompat) {
      den_from.add(pop_from.mask()[i] ? pop_from.values()[i] : 0.0);
      den_to.add(pop_to.mask()[i] ? pop_to.values()[i] : 0.0);
    } else if (contributes(i)) {
      den_from.add(pop_from.values()[i]);
      den_to.add(pop_to.values()[i]);
    }
  }
  if (den_from.value() <= 0.0 || den_to.value() <= 0.0)
    throw GridError("conflation_decomposition: zero total weight");
  CompensatedSum pure, comp;
  for (std::size_t i = 0; i < temp_from.n_cells(); ++i) {
    if (!contributes(i)) continue;
    const double t0 = temp_from.mask()[i] ? temp_from.values()[i] : 0.0;
    const double t1 = temp_to.mask()[i] ? temp_to.values()[i] : 0.0;
    const double p0 = pop_from.mask()[i] ? pop_from.values()[i] : 0.0;
    const double p1 = pop_to.mask()[i] ? pop_to.values()[i] : 0.0;
    const double s0 = p0 / den_from.value();
    const double s1 = p1 / den_to.value();
    pure.add((t1 - t0) * s0);
    comp.add(t0 * (s1 - s0));
  }
  out.pure_temp = pure.value();
  out.composition = comp.value();
  out.residual = out.total - out.pure_temp - out.composition;
  return out;
}

}  // namespace popclim
