#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "popclim/ingest.hpp"
#include "popclim/sum.hpp"

namespace popclim {

/// Origin x destination migrant flows for one transition, with the country
/// temperatures at both endpoints.
struct FlowMatrix {
  int epoch_from = 0;
  int epoch_to = 0;
  std::vector<std::string> countries;
  std::vector<double> flows;  // row-major origin x destination, diagonal zero
  std::vector<double> country_temps_from;
  std::vector<double> country_temps_to;
  /// Total stock decline clamped to zero when differencing stocks
  /// (return migration and mortality).
  double clamped_total = 0.0;

  std::size_t n() const { return countries.size(); }
  double flow(std::size_t o, std::size_t d) const { return flows[o * n() + d]; }

  double total_flow() const {
    CompensatedSum s;
    for (double f : flows) s.add(f);
    return s.value();
  }
};

/// Difference two stock snapshots into flows; negative stock changes are
/// clamped to zero and their total reported on the matrix.
inline FlowMatrix stocks_to_flows(const MigrationStockTable& table,
                                  int epoch_from, int epoch_to) {
  auto it_from = table.stocks.find(epoch_from);
  auto it_to = table.stocks.find(epoch_to);
  if (it_from == table.stocks.end() || it_to == table.stocks.end())
    throw std::runtime_error("stocks_to_flows: epoch not present in stock table");
  const std::size_t n = table.n_countries();
  FlowMatrix out;
  out.epoch_from = epoch_from;
  out.epoch_to = epoch_to;
  out.countries = table.countries;
  out.flows.assign(n * n, 0.0);
  CompensatedSum clamped;
  for (std::size_t o = 0; o < n; ++o) {
    for (std::size_t d = 0; d < n; ++d) {
      if (o == d) continue;
      const double df = it_to->second[o * n + d] - it_from->second[o * n + d];
      if (df >= 0.0)
        out.flows[o * n + d] = df;
      else
        clamped.add(-df);
    }
  }
  out.clamped_total = clamped.value();
  out.country_temps_from = table.country_temp.at(epoch_from);
  out.country_temps_to = table.country_temp.at(epoch_to);
  return out;
}

/// Mean temperature change experienced by migrants:
/// sum((T_dest,to - T_origin,from) * flow) / sum(flow).
/// Undefined (nullopt) when no one moved.
inline std::optional<double> migration_delta(const FlowMatrix& flows) {
  const std::size_t n = flows.n();
  CompensatedSum num, den;
  for (std::size_t o = 0; o < n; ++o) {
    for (std::size_t d = 0; d < n; ++d) {
      const double f = flows.flows[o * n + d];
      if (f == 0.0) continue;
      num.add((flows.country_temps_to[d] - flows.country_temps_from[o]) * f);
      den.add(f);
    }
  }
  if (den.value() <= 0.0) return std::nullopt;
  return num.value() / den.value();
}

/// Dilute the migrant-experienced change by the migrating share of the world
/// population.
inline double migration_adjustment(double delta, double total_migrants,
                                   double world_pop) {
  if (world_pop <= 0.0)
    throw std::invalid_argument("migration_adjustment: world population must be positive");
  return delta * (total_migrants / world_pop);
}

struct HistogramBin {
  double lower = 0.0;  // degC, inclusive
  double upper = 0.0;  // degC, exclusive
  double count = 0.0;  // persons
  double share = 0.0;
};

struct ExperiencedHistogram {
  std::vector<HistogramBin> bins;
  double total = 0.0;
  /// Summary shares for comparison with the reported headline figures.
  double share_abs_le_2 = 0.0;
  double share_abs_ge_10 = 0.0;
  double share_negative = 0.0;
};

namespace detail {

inline ExperiencedHistogram bin_deltas(
    const std::vector<std::pair<double, double>>& delta_count,
    double bin_width) {
  if (bin_width <= 0.0)
    throw std::invalid_argument("experienced_histogram: bin width must be positive");
  ExperiencedHistogram out;
  if (delta_count.empty()) return out;
  double lo = delta_count.front().first, hi = lo;
  for (const auto& [d, c] : delta_count) {
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  const auto first_bin = static_cast<long>(std::floor(lo / bin_width));
  const auto last_bin = static_cast<long>(std::floor(hi / bin_width));
  out.bins.resize(static_cast<std::size_t>(last_bin - first_bin + 1));
  for (std::size_t i = 0; i < out.bins.size(); ++i) {
    out.bins[i].lower = static_cast<double>(first_bin + static_cast<long>(i)) *
                        bin_width;
    out.bins[i].upper = out.bins[i].lower + bin_width;
  }
  CompensatedSum total, le2, ge10, neg;
  for (const auto& [d, c] : delta_count) {
    auto b = static_cast<long>(std::floor(d / bin_width)) - first_bin;
    out.bins[static_cast<std::size_t>(b)].count += c;
    total.add(c);
    if (std::abs(d) <= 2.0) le2.add(c);
    if (std::abs(d) >= 10.0) ge10.add(c);
    if (d < 0.0) neg.add(c);
  }
  out.total = total.value();
  if (out.total > 0.0) {
    for (HistogramBin& b : out.bins) b.share = b.count / out.total;
    out.share_abs_le_2 = le2.value() / out.total;
    out.share_abs_ge_10 = ge10.value() / out.total;
    out.share_negative = neg.value() / out.total;
  }
  return out;
}

}  // namespace detail

/// Histogram of experienced temperature change over decadal flows.
inline ExperiencedHistogram experienced_histogram(const FlowMatrix& flows,
                                                  double bin_width) {
  std::vector<std::pair<double, double>> dc;
  const std::size_t n = flows.n();
  for (std::size_t o = 0; o < n; ++o)
    for (std::size_t d = 0; d < n; ++d) {
      const double f = flows.flows[o * n + d];
      if (f == 0.0) continue;
      dc.emplace_back(flows.country_temps_to[d] - flows.country_temps_from[o],
                      f);
    }
  return detail::bin_deltas(dc, bin_width);
}

/// Histogram of experienced temperature change over the full migrant stock
/// at one epoch, both endpoints evaluated at that epoch's temperatures.
inline ExperiencedHistogram experienced_histogram_stock(
    const MigrationStockTable& table, int epoch, double bin_width) {
  auto it = table.stocks.find(epoch);
  if (it == table.stocks.end())
    throw std::runtime_error("experienced_histogram_stock: epoch not present");
  const std::vector<double>& temps = table.country_temp.at(epoch);
  const std::size_t n = table.n_countries();
  std::vector<std::pair<double, double>> dc;
  for (std::size_t o = 0; o < n; ++o)
    for (std::size_t d = 0; d < n; ++d) {
      const double s = it->second[o * n + d];
      if (s == 0.0) continue;
      dc.emplace_back(temps[d] - temps[o], s);
    }
  return detail::bin_deltas(dc, bin_width);
}

struct MigrationSummary {
  int epoch_from = 0;
  int epoch_to = 0;
  double total_migrants = 0.0;
  double mean_delta = 0.0;       // degC; 0 when no migrants
  bool delta_defined = false;
  double migrant_share = 0.0;
  double adjustment = 0.0;       // degC
  double clamped_total = 0.0;
  ExperiencedHistogram histogram;
};

/// Full per-transition summary: flows, experienced change, dilution by the
/// world-population share, and the flow histogram.
inline MigrationSummary summarize_transition(const MigrationStockTable& table,
                                             int epoch_from, int epoch_to,
                                             double bin_width) {
  FlowMatrix flows = stocks_to_flows(table, epoch_from, epoch_to);
  MigrationSummary out;
  out.epoch_from = epoch_from;
  out.epoch_to = epoch_to;
  out.total_migrants = flows.total_flow();
  out.clamped_total = flows.clamped_total;
  if (auto d = migration_delta(flows)) {
    out.mean_delta = *d;
    out.delta_defined = true;
  }
  auto pops = table.country_pop.find(epoch_to);
  if (pops != table.country_pop.end()) {
    CompensatedSum world;
    for (double p : pops->second) world.add(p);
    if (world.value() > 0.0) {
      out.migrant_share = out.total_migrants / world.value();
      out.adjustment = out.delta_defined
                           ? migration_adjustment(out.mean_delta,
                                                  out.total_migrants,
                                                  world.value())
                           : 0.0;
    }
  }
  out.histogram = experienced_histogram(flows, bin_width);
  return out;
}

}  // namespace popclim
