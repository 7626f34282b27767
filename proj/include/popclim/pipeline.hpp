#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "popclim/grid.hpp"
#include "popclim/indices.hpp"
#include "popclim/ingest.hpp"
#include "popclim/migration.hpp"
#include "popclim/urban.hpp"

namespace popclim {

namespace fs = std::filesystem;

/// Full pipeline configuration. Loadable from a flat key=value file; any
/// field can be overridden by a CLI flag.
struct RunConfig {
  std::string area_grid;
  std::map<int, std::string> pop_grids;  // epoch year -> ASCII grid path
  std::string temp_archive;              // CRU-style .dat
  CruLayout cru;
  std::string city_table;
  std::string migration_stocks;
  std::string migration_temps;
  std::string migration_pops;

  std::vector<int> epochs;
  std::size_t aggregation_factor = 1;
  std::size_t window = 21;
  MaskPolicy policy = MaskPolicy::Strict;
  int base_epoch = 0;
  UhiParams uhi;
  int urban_start_epoch = 1950;  // epochs before this carry the unadjusted series
  double histogram_bin_width = 1.0;
  double nodata = -9999.0;
  double temp_scale = 0.1;   // file units (0.1 degC) -> degC
  double temp_offset = 0.0;
  std::string output_dir = "out";

  void validate() const {
    for (std::size_t i = 1; i < epochs.size(); ++i)
      if (epochs[i] <= epochs[i - 1])
        throw std::runtime_error("config: epochs must be strictly increasing");
    if (window % 2 == 0)
      throw std::runtime_error("config: window must be odd");
    uhi.validate();
  }
};

inline std::vector<int> parse_year_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!std::string(detail::trim(tok)).empty())
      out.push_back(std::stoi(std::string(detail::trim(tok))));
  return out;
}

/// Flat key = value file; '#' starts a comment. Unknown keys are rejected so
/// that typos do not silently fall back to defaults.
inline RunConfig load_config(std::istream& in,
                             const std::string& source = "<config>") {
  RunConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view lv = detail::trim(line);
    if (lv.empty() || lv[0] == '#') continue;
    const std::size_t eq = lv.find('=');
    if (eq == std::string_view::npos)
      throw ParseError(source, line_no, 1, "expected key = value");
    const std::string key(detail::trim(lv.substr(0, eq)));
    const std::string val(detail::trim(lv.substr(eq + 1)));
    if (key == "area_grid") cfg.area_grid = val;
    else if (key.starts_with("pop_grid_"))
      cfg.pop_grids[std::stoi(key.substr(9))] = val;
    else if (key == "temp_archive") cfg.temp_archive = val;
    else if (key == "cru_n_lat") cfg.cru.n_lat = std::stoul(val);
    else if (key == "cru_n_cols") cfg.cru.n_cols = std::stoul(val);
    else if (key == "cru_start_year") cfg.cru.start_year = std::stoi(val);
    else if (key == "cru_n_years") cfg.cru.n_years = std::stoul(val);
    else if (key == "city_table") cfg.city_table = val;
    else if (key == "migration_stocks") cfg.migration_stocks = val;
    else if (key == "migration_temps") cfg.migration_temps = val;
    else if (key == "migration_pops") cfg.migration_pops = val;
    else if (key == "epochs") cfg.epochs = parse_year_list(val);
    else if (key == "aggregation_factor") cfg.aggregation_factor = std::stoul(val);
    else if (key == "window") cfg.window = std::stoul(val);
    else if (key == "mask_policy") {
      if (val == "strict") cfg.policy = MaskPolicy::Strict;
      else if (val == "paper_compat") cfg.policy = MaskPolicy::PaperCompat;
      else throw ParseError(source, line_no, 1, "mask_policy must be strict or paper_compat");
    }
    else if (key == "base_epoch") cfg.base_epoch = std::stoi(val);
    else if (key == "uhi_alpha") cfg.uhi.alpha = std::stod(val);
    else if (key == "uhi_beta") cfg.uhi.beta = std::stod(val);
    else if (key == "urban_start_epoch") cfg.urban_start_epoch = std::stoi(val);
    else if (key == "histogram_bin_width") cfg.histogram_bin_width = std::stod(val);
    else if (key == "nodata") cfg.nodata = std::stod(val);
    else if (key == "temp_scale") cfg.temp_scale = std::stod(val);
    else if (key == "temp_offset") cfg.temp_offset = std::stod(val);
    else if (key == "output_dir") cfg.output_dir = val;
    else throw ParseError(source, line_no, 1, "unknown config key '" + key + "'");
  }
  return cfg;
}

inline RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  return load_config(in, path);
}

namespace detail {

inline std::uint64_t fnv1a64_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::uint64_t h = 1469598103934665603ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    const auto n = static_cast<std::size_t>(in.gcount());
    for (std::size_t i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

/// Removes files it registered unless release() was called, so a failed
/// command leaves no partial outputs behind.
class OutputGuard {
public:
  ~OutputGuard() {
    if (released_) return;
    std::error_code ec;
    for (const fs::path& p : paths_) fs::remove(p, ec);
  }
  void track(const fs::path& p) { paths_.push_back(p); }
  void release() { released_ = true; }

private:
  std::vector<fs::path> paths_;
  bool released_ = false;
};

}  // namespace detail

struct PreparedBundle {
  GridRaster area;
  SnapshotSeries population;
  SnapshotSeries temperature;  // centered-mean degC at the configured epochs
};

inline fs::path prepared_dir(const RunConfig& cfg) {
  return fs::path(cfg.output_dir) / "prepared";
}

/// Ingest the raw inputs, aggregate and reorient them onto the common grid,
/// and write the per-epoch prepared grids plus a checksum manifest.
/// Deterministic: re-running writes byte-identical files.
inline PreparedBundle cmd_prepare(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.epochs.empty()) throw std::runtime_error("config: no epochs configured");
  PreparedBundle bundle;

  // area
  GridRaster area_fine = parse_ascii_grid_file(cfg.area_grid, cfg.nodata);
  GridRaster area = aggregate_blocks(area_fine, cfg.aggregation_factor, Reducer::Sum);
  bundle.area = reorient(area, Orientation::SouthToNorth);

  // population per epoch
  for (int epoch : cfg.epochs) {
    auto it = cfg.pop_grids.find(epoch);
    if (it == cfg.pop_grids.end())
      throw std::runtime_error("config: no population grid for epoch " +
                               std::to_string(epoch));
    GridRaster fine = parse_ascii_grid_file(it->second, cfg.nodata);
    GridRaster coarse = aggregate_blocks(fine, cfg.aggregation_factor, Reducer::Sum);
    bundle.population.epochs.push_back(epoch);
    bundle.population.grids.push_back(reorient(coarse, Orientation::SouthToNorth));
  }
  bundle.population.validate();

  // temperature: streaming annual means, then centered means at the epochs
  {
    std::ifstream in(cfg.temp_archive);
    if (!in) throw std::runtime_error("cannot open " + cfg.temp_archive);
    SnapshotSeries annual = parse_cru_annual(in, cfg.cru, cfg.temp_archive);
    bundle.temperature = centered_mean(annual, cfg.epochs, cfg.window);
  }
  for (GridRaster& g : bundle.temperature.grids)
    g = convert_units(g, cfg.temp_scale, cfg.temp_offset);

  if (!bundle.temperature.grids.front().same_layout(bundle.area))
    throw GridError("prepared grids disagree on geometry: area vs temperature");
  if (!bundle.population.grids.front().same_layout(bundle.area))
    throw GridError("prepared grids disagree on geometry: area vs population");

  // write bundle + manifest
  detail::OutputGuard guard;
  const fs::path dir = prepared_dir(cfg);
  fs::create_directories(dir);
  std::vector<std::pair<std::string, fs::path>> files;
  auto write_grid = [&](const std::string& name, const GridRaster& g) {
    const fs::path p = dir / name;
    guard.track(p);
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    write_ascii_grid(os, g, cfg.nodata);
    files.emplace_back(name, p);
  };
  write_grid("area.asc", bundle.area);
  for (std::size_t i = 0; i < cfg.epochs.size(); ++i) {
    write_grid("pop_" + std::to_string(cfg.epochs[i]) + ".asc",
               bundle.population.grids[i]);
    write_grid("temp_" + std::to_string(cfg.epochs[i]) + ".asc",
               bundle.temperature.grids[i]);
  }
  {
    const fs::path mp = dir / "manifest.txt";
    guard.track(mp);
    std::ofstream os(mp, std::ios::binary);
    for (const auto& [name, p] : files) {
      char hex[24];
      std::snprintf(hex, sizeof hex, "%016llx",
                    static_cast<unsigned long long>(detail::fnv1a64_file(p)));
      os << name << ' ' << fs::file_size(p) << ' ' << hex << '\n';
    }
  }
  guard.release();
  return bundle;
}

/// Read a previously prepared bundle back from disk.
inline PreparedBundle load_prepared(const RunConfig& cfg) {
  const fs::path dir = prepared_dir(cfg);
  if (!fs::exists(dir / "manifest.txt"))
    throw std::runtime_error("prepared bundle missing: run 'prepare' first (" +
                             (dir / "manifest.txt").string() + " not found)");
  PreparedBundle bundle;
  auto read_grid = [&](const std::string& name) {
    GridRaster g = parse_ascii_grid_file((dir / name).string(), cfg.nodata);
    return reorient(g, Orientation::SouthToNorth);
  };
  bundle.area = read_grid("area.asc");
  for (int epoch : cfg.epochs) {
    bundle.population.epochs.push_back(epoch);
    bundle.population.grids.push_back(
        read_grid("pop_" + std::to_string(epoch) + ".asc"));
    bundle.temperature.epochs.push_back(epoch);
    bundle.temperature.grids.push_back(
        read_grid("temp_" + std::to_string(epoch) + ".asc"));
  }
  return bundle;
}

namespace detail {

class CsvWriter {
public:
  CsvWriter(OutputGuard& guard, const fs::path& path) : os_(path, std::ios::binary) {
    guard.track(path);
    if (!os_) throw std::runtime_error("cannot write " + path.string());
  }
  void meta(const std::string& line) { os_ << "# " << line << '\n'; }
  void header(const std::string& line) { os_ << line << '\n'; }
  void begin_row() { first_ = true; }
  void field(const std::string& s) { sep(); os_ << s; }
  void field(int v) { sep(); os_ << v; }
  void field(double v) {
    sep();
    std::string buf;
    format_17g(buf, v);
    os_ << buf;
  }
  void end_row() { os_ << '\n'; }

private:
  void sep() {
    if (!first_) os_ << ',';
    first_ = false;
  }
  std::ofstream os_;
  bool first_ = true;
};

}  // namespace detail

struct IndicesResult {
  IndexSeries area, naive, lasp_fixed, paas_fixed;
  IndexSeries lasp_chained, paas_chained, fisher_chained;
  ChangeSeries lasp_changes, paas_changes, fisher_changes;
  std::vector<ConflationDecomposition> decompositions;  // per transition
};

inline IndicesResult compute_indices(const PreparedBundle& b, MaskPolicy policy,
                                     int base_epoch) {
  IndicesResult r;
  r.area = rebase_anomaly(area_series(b.temperature, b.area, policy), base_epoch);
  r.naive = rebase_anomaly(naive_pop_series(b.temperature, b.population, policy),
                           base_epoch);
  r.lasp_fixed = rebase_anomaly(
      fixed_base_series(b.temperature, b.population, FixedBaseEpoch::First, policy),
      base_epoch);
  r.paas_fixed = rebase_anomaly(
      fixed_base_series(b.temperature, b.population, FixedBaseEpoch::Last, policy),
      base_epoch);
  r.lasp_changes = chained_changes(b.temperature, b.population,
                                   IndexMethod::LaspeyresChained, policy);
  r.paas_changes = chained_changes(b.temperature, b.population,
                                   IndexMethod::PaascheChained, policy);
  r.fisher_changes.epochs = r.lasp_changes.epochs;
  for (std::size_t i = 0; i < r.lasp_changes.deltas.size(); ++i)
    r.fisher_changes.deltas.push_back(
        fisher_change(r.lasp_changes.deltas[i], r.paas_changes.deltas[i]));
  r.lasp_chained = rebase_anomaly(
      chain(r.lasp_changes, 0.0, IndexMethod::LaspeyresChained), base_epoch);
  r.paas_chained = rebase_anomaly(
      chain(r.paas_changes, 0.0, IndexMethod::PaascheChained), base_epoch);
  r.fisher_chained = rebase_anomaly(
      chain(r.fisher_changes, 0.0, IndexMethod::FisherChained), base_epoch);
  for (std::size_t i = 0; i + 1 < b.temperature.grids.size(); ++i)
    r.decompositions.push_back(conflation_decomposition(
        b.temperature.grids[i], b.temperature.grids[i + 1],
        b.population.grids[i], b.population.grids[i + 1], policy));
  return r;
}

/// Emit indices.csv, changes.csv and decomposition.csv for the prepared
/// bundle: all seven anomaly series, the per-transition changes, and the
/// conflation decomposition of the naive series.
inline IndicesResult cmd_indices(const RunConfig& cfg) {
  cfg.validate();
  const PreparedBundle bundle = load_prepared(cfg);
  const IndicesResult r = compute_indices(bundle, cfg.policy, cfg.base_epoch);

  detail::OutputGuard guard;
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  const std::string meta = "mask_policy=" + std::string(to_string(cfg.policy)) +
                           " base_epoch=" + std::to_string(cfg.base_epoch);
  {
    detail::CsvWriter csv(guard, dir / "indices.csv");
    csv.meta("temperature anomalies (degC) " + meta);
    csv.header("epoch,area,naive_pop,laspeyres_fixed,paasche_fixed,"
               "laspeyres_chained,paasche_chained,fisher_chained");
    for (std::size_t i = 0; i < r.area.epochs.size(); ++i) {
      csv.begin_row();
      csv.field(r.area.epochs[i]);
      csv.field(r.area.values[i]);
      csv.field(r.naive.values[i]);
      csv.field(r.lasp_fixed.values[i]);
      csv.field(r.paas_fixed.values[i]);
      csv.field(r.lasp_chained.values[i]);
      csv.field(r.paas_chained.values[i]);
      csv.field(r.fisher_chained.values[i]);
      csv.end_row();
    }
  }
  {
    detail::CsvWriter csv(guard, dir / "changes.csv");
    csv.meta("per-transition changes (degC) " + meta);
    csv.header("epoch_from,epoch_to,laspeyres,paasche,fisher,naive,area");
    for (std::size_t i = 0; i + 1 < r.area.epochs.size(); ++i) {
      csv.begin_row();
      csv.field(r.area.epochs[i]);
      csv.field(r.area.epochs[i + 1]);
      csv.field(r.lasp_changes.deltas[i]);
      csv.field(r.paas_changes.deltas[i]);
      csv.field(r.fisher_changes.deltas[i]);
      csv.field(r.naive.values[i + 1] - r.naive.values[i]);
      csv.field(r.area.values[i + 1] - r.area.values[i]);
      csv.end_row();
    }
  }
  {
    detail::CsvWriter csv(guard, dir / "decomposition.csv");
    csv.meta("naive-series conflation decomposition (degC) " + meta);
    csv.header("epoch_from,epoch_to,total,pure_temp,composition,residual");
    for (std::size_t i = 0; i < r.decompositions.size(); ++i) {
      const ConflationDecomposition& d = r.decompositions[i];
      csv.begin_row();
      csv.field(r.area.epochs[i]);
      csv.field(r.area.epochs[i + 1]);
      csv.field(d.total);
      csv.field(d.pure_temp);
      csv.field(d.composition);
      csv.field(d.residual);
      csv.end_row();
    }
  }
  guard.release();
  return r;
}

struct UrbanResult {
  std::vector<int> epochs;
  std::vector<double> adjusted;   // anomaly
  std::vector<double> base;       // anomaly
  std::vector<double> difference;
  std::vector<double> urban_share;     // 0 before urban data start
  std::vector<double> mean_urban_uhi;  // 0 before urban data start
};

/// Chained Fisher anomalies with and without the urban-heat-island term.
/// Epochs before the urban data start carry the unadjusted series.
inline UrbanResult compute_urban(const PreparedBundle& bundle,
                                 const CityTable& cities, const RunConfig& cfg) {
  // subseries of epochs with urban data
  std::vector<int> uepochs;
  for (int e : cfg.epochs)
    if (e >= cfg.urban_start_epoch &&
        std::find(cities.epochs.begin(), cities.epochs.end(), e) !=
            cities.epochs.end())
      uepochs.push_back(e);

  const ChangeSeries base_changes = chained_changes(
      bundle.temperature, bundle.population, IndexMethod::FisherChained, cfg.policy);
  const IndexSeries base_anom = rebase_anomaly(
      chain(base_changes, 0.0, IndexMethod::FisherChained), cfg.base_epoch);

  UrbanResult out;
  out.epochs = cfg.epochs;
  out.base = base_anom.values;
  out.adjusted = base_anom.values;
  out.difference.assign(cfg.epochs.size(), 0.0);
  out.urban_share.assign(cfg.epochs.size(), 0.0);
  out.mean_urban_uhi.assign(cfg.epochs.size(), 0.0);
  if (uepochs.size() < 1) return out;

  SnapshotSeries utemps, upops;
  std::vector<UrbanGridEpoch> urban;
  for (int e : uepochs) {
    utemps.epochs.push_back(e);
    utemps.grids.push_back(bundle.temperature.at_epoch(e));
    upops.epochs.push_back(e);
    upops.grids.push_back(bundle.population.at_epoch(e));
    urban.push_back(build_urban_epoch(cities, bundle.population.at_epoch(e), e,
                                      cfg.uhi));
  }
  const UhiAdjustedResult adj = uhi_adjusted_changes(
      utemps, upops, urban, UhiIndexMethod::Fisher, cfg.policy);

  // splice: the difference accumulates over urban-data transitions only and
  // is carried flat before the first and after the last urban epoch
  CompensatedSum cum;
  std::size_t next_urban = 0;
  for (std::size_t g = 0; g < cfg.epochs.size(); ++g) {
    if (next_urban < uepochs.size() && cfg.epochs[g] == uepochs[next_urban]) {
      if (next_urban > 0) cum.add(adj.uhi_component.deltas[next_urban - 1]);
      out.urban_share[g] = adj.urban_share[next_urban];
      out.mean_urban_uhi[g] = adj.mean_urban_uhi[next_urban];
      ++next_urban;
    }
    out.difference[g] = cum.value();
  }
  for (std::size_t g = 0; g < cfg.epochs.size(); ++g)
    out.adjusted[g] = out.base[g] + out.difference[g];
  return out;
}

inline UrbanResult cmd_urban(const RunConfig& cfg) {
  cfg.validate();
  const PreparedBundle bundle = load_prepared(cfg);
  std::ifstream in(cfg.city_table);
  if (!in) throw std::runtime_error("cannot open city table " + cfg.city_table);
  const CityTable cities = parse_city_table(in, cfg.city_table);
  const UrbanResult r = compute_urban(bundle, cities, cfg);

  detail::OutputGuard guard;
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  detail::CsvWriter csv(guard, dir / "urban.csv");
  csv.meta("chained Fisher anomalies with and without urban heat island (degC)"
           " mask_policy=" + std::string(to_string(cfg.policy)) +
           " base_epoch=" + std::to_string(cfg.base_epoch));
  csv.header("epoch,fisher_adjusted,fisher_base,uhi_difference,"
             "urban_share,mean_urban_uhi");
  for (std::size_t i = 0; i < r.epochs.size(); ++i) {
    csv.begin_row();
    csv.field(r.epochs[i]);
    csv.field(r.adjusted[i]);
    csv.field(r.base[i]);
    csv.field(r.difference[i]);
    csv.field(r.urban_share[i]);
    csv.field(r.mean_urban_uhi[i]);
    csv.end_row();
  }
  guard.release();
  return r;
}

struct MigrationResult {
  std::vector<MigrationSummary> transitions;
  std::vector<double> cumulative_adjustment;
  ExperiencedHistogram stock_histogram;  // full stock at the final epoch
  int stock_epoch = 0;
};

inline MigrationResult compute_migration(const MigrationStockTable& table,
                                         double bin_width) {
  MigrationResult out;
  CompensatedSum cum;
  for (std::size_t i = 0; i + 1 < table.epochs.size(); ++i) {
    out.transitions.push_back(summarize_transition(
        table, table.epochs[i], table.epochs[i + 1], bin_width));
    cum.add(out.transitions.back().adjustment);
    out.cumulative_adjustment.push_back(cum.value());
  }
  out.stock_epoch = table.epochs.back();
  out.stock_histogram =
      experienced_histogram_stock(table, out.stock_epoch, bin_width);
  return out;
}

inline MigrationResult cmd_migration(const RunConfig& cfg) {
  cfg.validate();
  std::ifstream stocks(cfg.migration_stocks);
  if (!stocks)
    throw std::runtime_error("cannot open " + cfg.migration_stocks);
  std::ifstream temps(cfg.migration_temps);
  if (!temps) throw std::runtime_error("cannot open " + cfg.migration_temps);
  std::optional<std::ifstream> pops;
  if (!cfg.migration_pops.empty()) {
    pops.emplace(cfg.migration_pops);
    if (!*pops) throw std::runtime_error("cannot open " + cfg.migration_pops);
  }
  const MigrationStockTable table = parse_migration_tables(
      stocks, temps, pops ? &*pops : nullptr, cfg.migration_stocks,
      cfg.migration_temps, cfg.migration_pops);
  const MigrationResult r = compute_migration(table, cfg.histogram_bin_width);

  detail::OutputGuard guard;
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  {
    detail::CsvWriter csv(guard, dir / "migration.csv");
    csv.meta("per-transition migration-experienced temperature change (degC)");
    csv.header("epoch_from,epoch_to,total_migrants,mean_delta,migrant_share,"
               "adjustment,cumulative_adjustment,clamped_stock_decline");
    for (std::size_t i = 0; i < r.transitions.size(); ++i) {
      const MigrationSummary& s = r.transitions[i];
      csv.begin_row();
      csv.field(s.epoch_from);
      csv.field(s.epoch_to);
      csv.field(s.total_migrants);
      csv.field(s.mean_delta);
      csv.field(s.migrant_share);
      csv.field(s.adjustment);
      csv.field(r.cumulative_adjustment[i]);
      csv.field(s.clamped_total);
      csv.end_row();
    }
  }
  {
    detail::CsvWriter csv(guard, dir / "migration_histogram.csv");
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "migrant stock at epoch %d; share_abs_le_2=%.6g "
                  "share_abs_ge_10=%.6g share_negative=%.6g",
                  r.stock_epoch, r.stock_histogram.share_abs_le_2,
                  r.stock_histogram.share_abs_ge_10,
                  r.stock_histogram.share_negative);
    csv.meta(buf);
    csv.header("bin_lower,bin_upper,count,share");
    for (const HistogramBin& b : r.stock_histogram.bins) {
      csv.begin_row();
      csv.field(b.lower);
      csv.field(b.upper);
      csv.field(b.count);
      csv.field(b.share);
      csv.end_row();
    }
  }
  guard.release();
  return r;
}

}  // namespace popclim
