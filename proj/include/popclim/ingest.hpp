#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "popclim/grid.hpp"

namespace popclim {

/// Parse failure with file position. what() carries "<source>:<line>:<col>".
class ParseError : public std::runtime_error {
public:
  ParseError(std::string source, std::size_t line, std::size_t col,
             const std::string& message)
      : std::runtime_error(source + ":" + std::to_string(line) + ":" +
                           std::to_string(col) + ": " + message),
        source_(std::move(source)),
        line_(line),
        col_(col) {}

  const std::string& source() const { return source_; }
  std::size_t line() const { return line_; }
  std::size_t col() const { return col_; }

private:
  std::string source_;
  std::size_t line_;
  std::size_t col_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

inline double parse_double(std::string_view tok, const std::string& source,
                           std::size_t line, std::size_t col) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last)
    throw ParseError(source, line, col,
                     "unparseable number '" + std::string(tok) + "'");
  return v;
}

/// Split a line on whitespace, invoking fn(token, column) per token.
template <class Fn>
void for_each_token(std::string_view line, Fn&& fn) {
  std::size_t i = 0;
  const std::size_t n = line.size();
  while (i < n) {
    while (i < n && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= n) break;
    const std::size_t start = i;
    while (i < n && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    fn(line.substr(start, i - start), start + 1);
  }
}

/// Minimal CSV field splitter with double-quote support.
inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline void format_17g(std::string& out, double v) {
  char buf[40];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  out.append(buf, static_cast<std::size_t>(n));
}

}  // namespace detail

struct GridGeometry {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  double south_lat_center = 0.0;
  double west_lon_center = 0.0;
  double cell_size = 0.0;
};

/// Read an ASCII grid: optional 6-line ESRI-style header
/// (ncols/nrows/xllcorner/yllcorner/cellsize/NODATA_value) followed by one
/// row of whitespace-separated values per line, north to south. Headerless
/// files need caller-supplied geometry. The header's nodata sentinel, when
/// present, overrides the argument.
inline GridRaster parse_ascii_grid(std::istream& in, double nodata,
                                   const std::optional<GridGeometry>& geom = {},
                                   const std::string& source = "<ascii-grid>") {
  std::string line;
  std::size_t line_no = 0;
  GridGeometry g;
  bool have_header = false;
  double header_nodata = nodata;

  // Peek the first line to decide headered vs headerless.
  std::streampos body_start = in.tellg();
  if (!std::getline(in, line))
    throw ParseError(source, 1, 1, "empty file");
  ++line_no;
  std::string_view first = detail::trim(line);
  if (!first.empty() && (first[0] == 'n' || first[0] == 'N')) {
    have_header = true;
    auto header_value = [&](std::string_view expect_key) -> double {
      std::string_view lv = detail::trim(line);
      std::size_t sp = 0;
      while (sp < lv.size() && !std::isspace(static_cast<unsigned char>(lv[sp])))
        ++sp;
      std::string key(lv.substr(0, sp));
      std::transform(key.begin(), key.end(), key.begin(),
                     [](unsigned char c) { return std::tolower(c); });
      if (key != expect_key)
        throw ParseError(source, line_no, 1,
                         "expected header key '" + std::string(expect_key) +
                             "', found '" + key + "'");
      std::string_view rest = detail::trim(lv.substr(sp));
      return detail::parse_double(rest, source, line_no, sp + 1);
    };
    g.n_cols = static_cast<std::size_t>(header_value("ncols"));
    for (std::string_view key : {"nrows", "xllcorner", "yllcorner", "cellsize",
                                 "nodata_value"}) {
      if (!std::getline(in, line))
        throw ParseError(source, line_no + 1, 1, "truncated header");
      ++line_no;
      const double v = header_value(key);
      if (key == "nrows") g.n_rows = static_cast<std::size_t>(v);
      else if (key == "xllcorner") g.west_lon_center = v;
      else if (key == "yllcorner") g.south_lat_center = v;
      else if (key == "cellsize") g.cell_size = v;
      else header_nodata = v;
    }
    // corner coordinates -> cell centers
    g.west_lon_center += g.cell_size / 2.0;
    g.south_lat_center += g.cell_size / 2.0;
  } else if (geom) {
    g = *geom;
  } else {
    throw ParseError(source, 1, 1,
                     "headerless grid requires caller-supplied dimensions");
  }

  GridRaster out(g.n_rows, g.n_cols, g.south_lat_center, g.west_lon_center,
                 g.cell_size, Orientation::NorthToSouth);
  std::size_t row = 0;
  if (!have_header) {
    in.clear();
    in.seekg(body_start);
    line_no = 0;
  }
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view lv = detail::trim(line);
    if (lv.empty()) continue;
    if (row >= g.n_rows)
      throw ParseError(source, line_no, 1,
                       "more data rows than declared nrows=" +
                           std::to_string(g.n_rows));
    std::size_t col = 0;
    std::size_t err_col = 0;
    std::string err_msg;
    detail::for_each_token(lv, [&](std::string_view tok, std::size_t pos) {
      if (!err_msg.empty()) return;
      if (col >= g.n_cols) {
        err_col = pos;
        err_msg = "row has more than " + std::to_string(g.n_cols) + " fields";
        return;
      }
      const double v = detail::parse_double(tok, source, line_no, pos);
      if (v == header_nodata) {
        out.set_masked(row, col);
        out.at(row, col) = 0.0;
      } else {
        out.set(row, col, v);
      }
      ++col;
    });
    if (!err_msg.empty()) throw ParseError(source, line_no, err_col, err_msg);
    if (col != g.n_cols)
      throw ParseError(source, line_no, 1,
                       "ragged row: expected " + std::to_string(g.n_cols) +
                           " fields, found " + std::to_string(col));
    ++row;
  }
  if (row != g.n_rows)
    throw ParseError(source, line_no + 1, 1,
                     "expected " + std::to_string(g.n_rows) +
                         " data rows, found " + std::to_string(row));
  return out;
}

inline GridRaster parse_ascii_grid_file(const std::string& path, double nodata,
                                        const std::optional<GridGeometry>& geom = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_ascii_grid(in, nodata, geom, path);
}

/// Write a grid in headered ASCII form, rows north to south, values at 17
/// significant digits so that parse(write(g)) == g.
inline void write_ascii_grid(std::ostream& os, const GridRaster& g,
                             double nodata) {
  const GridRaster& ns = g.orientation() == Orientation::NorthToSouth
                             ? g
                             : reorient(g, Orientation::NorthToSouth);
  std::string buf;
  buf.reserve(ns.n_cols() * 20);
  os << "ncols " << ns.n_cols() << "\n";
  os << "nrows " << ns.n_rows() << "\n";
  buf.clear();
  buf += "xllcorner ";
  detail::format_17g(buf, ns.west_lon() - ns.cell_size() / 2.0);
  buf += "\nyllcorner ";
  detail::format_17g(buf, ns.south_lat() - ns.cell_size() / 2.0);
  buf += "\ncellsize ";
  detail::format_17g(buf, ns.cell_size());
  buf += "\nNODATA_value ";
  detail::format_17g(buf, nodata);
  buf += "\n";
  os << buf;
  for (std::size_t r = 0; r < ns.n_rows(); ++r) {
    buf.clear();
    for (std::size_t c = 0; c < ns.n_cols(); ++c) {
      if (c) buf += ' ';
      if (ns.valid(r, c))
        detail::format_17g(buf, ns.at(r, c));
      else
        detail::format_17g(buf, nodata);
    }
    buf += '\n';
    os << buf;
  }
}

struct CruLayout {
  std::size_t n_lat = 0;
  std::size_t n_cols = 0;
  int start_year = 0;
  std::size_t n_years = 0;
  double sentinel = -999.0;
};

/// Stream a CRU-style .dat file row by row. Line l (0-based) holds latitude
/// band l % n_lat (south to north) of month (l / n_lat) % 12 of year
/// l / (n_lat * 12). Values are in 0.1 degC; the sentinel marks missing.
/// fn(year_idx, month_idx, lat_idx, values, valid) is called once per line.
template <class Fn>
void parse_cru_rows(std::istream& in, const CruLayout& layout,
                    const std::string& source, Fn&& fn) {
  const std::size_t expect_lines = layout.n_lat * 12 * layout.n_years;
  std::string line;
  std::size_t line_no = 0;
  std::size_t data_line = 0;
  std::vector<double> vals(layout.n_cols);
  std::vector<std::uint8_t> valid(layout.n_cols);
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view lv = detail::trim(line);
    if (lv.empty()) continue;
    if (data_line >= expect_lines)
      throw ParseError(source, line_no, 1,
                       "expected " + std::to_string(expect_lines) +
                           " data rows, found more");
    std::size_t col = 0;
    std::size_t err_col = 0;
    std::string err_msg;
    detail::for_each_token(lv, [&](std::string_view tok, std::size_t pos) {
      if (!err_msg.empty()) return;
      if (col >= layout.n_cols) {
        err_col = pos;
        err_msg = "row has more than " + std::to_string(layout.n_cols) +
                  " fields";
        return;
      }
      const double v = detail::parse_double(tok, source, line_no, pos);
      if (v == layout.sentinel) {
        vals[col] = 0.0;
        valid[col] = 0;
      } else {
        vals[col] = v;
        valid[col] = 1;
      }
      ++col;
    });
    if (!err_msg.empty()) throw ParseError(source, line_no, err_col, err_msg);
    if (col != layout.n_cols)
      throw ParseError(source, line_no, 1,
                       "expected " + std::to_string(layout.n_cols) +
                           " fields, found " + std::to_string(col));
    const std::size_t lat = data_line % layout.n_lat;
    const std::size_t month = (data_line / layout.n_lat) % 12;
    const std::size_t year = data_line / (layout.n_lat * 12);
    fn(year, month, lat, vals, valid);
    ++data_line;
  }
  if (data_line != expect_lines)
    throw ParseError(source, line_no + 1, 1,
                     "expected " + std::to_string(expect_lines) +
                         " data rows, found " + std::to_string(data_line));
}

/// Materialize a full monthly archive (values kept in 0.1 degC as parsed;
/// unit conversion is a separate step). Grids are south-to-north, matching
/// the file's latitude order.
inline MonthlyArchive parse_cru_dat(std::istream& in, const CruLayout& layout,
                                    const std::string& source = "<cru-dat>") {
  MonthlyArchive archive;
  archive.start_year = layout.start_year;
  archive.n_years = layout.n_years;
  const double cell = 180.0 / static_cast<double>(layout.n_lat);
  for (std::size_t i = 0; i < layout.n_years * 12; ++i)
    archive.grids.emplace_back(layout.n_lat, layout.n_cols, -90.0 + cell / 2.0,
                               -180.0 + cell / 2.0, cell,
                               Orientation::SouthToNorth);
  parse_cru_rows(in, layout, source,
                 [&](std::size_t y, std::size_t m, std::size_t lat,
                     const std::vector<double>& vals,
                     const std::vector<std::uint8_t>& valid) {
                   GridRaster& g = archive.grids[y * 12 + m];
                   for (std::size_t c = 0; c < layout.n_cols; ++c) {
                     if (valid[c])
                       g.set(lat, c, vals[c]);
                     else {
                       g.set_masked(lat, c);
                       g.at(lat, c) = 0.0;
                     }
                   }
                 });
  return archive;
}

/// Streaming annual means straight off the file: one grid per year, a cell
/// masked for a year iff any month is missing. Keeps only the annual grids
/// in memory, never the monthly archive.
inline SnapshotSeries parse_cru_annual(std::istream& in,
                                       const CruLayout& layout,
                                       const std::string& source = "<cru-dat>") {
  const double cell = 180.0 / static_cast<double>(layout.n_lat);
  const std::size_t ncell = layout.n_lat * layout.n_cols;
  std::vector<std::vector<double>> sums(layout.n_years,
                                        std::vector<double>(ncell, 0.0));
  std::vector<std::vector<double>> comps(layout.n_years,
                                         std::vector<double>(ncell, 0.0));
  std::vector<std::vector<std::uint8_t>> ok(
      layout.n_years, std::vector<std::uint8_t>(ncell, 1));
  parse_cru_rows(in, layout, source,
                 [&](std::size_t y, std::size_t /*m*/, std::size_t lat,
                     const std::vector<double>& vals,
                     const std::vector<std::uint8_t>& valid) {
                   double* s = sums[y].data() + lat * layout.n_cols;
                   double* cc = comps[y].data() + lat * layout.n_cols;
                   std::uint8_t* o = ok[y].data() + lat * layout.n_cols;
                   for (std::size_t c = 0; c < layout.n_cols; ++c) {
                     if (!valid[c]) {
                       o[c] = 0;
                       continue;
                     }
                     // inline Neumaier step on the (sum, comp) pair
                     const double x = vals[c];
                     const double t = s[c] + x;
                     if (std::abs(s[c]) >= std::abs(x))
                       cc[c] += (s[c] - t) + x;
                     else
                       cc[c] += (x - t) + s[c];
                     s[c] = t;
                   }
                 });
  SnapshotSeries out;
  for (std::size_t y = 0; y < layout.n_years; ++y) {
    GridRaster g(layout.n_lat, layout.n_cols, -90.0 + cell / 2.0,
                 -180.0 + cell / 2.0, cell, Orientation::SouthToNorth);
    for (std::size_t i = 0; i < ncell; ++i) {
      g.mask()[i] = ok[y][i];
      g.values()[i] = ok[y][i] ? (sums[y][i] + comps[y][i]) / 12.0 : 0.0;
    }
    out.epochs.push_back(layout.start_year + static_cast<int>(y));
    out.grids.push_back(std::move(g));
    sums[y].clear();
    sums[y].shrink_to_fit();
    comps[y].clear();
    comps[y].shrink_to_fit();
    ok[y].clear();
    ok[y].shrink_to_fit();
  }
  return out;
}

inline void write_cru_dat(std::ostream& os, const MonthlyArchive& archive,
                          double sentinel = -999.0) {
  std::string buf;
  for (std::size_t y = 0; y < archive.n_years; ++y) {
    for (std::size_t m = 0; m < 12; ++m) {
      const GridRaster& g = archive.month(y, m);
      for (std::size_t lat = 0; lat < g.n_rows(); ++lat) {
        buf.clear();
        for (std::size_t c = 0; c < g.n_cols(); ++c) {
          if (c) buf += ' ';
          detail::format_17g(buf, g.valid(lat, c) ? g.at(lat, c) : sentinel);
        }
        buf += '\n';
        os << buf;
      }
    }
  }
}

/// One urban agglomeration: point coordinate plus population per epoch year.
struct CityRecord {
  std::string id;
  std::string name;
  std::string country;
  double lat = 0.0;
  double lon = 0.0;
  std::map<int, double> population;  // epoch year -> persons; absent = no data
};

struct CityTable {
  std::vector<int> epochs;
  std::vector<CityRecord> cities;
};

/// CSV schema: city_id,name,country,lat,lon,pop_<year>[,pop_<year>...]
/// Empty population fields mean "no data for that epoch", not zero.
inline CityTable parse_city_table(std::istream& in,
                                  const std::string& source = "<city-table>") {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source, 1, 1, "empty file");
  std::vector<std::string> header = detail::split_csv(line);
  const std::vector<std::string> fixed = {"city_id", "name", "country", "lat",
                                          "lon"};
  if (header.size() < fixed.size() + 1)
    throw ParseError(source, 1, 1, "header must be city_id,name,country,lat,lon,pop_<year>...");
  for (std::size_t i = 0; i < fixed.size(); ++i)
    if (std::string(detail::trim(header[i])) != fixed[i])
      throw ParseError(source, 1, i + 1,
                       "expected header column '" + fixed[i] + "', found '" +
                           header[i] + "'");
  CityTable table;
  for (std::size_t i = fixed.size(); i < header.size(); ++i) {
    std::string_view h = detail::trim(header[i]);
    if (!h.starts_with("pop_"))
      throw ParseError(source, 1, i + 1,
                       "expected pop_<year> column, found '" + std::string(h) +
                           "'");
    int year = 0;
    std::string_view ys = h.substr(4);
    auto [p, ec] = std::from_chars(ys.data(), ys.data() + ys.size(), year);
    if (ec != std::errc{} || p != ys.data() + ys.size())
      throw ParseError(source, 1, i + 1,
                       "bad epoch year in column '" + std::string(h) + "'");
    if (!table.epochs.empty() && year <= table.epochs.back())
      throw ParseError(source, 1, i + 1,
                       "pop_<year> columns must be strictly increasing");
    table.epochs.push_back(year);
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> fields = detail::split_csv(line);
    if (fields.size() != header.size())
      throw ParseError(source, line_no, 1,
                       "expected " + std::to_string(header.size()) +
                           " fields, found " + std::to_string(fields.size()));
    CityRecord rec;
    rec.id = std::string(detail::trim(fields[0]));
    rec.name = fields[1];
    rec.country = std::string(detail::trim(fields[2]));
    rec.lat = detail::parse_double(detail::trim(fields[3]), source, line_no, 4);
    rec.lon = detail::parse_double(detail::trim(fields[4]), source, line_no, 5);
    if (rec.lat < -90.0 || rec.lat > 90.0)
      throw ParseError(source, line_no, 4,
                       "latitude " + fields[3] + " out of range [-90, 90]");
    if (rec.lon < -180.0 || rec.lon > 360.0)
      throw ParseError(source, line_no, 5,
                       "longitude " + fields[4] + " out of range [-180, 360]");
    for (std::size_t i = 0; i < table.epochs.size(); ++i) {
      std::string_view f = detail::trim(fields[5 + i]);
      if (f.empty()) continue;
      const double p = detail::parse_double(f, source, line_no, 6 + i);
      if (p < 0.0)
        throw ParseError(source, line_no, 6 + i,
                         "negative population " + std::string(f));
      rec.population[table.epochs[i]] = p;
    }
    table.cities.push_back(std::move(rec));
  }
  return table;
}

inline void write_city_table(std::ostream& os, const CityTable& table) {
  std::string buf = "city_id,name,country,lat,lon";
  for (int y : table.epochs) buf += ",pop_" + std::to_string(y);
  buf += '\n';
  os << buf;
  for (const CityRecord& rec : table.cities) {
    buf.clear();
    buf += rec.id;
    buf += ",\"";
    buf += rec.name;
    buf += "\",";
    buf += rec.country;
    buf += ',';
    detail::format_17g(buf, rec.lat);
    buf += ',';
    detail::format_17g(buf, rec.lon);
    for (int y : table.epochs) {
      buf += ',';
      auto it = rec.population.find(y);
      if (it != rec.population.end()) detail::format_17g(buf, it->second);
    }
    buf += '\n';
    os << buf;
  }
}

/// Origin x destination migrant stocks per epoch, plus country-level mean
/// temperatures and population totals. Countries are indexed in sorted code
/// order; matrices are row-major origin x destination.
struct MigrationStockTable {
  std::vector<std::string> countries;
  std::vector<int> epochs;
  std::map<int, std::vector<double>> stocks;        // epoch -> O*D matrix
  std::map<int, std::vector<double>> country_temp;  // epoch -> per-country degC
  std::map<int, std::vector<double>> country_pop;   // epoch -> per-country persons

  std::size_t n_countries() const { return countries.size(); }

  std::size_t country_index(const std::string& code) const {
    auto it = std::lower_bound(countries.begin(), countries.end(), code);
    if (it == countries.end() || *it != code)
      throw std::runtime_error("unknown country code '" + code + "'");
    return static_cast<std::size_t>(it - countries.begin());
  }

  double stock(int epoch, std::size_t o, std::size_t d) const {
    return stocks.at(epoch)[o * n_countries() + d];
  }
};

/// Schemas: stocks CSV `epoch,origin,destination,stock`;
/// temperature CSV `country,epoch,mean_temp_c`;
/// population CSV `country,epoch,population` (optional).
/// Every country appearing in the stock matrix must have a temperature for
/// every stock epoch.
inline MigrationStockTable parse_migration_tables(
    std::istream& stocks_in, std::istream& temps_in,
    std::istream* pops_in = nullptr,
    const std::string& stocks_source = "<stocks>",
    const std::string& temps_source = "<country-temps>",
    const std::string& pops_source = "<country-pops>") {
  struct StockRow {
    int epoch;
    std::string origin, destination;
    double stock;
  };
  std::vector<StockRow> rows;
  std::vector<std::string> countries;

  auto check_header = [](std::istream& in, const std::string& source,
                         const std::string& expect) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(source, 1, 1, "empty file");
    std::string got(detail::trim(line));
    if (got != expect)
      throw ParseError(source, 1, 1,
                       "expected header '" + expect + "', found '" + got + "'");
  };

  check_header(stocks_in, stocks_source, "epoch,origin,destination,stock");
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(stocks_in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> f = detail::split_csv(line);
    if (f.size() != 4)
      throw ParseError(stocks_source, line_no, 1,
                       "expected 4 fields, found " + std::to_string(f.size()));
    StockRow row;
    row.epoch = static_cast<int>(
        detail::parse_double(detail::trim(f[0]), stocks_source, line_no, 1));
    row.origin = std::string(detail::trim(f[1]));
    row.destination = std::string(detail::trim(f[2]));
    row.stock =
        detail::parse_double(detail::trim(f[3]), stocks_source, line_no, 4);
    if (row.stock < 0.0)
      throw ParseError(stocks_source, line_no, 4,
                       "negative stock " + f[3]);
    countries.push_back(row.origin);
    countries.push_back(row.destination);
    rows.push_back(std::move(row));
  }
  std::sort(countries.begin(), countries.end());
  countries.erase(std::unique(countries.begin(), countries.end()),
                  countries.end());

  MigrationStockTable table;
  table.countries = std::move(countries);
  const std::size_t n = table.n_countries();
  for (const StockRow& row : rows) {
    if (!std::binary_search(table.epochs.begin(), table.epochs.end(),
                            row.epoch)) {
      table.epochs.insert(std::upper_bound(table.epochs.begin(),
                                           table.epochs.end(), row.epoch),
                          row.epoch);
    }
  }
  for (int e : table.epochs) table.stocks[e].assign(n * n, 0.0);
  for (const StockRow& row : rows) {
    const std::size_t o = table.country_index(row.origin);
    const std::size_t d = table.country_index(row.destination);
    if (o != d) table.stocks[row.epoch][o * n + d] += row.stock;
  }

  check_header(temps_in, temps_source, "country,epoch,mean_temp_c");
  std::map<int, std::vector<std::uint8_t>> have_temp;
  line_no = 1;
  while (std::getline(temps_in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> f = detail::split_csv(line);
    if (f.size() != 3)
      throw ParseError(temps_source, line_no, 1,
                       "expected 3 fields, found " + std::to_string(f.size()));
    const std::string code(detail::trim(f[0]));
    const int epoch = static_cast<int>(
        detail::parse_double(detail::trim(f[1]), temps_source, line_no, 2));
    const double t =
        detail::parse_double(detail::trim(f[2]), temps_source, line_no, 3);
    auto it = std::lower_bound(table.countries.begin(), table.countries.end(),
                               code);
    if (it == table.countries.end() || *it != code) continue;  // unused country
    const auto idx = static_cast<std::size_t>(it - table.countries.begin());
    auto& vec = table.country_temp[epoch];
    if (vec.empty()) vec.assign(n, 0.0);
    auto& have = have_temp[epoch];
    if (have.empty()) have.assign(n, 0);
    vec[idx] = t;
    have[idx] = 1;
  }
  for (int e : table.epochs) {
    auto it = have_temp.find(e);
    if (it == have_temp.end())
      throw std::runtime_error(temps_source + ": missing epoch " +
                               std::to_string(e) + " in temperature table");
    for (std::size_t i = 0; i < n; ++i)
      if (!it->second[i])
        throw std::runtime_error(temps_source + ": country '" +
                                 table.countries[i] +
                                 "' referenced by stocks has no temperature "
                                 "for epoch " +
                                 std::to_string(e));
  }

  if (pops_in) {
    check_header(*pops_in, pops_source, "country,epoch,population");
    line_no = 1;
    while (std::getline(*pops_in, line)) {
      ++line_no;
      if (detail::trim(line).empty()) continue;
      std::vector<std::string> f = detail::split_csv(line);
      if (f.size() != 3)
        throw ParseError(pops_source, line_no, 1,
                         "expected 3 fields, found " + std::to_string(f.size()));
      const std::string code(detail::trim(f[0]));
      const int epoch = static_cast<int>(
          detail::parse_double(detail::trim(f[1]), pops_source, line_no, 2));
      const double p =
          detail::parse_double(detail::trim(f[2]), pops_source, line_no, 3);
      auto it = std::lower_bound(table.countries.begin(), table.countries.end(),
                                 code);
      if (it == table.countries.end() || *it != code) continue;
      auto& vec = table.country_pop[epoch];
      if (vec.empty()) vec.assign(n, 0.0);
      vec[static_cast<std::size_t>(it - table.countries.begin())] = p;
    }
  }
  return table;
}

inline void write_migration_tables(std::ostream& stocks_os,
                                   std::ostream& temps_os,
                                   const MigrationStockTable& table,
                                   std::ostream* pops_os = nullptr) {
  const std::size_t n = table.n_countries();
  std::string buf;
  stocks_os << "epoch,origin,destination,stock\n";
  for (int e : table.epochs) {
    const std::vector<double>& m = table.stocks.at(e);
    for (std::size_t o = 0; o < n; ++o)
      for (std::size_t d = 0; d < n; ++d) {
        if (o == d || m[o * n + d] == 0.0) continue;
        buf.clear();
        buf += std::to_string(e) + "," + table.countries[o] + "," +
               table.countries[d] + ",";
        detail::format_17g(buf, m[o * n + d]);
        buf += '\n';
        stocks_os << buf;
      }
  }
  temps_os << "country,epoch,mean_temp_c\n";
  for (const auto& [e, temps] : table.country_temp)
    for (std::size_t i = 0; i < n; ++i) {
      buf.clear();
      buf += table.countries[i] + "," + std::to_string(e) + ",";
      detail::format_17g(buf, temps[i]);
      buf += '\n';
      temps_os << buf;
    }
  if (pops_os) {
    *pops_os << "country,epoch,population\n";
    for (const auto& [e, pops] : table.country_pop)
      for (std::size_t i = 0; i < n; ++i) {
        buf.clear();
        buf += table.countries[i] + "," + std::to_string(e) + ",";
        detail::format_17g(buf, pops[i]);
        buf += '\n';
        *pops_os << buf;
      }
  }
}

}  // namespace popclim
