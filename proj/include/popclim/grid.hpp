#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "popclim/sum.hpp"

namespace popclim {

enum class Orientation : std::uint8_t {
  NorthToSouth,  // row 0 is the northernmost latitude band
  SouthToNorth,  // row 0 is the southernmost latitude band
};

inline const char* to_string(Orientation o) {
  return o == Orientation::NorthToSouth ? "north-to-south" : "south-to-north";
}

struct GridError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Rectangular lat x lon field with an explicit validity mask.
/// Values of masked-out cells are unspecified and ignored everywhere.
///
/// Internally the latitude anchor is stored as the center latitude of the
/// southernmost row, which is invariant under row flips; origin_lat() derives
/// the row-0 latitude from the orientation. This makes reorient() an exact
/// involution on all metadata.
class GridRaster {
public:
  GridRaster() = default;

  GridRaster(std::size_t n_rows, std::size_t n_cols, double south_lat,
             double west_lon, double cell_size,
             Orientation orient = Orientation::SouthToNorth)
      : n_rows_(n_rows),
        n_cols_(n_cols),
        south_lat_(south_lat),
        west_lon_(west_lon),
        cell_size_(cell_size),
        orientation_(orient),
        values_(n_rows * n_cols, 0.0),
        mask_(n_rows * n_cols, 1) {
    if (n_rows == 0 || n_cols == 0)
      throw GridError("GridRaster: dimensions must be positive");
    const double tol = 1e-6;
    if (static_cast<double>(n_rows) * cell_size > 180.0 + tol ||
        static_cast<double>(n_cols) * cell_size > 360.0 + tol)
      throw GridError("GridRaster: extent exceeds the globe");
  }

  static GridRaster global(std::size_t n_rows, std::size_t n_cols,
                           Orientation orient = Orientation::SouthToNorth) {
    const double cell = 180.0 / static_cast<double>(n_rows);
    return GridRaster(n_rows, n_cols, -90.0 + cell / 2.0, -180.0 + cell / 2.0,
                      cell, orient);
  }

  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_cols() const { return n_cols_; }
  std::size_t n_cells() const { return n_rows_ * n_cols_; }
  double cell_size() const { return cell_size_; }
  Orientation orientation() const { return orientation_; }
  double south_lat() const { return south_lat_; }
  double west_lon() const { return west_lon_; }

  /// Center latitude of row 0 under the current orientation.
  double origin_lat() const {
    if (orientation_ == Orientation::SouthToNorth) return south_lat_;
    return south_lat_ + static_cast<double>(n_rows_ - 1) * cell_size_;
  }
  double origin_lon() const { return west_lon_; }

  double& at(std::size_t r, std::size_t c) { return values_[r * n_cols_ + c]; }
  double at(std::size_t r, std::size_t c) const {
    return values_[r * n_cols_ + c];
  }
  bool valid(std::size_t r, std::size_t c) const {
    return mask_[r * n_cols_ + c] != 0;
  }
  void set(std::size_t r, std::size_t c, double v) {
    values_[r * n_cols_ + c] = v;
    mask_[r * n_cols_ + c] = 1;
  }
  void set_masked(std::size_t r, std::size_t c) {
    mask_[r * n_cols_ + c] = 0;
  }

  const std::vector<double>& values() const { return values_; }
  const std::vector<std::uint8_t>& mask() const { return mask_; }
  std::vector<double>& values() { return values_; }
  std::vector<std::uint8_t>& mask() { return mask_; }

  /// Coordinates compare with a tiny tolerance: grids that are resampled or
  /// read back from decimal headers (e.g. a 1/12 degree cell size) differ in
  /// the last few bits without being different grids.
  bool same_geometry(const GridRaster& o) const {
    auto near = [](double a, double b) {
      return std::abs(a - b) <=
             1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
    };
    return n_rows_ == o.n_rows_ && n_cols_ == o.n_cols_ &&
           near(cell_size_, o.cell_size_) && near(south_lat_, o.south_lat_) &&
           near(west_lon_, o.west_lon_);
  }

  bool same_layout(const GridRaster& o) const {
    return same_geometry(o) && orientation_ == o.orientation_;
  }

  void require_same_layout(const GridRaster& o) const {
    if (!same_geometry(o)) throw GridError("grid geometry mismatch");
    if (orientation_ != o.orientation_)
      throw GridError("grid orientation mismatch");
  }

  /// Row and column of the cell containing a point coordinate, in this
  /// grid's row order. Throws if the point is outside the grid extent.
  std::pair<std::size_t, std::size_t> cell_of(double lat, double lon) const {
    const double south_edge = south_lat_ - cell_size_ / 2.0;
    const double west_edge = west_lon_ - cell_size_ / 2.0;
    const double fr = (lat - south_edge) / cell_size_;
    const double fc = (lon - west_edge) / cell_size_;
    if (fr < 0.0 || fc < 0.0)
      throw GridError("coordinate outside grid extent");
    auto r = static_cast<std::size_t>(fr);
    auto c = static_cast<std::size_t>(fc);
    if (r == n_rows_ && lat <= south_edge + cell_size_ * n_rows_) r = n_rows_ - 1;
    if (c == n_cols_ && lon <= west_edge + cell_size_ * n_cols_) c = n_cols_ - 1;
    if (r >= n_rows_ || c >= n_cols_)
      throw GridError("coordinate outside grid extent");
    if (orientation_ == Orientation::NorthToSouth) r = n_rows_ - 1 - r;
    return {r, c};
  }

  bool operator==(const GridRaster& o) const {
    return same_layout(o) && values_ == o.values_ && mask_ == o.mask_;
  }

private:
  std::size_t n_rows_ = 0;
  std::size_t n_cols_ = 0;
  double south_lat_ = 0.0;  // center latitude of the southernmost row
  double west_lon_ = 0.0;   // center longitude of column 0
  double cell_size_ = 0.0;
  Orientation orientation_ = Orientation::SouthToNorth;
  std::vector<double> values_;
  std::vector<std::uint8_t> mask_;

  friend GridRaster reorient(const GridRaster&, Orientation);
};

/// Snapshots of one variable at strictly increasing epoch years, all on a
/// common grid.
struct SnapshotSeries {
  std::vector<int> epochs;
  std::vector<GridRaster> grids;

  void validate() const {
    if (epochs.size() != grids.size() || epochs.empty())
      throw GridError("SnapshotSeries: epochs and grids must match and be non-empty");
    for (std::size_t i = 1; i < epochs.size(); ++i)
      if (epochs[i] <= epochs[i - 1])
        throw GridError("SnapshotSeries: epochs must be strictly increasing");
    for (std::size_t i = 1; i < grids.size(); ++i)
      grids[0].require_same_layout(grids[i]);
  }

  const GridRaster& at_epoch(int year) const {
    for (std::size_t i = 0; i < epochs.size(); ++i)
      if (epochs[i] == year) return grids[i];
    throw GridError("epoch " + std::to_string(year) + " not present in series");
  }
};

/// 12 * n_years grids in (year, month) order.
struct MonthlyArchive {
  int start_year = 0;
  std::size_t n_years = 0;
  std::vector<GridRaster> grids;

  const GridRaster& month(std::size_t year_idx, std::size_t month_idx) const {
    return grids[year_idx * 12 + month_idx];
  }
};

enum class Reducer : std::uint8_t { Sum, Mean };

/// Coarsen by an integer factor. Sum treats invalid fine cells as zero
/// contribution (counts are extensive); Mean averages valid fine cells only.
/// A coarse cell is valid iff at least one fine cell in its block is valid.
inline GridRaster aggregate_blocks(const GridRaster& fine, std::size_t factor,
                                   Reducer reducer) {
  if (factor == 0) throw GridError("aggregate_blocks: factor must be positive");
  if (fine.n_rows() % factor != 0 || fine.n_cols() % factor != 0)
    throw GridError("aggregate_blocks: dimensions " +
                    std::to_string(fine.n_rows()) + "x" +
                    std::to_string(fine.n_cols()) +
                    " not divisible by factor " + std::to_string(factor));
  const std::size_t rows = fine.n_rows() / factor;
  const std::size_t cols = fine.n_cols() / factor;
  const double coarse_cell = fine.cell_size() * static_cast<double>(factor);
  const double south_edge = fine.south_lat() - fine.cell_size() / 2.0;
  const double west_edge = fine.west_lon() - fine.cell_size() / 2.0;
  GridRaster out(rows, cols, south_edge + coarse_cell / 2.0,
                 west_edge + coarse_cell / 2.0, coarse_cell,
                 fine.orientation());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      CompensatedSum acc;
      std::size_t n_valid = 0;
      for (std::size_t i = 0; i < factor; ++i) {
        for (std::size_t j = 0; j < factor; ++j) {
          const std::size_t fr = r * factor + i;
          const std::size_t fc = c * factor + j;
          if (fine.valid(fr, fc)) {
            acc.add(fine.at(fr, fc));
            ++n_valid;
          }
        }
      }
      if (n_valid == 0) {
        out.set_masked(r, c);
        out.at(r, c) = 0.0;
      } else if (reducer == Reducer::Sum) {
        out.set(r, c, acc.value());
      } else {
        out.set(r, c, acc.value() / static_cast<double>(n_valid));
      }
    }
  }
  return out;
}

/// Flip row order to match the target orientation. Identity when already
/// oriented; exact involution otherwise.
inline GridRaster reorient(const GridRaster& g, Orientation target) {
  if (g.orientation() == target) return g;
  GridRaster out = g;
  out.orientation_ = target;
  const std::size_t rows = g.n_rows();
  const std::size_t cols = g.n_cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t src = rows - 1 - r;
    std::copy_n(g.values().begin() + static_cast<std::ptrdiff_t>(src * cols),
                cols,
                out.values().begin() + static_cast<std::ptrdiff_t>(r * cols));
    std::copy_n(g.mask().begin() + static_cast<std::ptrdiff_t>(src * cols),
                cols,
                out.mask().begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  return out;
}

/// Annual mean per cell; a cell is masked for a year iff any of its 12
/// monthly values is masked.
inline SnapshotSeries monthly_to_annual(const MonthlyArchive& archive) {
  if (archive.n_years == 0 || archive.grids.size() != archive.n_years * 12)
    throw GridError("monthly_to_annual: archive must hold 12 grids per year");
  SnapshotSeries out;
  for (std::size_t y = 0; y < archive.n_years; ++y) {
    const GridRaster& first = archive.month(y, 0);
    GridRaster annual = first;
    std::vector<CompensatedSum> acc(first.n_cells());
    std::vector<std::uint8_t> ok(first.n_cells(), 1);
    for (std::size_t m = 0; m < 12; ++m) {
      const GridRaster& g = archive.month(y, m);
      first.require_same_layout(g);
      for (std::size_t i = 0; i < g.n_cells(); ++i) {
        if (g.mask()[i]) {
          acc[i].add(g.values()[i]);
        } else {
          ok[i] = 0;
        }
      }
    }
    for (std::size_t i = 0; i < annual.n_cells(); ++i) {
      annual.mask()[i] = ok[i];
      annual.values()[i] = ok[i] ? acc[i].value() / 12.0 : 0.0;
    }
    out.epochs.push_back(archive.start_year + static_cast<int>(y));
    out.grids.push_back(std::move(annual));
  }
  return out;
}

/// Centered multi-year mean at each requested center year. The window must be
/// odd and lie entirely within the annual series; out-of-range windows are
/// rejected, never truncated.
inline SnapshotSeries centered_mean(const SnapshotSeries& annual,
                                    const std::vector<int>& center_years,
                                    std::size_t window) {
  annual.validate();
  if (window % 2 == 0 || window == 0)
    throw GridError("centered_mean: window must be odd");
  const int half = static_cast<int>(window - 1) / 2;
  const int first = annual.epochs.front();
  const int last = annual.epochs.back();
  SnapshotSeries out;
  for (int c : center_years) {
    if (c - half < first || c + half > last)
      throw GridError("centered_mean: window " + std::to_string(c - half) +
                      "-" + std::to_string(c + half) +
                      " extends beyond available years " +
                      std::to_string(first) + "-" + std::to_string(last));
    const GridRaster& ref = annual.grids.front();
    GridRaster mean = ref;
    std::vector<CompensatedSum> acc(ref.n_cells());
    std::vector<std::uint8_t> ok(ref.n_cells(), 1);
    for (int y = c - half; y <= c + half; ++y) {
      const GridRaster& g = annual.at_epoch(y);
      for (std::size_t i = 0; i < g.n_cells(); ++i) {
        if (g.mask()[i]) {
          acc[i].add(g.values()[i]);
        } else {
          ok[i] = 0;
        }
      }
    }
    for (std::size_t i = 0; i < mean.n_cells(); ++i) {
      mean.mask()[i] = ok[i];
      mean.values()[i] =
          ok[i] ? acc[i].value() / static_cast<double>(window) : 0.0;
    }
    out.epochs.push_back(c);
    out.grids.push_back(std::move(mean));
  }
  return out;
}

/// Affine value transform v -> v*scale + offset; mask untouched.
inline GridRaster convert_units(const GridRaster& g, double scale,
                                double offset) {
  GridRaster out = g;
  for (std::size_t i = 0; i < out.n_cells(); ++i)
    if (out.mask()[i]) out.values()[i] = out.values()[i] * scale + offset;
  return out;
}

}  // namespace popclim
