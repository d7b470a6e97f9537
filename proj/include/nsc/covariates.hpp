#pragma once

#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nsc/geometry.hpp"

namespace nsc {

/// Piecewise-constant gridded field. Row 0 is the southernmost row.
///
/// Lookup is nearest-cell: col = floor((x - x0) / cell), and likewise for the
/// row, so a point on a shared cell edge takes the cell to its east/north.
/// Points on the outer east/north edge of the extent map to the last
/// column/row.
class RasterCovariate {
 public:
  RasterCovariate(std::string name, Point origin, double cell, std::size_t ncols, std::size_t nrows,
                  std::vector<double> values, double nodata = -9999.0);

  const std::string& name() const { return name_; }
  Point origin() const { return origin_; }
  double cell() const { return cell_; }
  std::size_t ncols() const { return ncols_; }
  std::size_t nrows() const { return nrows_; }
  double nodata() const { return nodata_; }
  const std::vector<double>& values() const { return values_; }
  Rect extent() const;

  double at(std::size_t col, std::size_t row) const { return values_[row * ncols_ + col]; }
  bool is_nodata(double v) const { return v == nodata_ || std::isnan(v); }

  /// Throws EvaluationError naming the covariate and point when p is outside
  /// the extent or lands on a nodata cell.
  double value_at(Point p) const;

  /// Returns the first mask cell of `region` whose footprint is not fully
  /// covered by valid raster cells, if any.
  std::optional<std::size_t> first_uncovered_cell(const DilatedWindow& region) const;

  /// Copy with values replaced by (v - mean) / sd over the region's cells.
  RasterCovariate standardized(const DilatedWindow& region) const;

 private:
  std::string name_;
  Point origin_;
  double cell_;
  std::size_t ncols_;
  std::size_t nrows_;
  std::vector<double> values_;
  double nodata_;
};

/// ESRI ASCII grid. The first data line is the northernmost row.
RasterCovariate read_esri_ascii(std::istream& in, const std::string& name);
RasterCovariate read_esri_ascii_file(const std::string& path, const std::string& name);
void write_esri_ascii(std::ostream& out, const RasterCovariate& raster);
void write_esri_ascii_file(const std::string& path, const RasterCovariate& raster);

/// Covariates grouped by model component.
struct CovariateSet {
  std::vector<RasterCovariate> z_beta;   // centre intensity f
  std::vector<RasterCovariate> z_alpha;  // cluster size alpha
  std::vector<RasterCovariate> z_omega;  // cluster spread omega

  /// Throws ValidationError on duplicate names within a list or a name shared
  /// by z_beta and z_alpha (the two effects are not identifiable jointly).
  void validate() const;

  /// Throws ValidationError naming the covariate and cell when some raster
  /// does not cover the region.
  void check_coverage(const DilatedWindow& region) const;
};

/// (1, z_1(p), ..., z_k(p)) or (z_1(p), ..., z_k(p)).
std::vector<double> design_vector(std::span<const RasterCovariate> covs, Point p, bool with_intercept);

/// Linear form c_0 + sum_i c_{i+1} z_i(p), coefficients with intercept first.
double linear_predictor(std::span<const RasterCovariate> covs, std::span<const double> coeffs, Point p);

/// sum over nodes of weight * exp(design(u) . coeffs), intercept included in
/// coeffs. Throws ConfigError on a length mismatch and NumericError naming
/// the node on a non-finite exponent.
double integrate_exp_linear(std::span<const RasterCovariate> covs, std::span<const double> coeffs,
                            const QuadratureGrid& grid);

}  // namespace nsc
