#include "nsc/covariates.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "nsc/errors.hpp"

namespace nsc {

RasterCovariate::RasterCovariate(std::string name, Point origin, double cell, std::size_t ncols,
                                 std::size_t nrows, std::vector<double> values, double nodata)
    : name_(std::move(name)),
      origin_(origin),
      cell_(cell),
      ncols_(ncols),
      nrows_(nrows),
      values_(std::move(values)),
      nodata_(nodata) {
  if (ncols_ == 0 || nrows_ == 0) throw ConfigError("raster '" + name_ + "': ncols and nrows must be >= 1");
  if (!(cell_ > 0.0) || !std::isfinite(cell_)) throw ConfigError("raster '" + name_ + "': cellsize must be > 0");
  if (values_.size() != ncols_ * nrows_) {
    std::ostringstream msg;
    msg << "raster '" << name_ << "': expected " << ncols_ * nrows_ << " values, got " << values_.size();
    throw ConfigError(msg.str());
  }
}

Rect RasterCovariate::extent() const {
  return Rect{origin_.x, origin_.x + static_cast<double>(ncols_) * cell_, origin_.y,
              origin_.y + static_cast<double>(nrows_) * cell_};
}

double RasterCovariate::value_at(Point p) const {
  const double fx = std::floor((p.x - origin_.x) / cell_);
  const double fy = std::floor((p.y - origin_.y) / cell_);
  const auto nc = static_cast<double>(ncols_);
  const auto nr = static_cast<double>(nrows_);
  auto fail = [&](const char* why) {
    std::ostringstream msg;
    msg << std::setprecision(17) << "covariate '" << name_ << "': point (" << p.x << ", " << p.y << ") " << why;
    throw EvaluationError(msg.str());
  };
  if (!(fx >= 0.0) || !(fy >= 0.0) || fx > nc || fy > nr) fail("is outside the raster extent");
  const auto ext = extent();
  std::size_t col = static_cast<std::size_t>(fx);
  std::size_t row = static_cast<std::size_t>(fy);
  if (col == ncols_) {
    if (p.x > ext.x_right) fail("is outside the raster extent");
    col = ncols_ - 1;
  }
  if (row == nrows_) {
    if (p.y > ext.y_top) fail("is outside the raster extent");
    row = nrows_ - 1;
  }
  const double v = at(col, row);
  if (is_nodata(v)) fail("falls on a nodata cell");
  return v;
}

std::optional<std::size_t> RasterCovariate::first_uncovered_cell(const DilatedWindow& region) const {
  const Rect ext = extent();
  for (std::size_t idx : region.active_cells()) {
    const Rect r = region.cell_rect(idx);
    if (r.x_left < ext.x_left || r.x_right > ext.x_right || r.y_bottom < ext.y_bottom || r.y_top > ext.y_top) {
      return idx;
    }
    auto clamp_index = [](double f, std::size_t n) {
      return static_cast<std::size_t>(std::clamp(f, 0.0, static_cast<double>(n - 1)));
    };
    const std::size_t c0 = clamp_index(std::floor((r.x_left - origin_.x) / cell_), ncols_);
    const std::size_t c1 = clamp_index(std::floor((r.x_right - origin_.x) / cell_), ncols_);
    const std::size_t r0 = clamp_index(std::floor((r.y_bottom - origin_.y) / cell_), nrows_);
    const std::size_t r1 = clamp_index(std::floor((r.y_top - origin_.y) / cell_), nrows_);
    for (std::size_t row = r0; row <= r1; ++row) {
      for (std::size_t col = c0; col <= c1; ++col) {
        if (is_nodata(at(col, row))) return idx;
      }
    }
  }
  return std::nullopt;
}

RasterCovariate RasterCovariate::standardized(const DilatedWindow& region) const {
  double sum = 0.0, sumsq = 0.0;
  const auto& cells = region.active_cells();
  for (std::size_t idx : cells) {
    const double v = value_at(region.cell_center(idx));
    sum += v;
    sumsq += v * v;
  }
  const double n = static_cast<double>(cells.size());
  const double mean = sum / n;
  const double sd = std::sqrt(std::max(sumsq / n - mean * mean, 0.0));
  if (!(sd > 0.0)) throw ConfigError("covariate '" + name_ + "': cannot standardize a constant field");
  std::vector<double> out(values_);
  for (double& v : out) {
    if (!is_nodata(v)) v = (v - mean) / sd;
  }
  return RasterCovariate(name_, origin_, cell_, ncols_, nrows_, std::move(out), nodata_);
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

RasterCovariate read_esri_ascii(std::istream& in, const std::string& name) {
  std::map<std::string, double> header;
  std::string key;
  // Header keys are read until the first token that parses as a number.
  std::streampos data_start = in.tellg();
  while (in >> key) {
    double probe = 0.0;
    std::istringstream tok(key);
    if (tok >> probe) break;
    double value = 0.0;
    if (!(in >> value)) throw IoError("raster '" + name + "': header value for '" + key + "' is not a number");
    header[lower(key)] = value;
    data_start = in.tellg();
  }
  for (const char* req : {"ncols", "nrows", "cellsize"}) {
    if (!header.count(req)) throw IoError("raster '" + name + "': missing header key '" + req + "'");
  }
  const auto ncols = static_cast<std::size_t>(header["ncols"]);
  const auto nrows = static_cast<std::size_t>(header["nrows"]);
  const double cell = header["cellsize"];
  Point origin;
  if (header.count("xllcorner")) {
    origin.x = header["xllcorner"];
  } else if (header.count("xllcenter")) {
    origin.x = header["xllcenter"] - 0.5 * cell;
  } else {
    throw IoError("raster '" + name + "': missing xllcorner/xllcenter");
  }
  if (header.count("yllcorner")) {
    origin.y = header["yllcorner"];
  } else if (header.count("yllcenter")) {
    origin.y = header["yllcenter"] - 0.5 * cell;
  } else {
    throw IoError("raster '" + name + "': missing yllcorner/yllcenter");
  }
  const double nodata = header.count("nodata_value") ? header["nodata_value"] : -9999.0;

  in.clear();
  in.seekg(data_start);
  std::vector<double> values(ncols * nrows);
  for (std::size_t file_row = 0; file_row < nrows; ++file_row) {
    const std::size_t row = nrows - 1 - file_row;
    for (std::size_t col = 0; col < ncols; ++col) {
      std::string tok;
      if (!(in >> tok)) {
        std::ostringstream msg;
        msg << "raster '" << name << "': truncated data at line " << file_row + 1 << ", column " << col + 1;
        throw IoError(msg.str());
      }
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') {
        throw IoError("raster '" + name + "': bad value '" + tok + "'");
      }
      values[row * ncols + col] = v;
    }
  }
  return RasterCovariate(name, origin, cell, ncols, nrows, std::move(values), nodata);
}

RasterCovariate read_esri_ascii_file(const std::string& path, const std::string& name) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open raster file '" + path + "'");
  return read_esri_ascii(in, name);
}

void write_esri_ascii(std::ostream& out, const RasterCovariate& raster) {
  out << std::setprecision(17);
  out << "ncols " << raster.ncols() << "\n"
      << "nrows " << raster.nrows() << "\n"
      << "xllcorner " << raster.origin().x << "\n"
      << "yllcorner " << raster.origin().y << "\n"
      << "cellsize " << raster.cell() << "\n"
      << "NODATA_value " << raster.nodata() << "\n";
  for (std::size_t file_row = 0; file_row < raster.nrows(); ++file_row) {
    const std::size_t row = raster.nrows() - 1 - file_row;
    for (std::size_t col = 0; col < raster.ncols(); ++col) {
      if (col) out << ' ';
      out << raster.at(col, row);
    }
    out << '\n';
  }
}

void write_esri_ascii_file(const std::string& path, const RasterCovariate& raster) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write raster file '" + path + "'");
  write_esri_ascii(out, raster);
  if (!out) throw IoError("error while writing raster file '" + path + "'");
}

void CovariateSet::validate() const {
  for (const auto* list : {&z_beta, &z_alpha, &z_omega}) {
    std::set<std::string> seen;
    for (const auto& c : *list) {
      if (!seen.insert(c.name()).second) throw ValidationError("covariate '" + c.name() + "' listed twice in one role");
    }
  }
  for (const auto& b : z_beta) {
    for (const auto& a : z_alpha) {
      if (b.name() == a.name()) {
        throw ValidationError("covariate '" + b.name() +
                              "' appears in both z_beta and z_alpha; these lists must be disjoint "
                              "(centre-intensity and cluster-size effects are not identifiable together)");
      }
    }
  }
}

void CovariateSet::check_coverage(const DilatedWindow& region) const {
  for (const auto* list : {&z_beta, &z_alpha, &z_omega}) {
    for (const auto& c : *list) {
      if (auto idx = c.first_uncovered_cell(region)) {
        const Rect r = region.cell_rect(*idx);
        std::ostringstream msg;
        msg << std::setprecision(10) << "covariate '" << c.name() << "' does not cover the dilated window: cell ["
            << r.x_left << ", " << r.x_right << "] x [" << r.y_bottom << ", " << r.y_top << "]";
        throw ValidationError(msg.str());
      }
    }
  }
}

std::vector<double> design_vector(std::span<const RasterCovariate> covs, Point p, bool with_intercept) {
  std::vector<double> z;
  z.reserve(covs.size() + (with_intercept ? 1 : 0));
  if (with_intercept) z.push_back(1.0);
  for (const auto& c : covs) z.push_back(c.value_at(p));
  return z;
}

double linear_predictor(std::span<const RasterCovariate> covs, std::span<const double> coeffs, Point p) {
  if (coeffs.size() != covs.size() + 1) throw ConfigError("linear predictor: coefficient length mismatch");
  double eta = coeffs[0];
  for (std::size_t i = 0; i < covs.size(); ++i) eta += coeffs[i + 1] * covs[i].value_at(p);
  return eta;
}

double integrate_exp_linear(std::span<const RasterCovariate> covs, std::span<const double> coeffs,
                            const QuadratureGrid& grid) {
  if (coeffs.size() != covs.size() + 1) {
    std::ostringstream msg;
    msg << "integrate_exp_linear: " << coeffs.size() << " coefficients for " << covs.size() + 1 << " design columns";
    throw ConfigError(msg.str());
  }
  double total = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double eta = linear_predictor(covs, coeffs, grid.nodes[i]);
    const double v = std::exp(eta);
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg << std::setprecision(17) << "integrate_exp_linear: non-finite integrand at node " << i << " ("
          << grid.nodes[i].x << ", " << grid.nodes[i].y << ")";
      throw NumericError(msg.str());
    }
    total += grid.weights[i] * v;
  }
  return total;
}

}  // namespace nsc
