#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nsc/covariates.hpp"
#include "nsc/errors.hpp"
#include "nsc/geometry.hpp"

namespace nsc {

/// Maximum-likelihood fit of a log-linear Poisson intensity
/// exp(b_0 + b_1 z_1(u) + ... + b_k z_k(u)).
struct PoissonFit {
  Eigen::VectorXd coeffs;      // intercept first
  Eigen::MatrixXd covariance;  // inverse observed information
  bool converged = false;
  int iterations = 0;
  double log_lik = 0.0;
  double gradient_norm = 0.0;  // sup-norm at the returned iterate

  /// coeffs without the intercept, i.e. the centre-intensity slopes.
  std::vector<double> slopes() const;
};

/// Raised on non-convergence or a near-singular information matrix. Carries
/// the last iterate.
class FitError : public NumericError {
 public:
  FitError(const std::string& what, Eigen::VectorXd last, double gradient_norm)
      : NumericError(what), last_(std::move(last)), gradient_norm_(gradient_norm) {}
  const Eigen::VectorXd& last_iterate() const { return last_; }
  double gradient_norm() const { return gradient_norm_; }

 private:
  Eigen::VectorXd last_;
  double gradient_norm_;
};

/// Poisson regression against a fixed covariate list and quadrature grid.
/// Nodes sharing an identical design row are merged (weights summed), which
/// is exact and makes repeated fits on raster covariates cheap.
class PoissonRegression {
 public:
  PoissonRegression(std::span<const RasterCovariate> covs, const QuadratureGrid& grid);

  std::size_t dimension() const { return dim_; }
  std::size_t unique_nodes() const { return static_cast<std::size_t>(node_design_.rows()); }
  double total_weight() const { return total_weight_; }

  /// Throws ConfigError on an empty pattern, FitError on failure.
  PoissonFit fit(std::span<const Point> points) const;

  double log_lik(const Eigen::VectorXd& coeffs, std::span<const Point> points) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& coeffs, std::span<const Point> points) const;

 private:
  Eigen::VectorXd data_sum(std::span<const Point> points) const;

  std::vector<RasterCovariate> covs_;
  std::size_t dim_;
  Eigen::MatrixXd node_design_;  // unique design rows
  Eigen::VectorXd node_weight_;
  double total_weight_ = 0.0;
};

PoissonFit fit_poisson_intensity(std::span<const Point> points, std::span<const RasterCovariate> covs,
                                 const QuadratureGrid& grid);

/// sum_x z(x).b - sum_nodes w exp(z(u).b), intercept first in coeffs.
double poisson_loglik(std::span<const double> coeffs, std::span<const Point> points,
                      std::span<const RasterCovariate> covs, const QuadratureGrid& grid);

/// Two-sided Wald p-values for each slope (intercept excluded).
std::vector<double> covariate_pvalues(const PoissonFit& fit);
std::vector<double> covariate_pvalues(std::span<const Point> centers, std::span<const RasterCovariate> covs,
                                      const QuadratureGrid& grid);

}  // namespace nsc
