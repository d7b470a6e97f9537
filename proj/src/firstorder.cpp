#include "nsc/firstorder.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "nsc/stats.hpp"

namespace nsc {

namespace {
constexpr double kGradientTol = 1e-8;
constexpr int kMaxIterations = 100;
constexpr double kMaxCondition = 1e10;
}  // namespace

std::vector<double> PoissonFit::slopes() const {
  std::vector<double> out;
  for (Eigen::Index i = 1; i < coeffs.size(); ++i) out.push_back(coeffs[i]);
  return out;
}

PoissonRegression::PoissonRegression(std::span<const RasterCovariate> covs, const QuadratureGrid& grid)
    : covs_(covs.begin(), covs.end()), dim_(covs.size() + 1) {
  std::map<std::vector<double>, double> merged;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    merged[design_vector(covs_, grid.nodes[i], true)] += grid.weights[i];
    total_weight_ += grid.weights[i];
  }
  node_design_.resize(static_cast<Eigen::Index>(merged.size()), static_cast<Eigen::Index>(dim_));
  node_weight_.resize(static_cast<Eigen::Index>(merged.size()));
  Eigen::Index r = 0;
  for (const auto& [row, w] : merged) {
    for (std::size_t j = 0; j < dim_; ++j) node_design_(r, static_cast<Eigen::Index>(j)) = row[j];
    node_weight_[r] = w;
    ++r;
  }
}

Eigen::VectorXd PoissonRegression::data_sum(std::span<const Point> points) const {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim_));
  for (const Point& p : points) {
    s[0] += 1.0;
    for (std::size_t j = 0; j < covs_.size(); ++j) s[static_cast<Eigen::Index>(j + 1)] += covs_[j].value_at(p);
  }
  return s;
}

double PoissonRegression::log_lik(const Eigen::VectorXd& coeffs, std::span<const Point> points) const {
  const Eigen::VectorXd eta = node_design_ * coeffs;
  return data_sum(points).dot(coeffs) - node_weight_.dot(eta.array().exp().matrix());
}

Eigen::VectorXd PoissonRegression::gradient(const Eigen::VectorXd& coeffs, std::span<const Point> points) const {
  const Eigen::VectorXd mass = node_weight_.array() * (node_design_ * coeffs).array().exp();
  return data_sum(points) - node_design_.transpose() * mass;
}

PoissonFit PoissonRegression::fit(std::span<const Point> points) const {
  if (points.empty()) throw ConfigError("Poisson fit: point pattern is empty");
  const Eigen::VectorXd zsum = data_sum(points);
  const auto n = static_cast<double>(points.size());
  const auto d = static_cast<Eigen::Index>(dim_);

  Eigen::VectorXd b = Eigen::VectorXd::Zero(d);
  b[0] = std::log(n / total_weight_);

  auto objective = [&](const Eigen::VectorXd& c) {
    return zsum.dot(c) - node_weight_.dot((node_design_ * c).array().exp().matrix());
  };

  PoissonFit out;
  double ll = objective(b);
  for (int it = 0; it <= kMaxIterations; ++it) {
    const Eigen::VectorXd mass = node_weight_.array() * (node_design_ * b).array().exp();
    const Eigen::VectorXd grad = zsum - node_design_.transpose() * mass;
    const double gnorm = grad.cwiseAbs().maxCoeff();
    const Eigen::MatrixXd info = node_design_.transpose() * mass.asDiagonal() * node_design_;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > kMaxCondition) {
      std::ostringstream msg;
      msg << "Poisson fit: information matrix is near-singular (condition " << (lo > 0.0 ? hi / lo : INFINITY)
          << "); check the covariates for collinearity";
      throw FitError(msg.str(), b, gnorm);
    }

    if (gnorm < kGradientTol) {
      out.coeffs = b;
      out.covariance = info.inverse();
      out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
      out.converged = true;
      out.iterations = it;
      out.log_lik = ll;
      out.gradient_norm = gnorm;
      return out;
    }
    if (it == kMaxIterations) break;

    const Eigen::VectorXd step = info.ldlt().solve(grad);
    double t = 1.0;
    Eigen::VectorXd next = b + step;
    double ll_next = objective(next);
    // Step halving; a tiny relative slack lets Newton finish when the
    // objective is flat to rounding.
    int halvings = 0;
    while (!(ll_next >= ll - 1e-12 * std::fabs(ll)) && halvings < 40) {
      t *= 0.5;
      next = b + t * step;
      ll_next = objective(next);
      ++halvings;
    }
    if (!std::isfinite(ll_next)) {
      throw FitError("Poisson fit: objective became non-finite during line search", b, gnorm);
    }
    b = next;
    ll = ll_next;
  }
  const Eigen::VectorXd grad = gradient(b, points);
  std::ostringstream msg;
  msg << "Poisson fit: no convergence after " << kMaxIterations << " iterations (gradient sup-norm "
      << grad.cwiseAbs().maxCoeff() << ")";
  throw FitError(msg.str(), b, grad.cwiseAbs().maxCoeff());
}

PoissonFit fit_poisson_intensity(std::span<const Point> points, std::span<const RasterCovariate> covs,
                                 const QuadratureGrid& grid) {
  return PoissonRegression(covs, grid).fit(points);
}

double poisson_loglik(std::span<const double> coeffs, std::span<const Point> points,
                      std::span<const RasterCovariate> covs, const QuadratureGrid& grid) {
  double data_term = 0.0;
  for (const Point& p : points) data_term += linear_predictor(covs, coeffs, p);
  return data_term - integrate_exp_linear(covs, coeffs, grid);
}

std::vector<double> covariate_pvalues(const PoissonFit& fit) {
  std::vector<double> out;
  for (Eigen::Index i = 1; i < fit.coeffs.size(); ++i) {
    const double se = std::sqrt(fit.covariance(i, i));
    out.push_back(two_sided_pvalue(fit.coeffs[i] / se));
  }
  return out;
}

std::vector<double> covariate_pvalues(std::span<const Point> centers, std::span<const RasterCovariate> covs,
                                      const QuadratureGrid& grid) {
  return covariate_pvalues(fit_poisson_intensity(centers, covs, grid));
}

}  // namespace nsc
