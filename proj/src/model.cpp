#include "nsc/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "nsc/errors.hpp"
#include "nsc/stats.hpp"

namespace nsc {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

// --- GPD --------------------------------------------------------------------

void validate(const GpdParams& p) {
  if (!(p.lambda >= -1.0 && p.lambda < 1.0)) {
    std::ostringstream msg;
    msg << "GPD: lambda = " << p.lambda << " outside [-1, 1)";
    throw ConfigError(msg.str());
  }
  if (!(p.theta > 0.0) || !std::isfinite(p.theta)) {
    std::ostringstream msg;
    msg << "GPD: theta = " << p.theta << " must be > 0";
    throw ConfigError(msg.str());
  }
}

std::optional<long> gpd_truncation(const GpdParams& p) {
  if (!(p.lambda < 0.0)) return std::nullopt;
  const double bound = p.theta / -p.lambda;
  auto m = static_cast<long>(std::floor(bound));
  while (m > 0 && !(p.theta + p.lambda * static_cast<double>(m) > 0.0)) --m;
  while (p.theta + p.lambda * static_cast<double>(m + 1) > 0.0) ++m;
  return m;
}

double gpd_log_pmf_unnormalized(long n, const GpdParams& p) {
  if (n < 0) return kNegInf;
  const double dn = static_cast<double>(n);
  const double base = p.theta + p.lambda * dn;
  if (!(base > 0.0)) return kNegInf;
  return std::log(p.theta) + (dn - 1.0) * std::log(base) - p.theta - p.lambda * dn - std::lgamma(dn + 1.0);
}

double gpd_log_normalizer(const GpdParams& p) {
  const auto m = gpd_truncation(p);
  if (!m) return 0.0;
  // log-sum-exp over the truncated support, stopping once terms are negligible
  // past the mode.
  double acc_max = kNegInf;
  double acc = 0.0;
  for (long n = 0; n <= *m; ++n) {
    const double t = gpd_log_pmf_unnormalized(n, p);
    if (t > acc_max) {
      acc = acc * std::exp(acc_max - t) + 1.0;
      acc_max = t;
    } else {
      acc += std::exp(t - acc_max);
      if (t - acc_max < -45.0 && static_cast<double>(n) > p.theta) break;
    }
  }
  return acc_max + std::log(acc);
}

double gpd_log_pmf(long n, const GpdParams& p) {
  const auto m = gpd_truncation(p);
  if (m && n > *m) return kNegInf;
  return gpd_log_pmf_unnormalized(n, p) - gpd_log_normalizer(p);
}

double gpd_pmf(long n, const GpdParams& p) { return std::exp(gpd_log_pmf(n, p)); }

double gpd_mean(const GpdParams& p) { return p.theta / (1.0 - p.lambda); }

double gpd_var(const GpdParams& p) {
  const double q = 1.0 - p.lambda;
  return p.theta / (q * q * q);
}

long gpd_sample(const GpdParams& p, Rng& rng) {
  const auto m = gpd_truncation(p);
  const double log_norm = gpd_log_normalizer(p);
  const double u = uniform01(rng);
  double cum = 0.0;
  for (long n = 0;; ++n) {
    cum += std::exp(gpd_log_pmf_unnormalized(n, p) - log_norm);
    if (u <= cum || cum >= 1.0 - 1e-12) return n;
    if (m && n >= *m) return n;
  }
}

double GpdLogPmfTable::operator()(long n) const {
  if (n < 0) return kNegInf;
  const auto idx = static_cast<std::size_t>(n);
  if (idx >= cache_.size()) {
    const auto m = gpd_truncation(params_);
    std::size_t from = cache_.size();
    cache_.resize(std::max(idx + 1, 2 * from));
    for (std::size_t k = from; k < cache_.size(); ++k) {
      const auto kk = static_cast<long>(k);
      cache_[k] = (m && kk > *m) ? kNegInf : gpd_log_pmf_unnormalized(kk, params_) - log_norm_;
    }
  }
  return cache_[idx];
}

// --- Kernel -----------------------------------------------------------------

double gauss_kernel(double dx, double dy, double omega) {
  const double s2 = omega * omega;
  return std::exp(-(dx * dx + dy * dy) / (2.0 * s2)) / (2.0 * std::numbers::pi * s2);
}

double log_gauss_kernel(double squared_dist, double omega) {
  const double s2 = omega * omega;
  return -squared_dist / (2.0 * s2) - std::log(2.0 * std::numbers::pi * s2);
}

double gauss_rect_mass(Point c, double omega, const Rect& rect) {
  const double px = normal_interval_prob((rect.x_left - c.x) / omega, (rect.x_right - c.x) / omega);
  const double py = normal_interval_prob((rect.y_bottom - c.y) / omega, (rect.y_top - c.y) / omega);
  return px * py;
}

double gauss_window_mass(Point c, double omega, const Window& w) {
  double m = 0.0;
  for (const auto& r : w.disjoint_rects()) m += gauss_rect_mass(c, omega, r);
  return m;
}

// --- Log-linear components --------------------------------------------------

double log_f_centers(std::span<const double> beta, std::span<const RasterCovariate> covs, Point u) {
  if (beta.size() != covs.size()) throw ConfigError("f: beta length does not match the number of z_beta covariates");
  double eta = 0.0;
  for (std::size_t i = 0; i < covs.size(); ++i) eta += beta[i] * covs[i].value_at(u);
  return eta;
}

double f_centers(std::span<const double> beta, std::span<const RasterCovariate> covs, Point u) {
  return std::exp(log_f_centers(beta, covs, u));
}

double alpha_at(std::span<const double> mu, std::span<const RasterCovariate> covs, Point c) {
  if (mu.size() != covs.size() + 1) throw ConfigError("alpha: mu length must be the number of z_alpha covariates + 1");
  return std::exp(linear_predictor(covs, mu, c));
}

double omega_at(std::span<const double> nu, std::span<const RasterCovariate> covs, Point c) {
  if (nu.size() != covs.size() + 1) throw ConfigError("omega: nu length must be the number of z_omega covariates + 1");
  return std::exp(linear_predictor(covs, nu, c));
}

namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

void validate(const ThomasParams& p, const CovariateSet& covs) {
  if (!(p.kappa > 0.0) || !std::isfinite(p.kappa)) throw ConfigError("Thomas parameters: kappa must be > 0");
  if (p.beta.size() != covs.z_beta.size()) throw ConfigError("Thomas parameters: beta length != number of z_beta covariates");
  if (p.mu.size() != covs.z_alpha.size() + 1) throw ConfigError("Thomas parameters: mu length != number of z_alpha covariates + 1");
  if (p.nu.size() != covs.z_omega.size() + 1) throw ConfigError("Thomas parameters: nu length != number of z_omega covariates + 1");
  if (!all_finite(p.beta) || !all_finite(p.mu) || !all_finite(p.nu)) throw ConfigError("Thomas parameters: non-finite coefficient");
}

void validate(const GtpParams& p) {
  if (!(p.kappa > 0.0) || !std::isfinite(p.kappa)) throw ConfigError("GTP parameters: kappa must be > 0");
  if (!(p.omega > 0.0) || !std::isfinite(p.omega)) throw ConfigError("GTP parameters: omega must be > 0");
  validate(p.gpd);
}

double kappa_from_count(double expected_count, std::span<const double> mu, std::span<const double> beta,
                        const CovariateSet& covs, const QuadratureGrid& grid_w) {
  return KappaIntegrator(beta, covs, grid_w).kappa(expected_count, mu);
}

KappaIntegrator::KappaIntegrator(std::span<const double> beta, const CovariateSet& covs,
                                 const QuadratureGrid& grid_w)
    : n_alpha_(covs.z_alpha.size()) {
  log_wf_.reserve(grid_w.size());
  z_alpha_.reserve(grid_w.size() * n_alpha_);
  for (std::size_t i = 0; i < grid_w.size(); ++i) {
    const Point u = grid_w.nodes[i];
    const double lf = log_f_centers(beta, covs.z_beta, u);
    log_wf_.push_back(std::log(grid_w.weights[i]) + lf);
    homogeneous_sum_ += grid_w.weights[i] * std::exp(lf);
    for (const auto& c : covs.z_alpha) z_alpha_.push_back(c.value_at(u));
  }
}

double KappaIntegrator::integral(std::span<const double> mu) const {
  if (mu.size() != n_alpha_ + 1) throw ConfigError("kappa: mu length mismatch");
  if (n_alpha_ == 0) return std::exp(mu[0]) * homogeneous_sum_;
  double total = 0.0;
  const double* z = z_alpha_.data();
  for (std::size_t i = 0; i < log_wf_.size(); ++i, z += n_alpha_) {
    double eta = mu[0];
    for (std::size_t j = 0; j < n_alpha_; ++j) eta += mu[j + 1] * z[j];
    total += std::exp(log_wf_[i] + eta);
  }
  return total;
}

double KappaIntegrator::kappa(double expected_count, std::span<const double> mu) const {
  const double integral_value = integral(mu);
  if (!(integral_value > 0.0) || !std::isfinite(integral_value)) {
    std::ostringstream msg;
    msg << "kappa: integral of alpha * f over W is " << integral_value;
    throw NumericError(msg.str());
  }
  return expected_count / integral_value;
}

// --- Simulation -------------------------------------------------------------

namespace {

// Upper bound of coef * z over raster cells meeting the rectangle.
double max_term(const RasterCovariate& z, double coef, const Rect& box) {
  auto index = [](double f, std::size_t n) {
    return static_cast<std::size_t>(std::clamp(f, 0.0, static_cast<double>(n - 1)));
  };
  const Point o = z.origin();
  const std::size_t c0 = index(std::floor((box.x_left - o.x) / z.cell()), z.ncols());
  const std::size_t c1 = index(std::floor((box.x_right - o.x) / z.cell()), z.ncols());
  const std::size_t r0 = index(std::floor((box.y_bottom - o.y) / z.cell()), z.nrows());
  const std::size_t r1 = index(std::floor((box.y_top - o.y) / z.cell()), z.nrows());
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t r = r0; r <= r1; ++r) {
    for (std::size_t c = c0; c <= c1; ++c) {
      const double v = z.at(c, r);
      if (!z.is_nodata(v)) best = std::max(best, coef * v);
    }
  }
  return best;
}

template <typename Region>
std::vector<Point> thin_poisson(const Region& region, double area, const Rect& box,
                                std::span<const RasterCovariate> covs, std::span<const double> coeffs, Rng& rng) {
  if (coeffs.size() != covs.size() + 1) throw ConfigError("simulate_poisson: coefficient length mismatch");
  double log_max = coeffs[0];
  for (std::size_t i = 0; i < covs.size(); ++i) log_max += max_term(covs[i], coeffs[i + 1], box);
  const double mean = std::exp(log_max) * area;
  if (!std::isfinite(mean)) {
    std::ostringstream msg;
    msg << "simulate_poisson: maximum intensity exp(" << log_max << ") is not finite";
    throw NumericError(msg.str());
  }
  std::vector<Point> out;
  if (mean <= 0.0) return out;
  const long n = std::poisson_distribution<long>(mean)(rng);
  for (long i = 0; i < n; ++i) {
    const Point p = sample_uniform_point(region, rng);
    const double log_ratio = linear_predictor(covs, coeffs, p) - log_max;
    if (log_ratio >= 0.0 || std::log(uniform01(rng)) < log_ratio) out.push_back(p);
  }
  return out;
}

Rect mask_extent(const DilatedWindow& dw) {
  const Point o = dw.origin();
  return Rect{o.x, o.x + static_cast<double>(dw.ncols()) * dw.cell(), o.y,
              o.y + static_cast<double>(dw.nrows()) * dw.cell()};
}

}  // namespace

std::vector<Point> simulate_poisson(const Window& w, std::span<const RasterCovariate> covs,
                                    std::span<const double> coeffs, Rng& rng) {
  return thin_poisson(w, w.area(), w.bounding_box(), covs, coeffs, rng);
}

std::vector<Point> simulate_poisson(const DilatedWindow& dw, std::span<const RasterCovariate> covs,
                                    std::span<const double> coeffs, Rng& rng) {
  return thin_poisson(dw, dw.area(), mask_extent(dw), covs, coeffs, rng);
}

SimulatedPattern simulate_thomas(const ThomasParams& params, const CovariateSet& covs, const Window& w,
                                 const DilatedWindow& w_dil, Rng& rng) {
  validate(params, covs);
  std::vector<double> coeffs{std::log(params.kappa)};
  coeffs.insert(coeffs.end(), params.beta.begin(), params.beta.end());

  SimulatedPattern out;
  out.parents = simulate_poisson(w_dil, covs.z_beta, coeffs, rng);
  out.cluster_size.reserve(out.parents.size());
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t j = 0; j < out.parents.size(); ++j) {
    const Point c = out.parents[j];
    const double alpha = alpha_at(params.mu, covs.z_alpha, c);
    const double omega = omega_at(params.nu, covs.z_omega, c);
    const long n = alpha > 0.0 ? std::poisson_distribution<long>(alpha)(rng) : 0;
    out.cluster_size.push_back(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
      const Point x{c.x + omega * gauss(rng), c.y + omega * gauss(rng)};
      if (w.contains(x)) {
        out.points.push_back(x);
        out.parent_index.push_back(j);
      }
    }
  }
  return out;
}

SimulatedPattern rgtp(const GtpParams& params, const Window& w, Rng& rng, std::optional<double> cell) {
  validate(params);
  const double radius = 4.0 * params.omega;
  const double c = cell.value_or(std::min(default_cell(w), params.omega / 2.0));
  const DilatedWindow w_dil(w, radius, c);

  SimulatedPattern out;
  const long n_parents = std::poisson_distribution<long>(params.kappa * w_dil.area())(rng);
  out.parents = sample_uniform(w_dil, static_cast<std::size_t>(n_parents), rng);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t j = 0; j < out.parents.size(); ++j) {
    const Point p = out.parents[j];
    const long n = gpd_sample(params.gpd, rng);
    out.cluster_size.push_back(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
      const Point x{p.x + params.omega * gauss(rng), p.y + params.omega * gauss(rng)};
      if (w.contains(x)) {
        out.points.push_back(x);
        out.parent_index.push_back(j);
      }
    }
  }
  return out;
}

}  // namespace nsc
