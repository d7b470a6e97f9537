#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "nsc/covariates.hpp"
#include "nsc/geometry.hpp"
#include "nsc/rng.hpp"

namespace nsc {

// ---------------------------------------------------------------------------
// Generalised Poisson cluster sizes
// ---------------------------------------------------------------------------

/// Generalised Poisson distribution. lambda in [-1, 1), theta > 0.
/// For lambda < 0 the support is {0, ..., m} with m the largest n such that
/// theta + lambda * n > 0, and the pmf is renormalised over that support.
struct GpdParams {
  double lambda = 0.0;
  double theta = 1.0;
};

/// Throws ConfigError when lambda is outside [-1, 1) or theta <= 0.
void validate(const GpdParams& p);

/// Largest admissible cluster size for lambda < 0, nullopt otherwise.
std::optional<long> gpd_truncation(const GpdParams& p);

/// log of the renormalisation constant (0 when lambda >= 0).
double gpd_log_normalizer(const GpdParams& p);

/// Raw log pmf: log(theta) + (n-1) log(theta + lambda n) - theta - lambda n - log n!.
/// -inf outside the support. No renormalisation.
double gpd_log_pmf_unnormalized(long n, const GpdParams& p);

double gpd_log_pmf(long n, const GpdParams& p);
double gpd_pmf(long n, const GpdParams& p);
double gpd_mean(const GpdParams& p);
double gpd_var(const GpdParams& p);

/// Inversion on the cumulative pmf; stops once the cumulative mass reaches
/// 1 - 1e-12 or the truncation bound.
long gpd_sample(const GpdParams& p, Rng& rng);

/// Caches log pmf values for one parameter pair. Used in the samplers where
/// the same (lambda, theta) is evaluated for many cluster sizes.
class GpdLogPmfTable {
 public:
  explicit GpdLogPmfTable(const GpdParams& p) : params_(p), log_norm_(gpd_log_normalizer(p)) {}
  double operator()(long n) const;
  const GpdParams& params() const { return params_; }

 private:
  GpdParams params_;
  double log_norm_;
  mutable std::vector<double> cache_;
};

// ---------------------------------------------------------------------------
// Gaussian dispersal kernel
// ---------------------------------------------------------------------------

/// Isotropic bivariate normal density with standard deviation omega.
double gauss_kernel(double dx, double dy, double omega);
double log_gauss_kernel(double squared_dist, double omega);

/// Exact probability that an isotropic normal centred at c with sd omega
/// falls in the rectangle.
double gauss_rect_mass(Point c, double omega, const Rect& rect);

/// Exact mass over the union of the window's rectangles (overlaps counted once).
double gauss_window_mass(Point c, double omega, const Window& w);

// ---------------------------------------------------------------------------
// Log-linear model components
// ---------------------------------------------------------------------------

/// exp(beta_1 z_1(u) + ... + beta_k z_k(u)); no intercept.
double f_centers(std::span<const double> beta, std::span<const RasterCovariate> covs, Point u);
double log_f_centers(std::span<const double> beta, std::span<const RasterCovariate> covs, Point u);

/// exp(mu_0 + mu_1 z^alpha_1(c) + ...).
double alpha_at(std::span<const double> mu, std::span<const RasterCovariate> covs, Point c);
/// exp(nu_0 + nu_1 z^omega_1(c) + ...).
double omega_at(std::span<const double> nu, std::span<const RasterCovariate> covs, Point c);

struct ThomasParams {
  double kappa = 1.0;
  std::vector<double> beta;  // length k, no intercept
  std::vector<double> mu;    // length l + 1
  std::vector<double> nu;    // length m + 1
};

/// Throws ConfigError when dimensions disagree with the covariate set or a
/// value is not finite / kappa <= 0.
void validate(const ThomasParams& p, const CovariateSet& covs);

struct GtpParams {
  double kappa = 1.0;
  double omega = 0.1;
  GpdParams gpd;
};

void validate(const GtpParams& p);

/// kappa = expected_count / sum_nodes w * alpha(mu, u) f(beta, u).
/// Throws NumericError when the integral is zero or not finite.
double kappa_from_count(double expected_count, std::span<const double> mu, std::span<const double> beta,
                        const CovariateSet& covs, const QuadratureGrid& grid_w);

/// Precomputed form of kappa_from_count for a fixed beta and grid; only mu
/// varies between calls.
class KappaIntegrator {
 public:
  KappaIntegrator(std::span<const double> beta, const CovariateSet& covs, const QuadratureGrid& grid_w);
  /// integral over W of alpha(mu, u) f(beta, u) du
  double integral(std::span<const double> mu) const;
  double kappa(double expected_count, std::span<const double> mu) const;

 private:
  std::size_t n_alpha_ = 0;
  std::vector<double> log_wf_;   // log(weight) + log f at each node
  std::vector<double> z_alpha_;  // node-major alpha covariate values
  double homogeneous_sum_ = 0.0; // sum w f, used when there are no alpha covariates
};

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

struct SimulatedPattern {
  std::vector<Point> points;             // offspring retained inside W
  std::vector<Point> parents;            // all parents on the dilated window
  std::vector<std::size_t> parent_index; // per retained point
  std::vector<std::size_t> cluster_size; // per parent, including discarded offspring
};

/// Inhomogeneous Poisson process with intensity exp(coeffs . (1, z(u))) on
/// the window, by thinning against the raster maximum.
std::vector<Point> simulate_poisson(const Window& w, std::span<const RasterCovariate> covs,
                                    std::span<const double> coeffs, Rng& rng);
std::vector<Point> simulate_poisson(const DilatedWindow& dw, std::span<const RasterCovariate> covs,
                                    std::span<const double> coeffs, Rng& rng);

/// Two-stage simulation: parents ~ Poisson(kappa f(beta, .)) on W_dil, each
/// with Poisson(alpha(mu, c)) offspring displaced by N(0, omega(nu, c)^2 I).
SimulatedPattern simulate_thomas(const ThomasParams& params, const CovariateSet& covs, const Window& w,
                                 const DilatedWindow& w_dil, Rng& rng);

/// Homogeneous generalised Thomas process: parents ~ Poisson(kappa) on W
/// dilated by 4 omega; GPD cluster sizes; Gaussian displacements.
/// `cell` defaults to min(default_cell(W), omega / 2).
SimulatedPattern rgtp(const GtpParams& params, const Window& w, Rng& rng, std::optional<double> cell = {});

}  // namespace nsc
