#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nsc/covariates.hpp"
#include "nsc/errors.hpp"
#include "nsc/firstorder.hpp"
#include "nsc/geometry.hpp"
#include "nsc/model.hpp"
#include "nsc/rng.hpp"

namespace nsc {

/// User-facing control block. Unset hyperparameters are filled by
/// resolve_control(); field names follow the configuration file keys.
struct ThomasControl {
  std::size_t n_step = 50000;        // NStep
  std::size_t burn_in = 25000;       // BurnIn
  std::size_t sampling_freq = 10;    // SamplingFreq
  std::optional<double> prior_alpha_mean;  // Prior_alpha_mean (log scale)
  std::optional<double> prior_alpha_sd;    // Prior_alpha_SD
  std::optional<double> prior_omega_mean;  // Prior_omega_mean (log scale)
  std::optional<double> prior_omega_sd;    // Prior_omega_SD
  std::vector<double> prior_alphavec_sd;   // Prior_alphavec_SD
  std::vector<double> prior_omegavec_sd;   // Prior_omegavec_SD
  std::vector<double> proposal_mu_sd;      // Proposal_alpha_SD (l + 1 entries)
  std::vector<double> proposal_nu_sd;      // Proposal_omega_SD (m + 1 entries)
  std::optional<double> center_move_sd;    // CenterMove_SD
  std::uint64_t seed = 1;
};

/// Fully specified control with every default filled in.
struct ResolvedControl {
  std::size_t n_step = 0;
  std::size_t burn_in = 0;
  std::size_t sampling_freq = 1;
  std::vector<double> prior_mu_mean;  // (Prior_alpha_mean, 0, ..., 0)
  std::vector<double> prior_mu_sd;    // (Prior_alpha_SD, Prior_alphavec_SD...)
  std::vector<double> prior_nu_mean;
  std::vector<double> prior_nu_sd;
  std::vector<double> proposal_mu_sd;
  std::vector<double> proposal_nu_sd;
  double center_move_sd = 0.0;
  std::uint64_t seed = 1;

  bool is_sampled(std::size_t iter) const {
    return iter > burn_in && (iter - burn_in) % sampling_freq == 0;
  }
  std::size_t sample_count() const { return (n_step - burn_in) / sampling_freq; }
};

/// Fills defaults: Prior_alpha_mean = log(sqrt(n)), Prior_alpha_SD = 2,
/// Prior_omega_mean = log(0.05 * shorter window side), Prior_omega_SD = 5,
/// slope prior SDs = 2, proposal SDs = 0.1 * prior SD, centre move SD =
/// exp(Prior_omega_mean). Throws ConfigError on invalid settings.
ResolvedControl resolve_control(const ThomasControl& control, std::size_t n_points, const Window& window,
                                std::size_t n_alpha, std::size_t n_omega);

/// Everything the step-2 sampler conditions on.
struct ThomasProblem {
  std::vector<Point> points;
  CovariateSet covs;
  Window window;
  DilatedWindow dilated;
  QuadratureGrid grid_window;
  QuadratureGrid grid_dilated;
  std::vector<double> beta_hat;  // step-1 slopes (no intercept)

  /// Builds both quadrature grids at the mask cell size. Validates the
  /// covariate set, coverage of the dilated window, and that every data point
  /// lies in the window.
  ThomasProblem(std::vector<Point> points, CovariateSet covs, Window window, DilatedWindow dilated,
                std::vector<double> beta_hat);
};

/// Log-likelihood of the pattern given the centres:
/// sum_x log lambda(x) - sum_c alpha(c) * P(c + omega(c) Z in W), with
/// lambda(u) = sum_c alpha(c) k(u - c, omega(c)).
double cox_loglik(std::span<const Point> points, std::span<const Point> centers, std::span<const double> mu,
                  std::span<const double> nu, const CovariateSet& covs, const Window& w);

/// Poisson log-density of the centres w.r.t. the unit-rate process, without
/// the constant |W_dil|: sum_c log(kappa f(beta, c)) - kappa * int f over the grid.
double center_logprior(std::span<const Point> centers, std::span<const double> beta_hat, double kappa,
                       const CovariateSet& covs, const QuadratureGrid& grid_dilated);

struct CenterCache {
  Point location;
  std::vector<double> z_alpha;  // covariate values at the centre
  std::vector<double> z_omega;
  double log_f = 0.0;
  double alpha = 0.0;
  double omega = 0.0;
  double mass = 0.0;            // Gaussian mass of W around the centre
  std::vector<double> kernel;   // k(x - c, omega) per data point
};

struct ChainState {
  std::vector<CenterCache> centers;
  std::vector<double> mu;
  std::vector<double> nu;
  double kappa = 0.0;
  std::vector<double> intensity;  // lambda(x) per data point
  double loglik = 0.0;            // cox_loglik
  double log_prior_centers = 0.0; // center_logprior

  std::vector<Point> center_locations() const;
};

/// Structured text (JSON) dump of the state.
std::string serialize_state(const ChainState& state);

/// Which parts of the posterior the sampler targets. Test harnesses switch
/// terms off to check the Metropolis-Hastings mechanics against known
/// distributions.
struct TargetTerms {
  bool likelihood = true;
  bool center_prior = true;
  bool parameter_prior = true;
};

enum class MoveType { Birth, Death, Move };

struct MoveTally {
  std::size_t proposed = 0;
  std::size_t accepted = 0;
};

class ThomasSampler {
 public:
  ThomasSampler(const ThomasProblem& problem, ResolvedControl control, TargetTerms terms = {});

  /// Seeds ceil(n / exp(prior alpha mean)) centres at distinct data points
  /// and sets mu, nu to the prior means.
  void initialize(Rng& rng);
  void set_state(std::span<const Point> centers, std::vector<double> mu, std::vector<double> nu);

  bool step_birth_death_move(Rng& rng);
  bool step_update_mu(Rng& rng);
  bool step_update_nu(Rng& rng);

  /// Log acceptance ratios for explicit proposals (no state change).
  double log_ratio_birth(Point c) const;
  double log_ratio_death(std::size_t index) const;
  double log_ratio_move(std::size_t index, Point to) const;
  double log_ratio_mu(std::span<const double> proposal) const;
  double log_ratio_nu(std::span<const double> proposal) const;

  /// Applies a proposal unconditionally (used by tests and by the steps).
  void apply_mu(std::span<const double> proposal);
  void apply_nu(std::span<const double> proposal);
  void apply_move(std::size_t index, Point to);

  const ChainState& state() const { return state_; }
  const ResolvedControl& control() const { return control_; }
  const ThomasProblem& problem() const { return problem_; }
  const MoveTally& tally(MoveType t) const { return tally_[static_cast<std::size_t>(t)]; }

  /// From-scratch values of the cached log-likelihood and centre prior.
  double recompute_loglik() const;
  double recompute_log_prior_centers() const;
  /// Largest absolute difference between cached and recomputed terms.
  double cache_drift() const;
  /// Rebuilds every cache from scratch.
  void refresh();

  double kappa_for(std::span<const double> mu) const { return kappa_.kappa(n_obs_, mu); }
  double integral_f_dilated() const { return integral_f_dil_; }

 private:
  CenterCache make_center(Point c, std::span<const double> mu, std::span<const double> nu) const;
  void fill_kernel(CenterCache& cc) const;
  double sum_log(const std::vector<double>& lam) const;
  void intensity_without(std::size_t skip, std::vector<double>& out) const;
  double log_normal_prior(std::span<const double> v, const std::vector<double>& mean,
                          const std::vector<double>& sd) const;
  double center_prior_value(double kappa, std::size_t n, double sum_log_f) const;
  double sum_log_f() const;

  struct MuEval {
    std::vector<double> alpha;
    std::vector<double> intensity;
    double loglik = 0.0;
    double kappa = 0.0;
    double log_prior_centers = 0.0;
  };
  MuEval evaluate_mu(std::span<const double> mu) const;
  struct NuEval {
    std::vector<CenterCache> centers;
    std::vector<double> intensity;
    double loglik = 0.0;
  };
  NuEval evaluate_nu(std::span<const double> nu) const;

  const ThomasProblem& problem_;
  ResolvedControl control_;
  TargetTerms terms_;
  KappaIntegrator kappa_;
  double n_obs_ = 0.0;
  double integral_f_dil_ = 0.0;
  double log_area_dil_ = 0.0;
  ChainState state_;
  MoveTally tally_[3];
  mutable std::vector<double> scratch_;
};

struct ThomasIteration {
  std::size_t iter = 0;
  double kappa = 0.0;
  std::vector<double> mu;
  std::vector<double> nu;
  std::size_t n_centers = 0;
  double loglik = 0.0;
  std::vector<double> pvalues;  // only on sampled iterations
  bool acc_bdm = false;
  bool acc_mu = false;
  bool acc_nu = false;
  bool sampled = false;
};

struct ThomasTrace {
  std::vector<ThomasIteration> iterations;  // every sweep
  MoveTally birth, death, move;

  std::vector<const ThomasIteration*> sampled() const;
};

/// Chain abort carrying the failing iteration and a state dump.
class ChainError : public Error {
 public:
  ChainError(const std::string& what, std::size_t iteration, std::string state_dump)
      : Error(what), iteration_(iteration), state_dump_(std::move(state_dump)) {}
  std::size_t iteration() const { return iteration_; }
  const std::string& state_dump() const { return state_dump_; }

 private:
  std::size_t iteration_;
  std::string state_dump_;
};

using ThomasIterationSink = std::function<void(const ThomasIteration&)>;

/// Runs n_step sweeps (birth-death-move, mu update, nu update). Centre
/// p-values are computed on sampled iterations. Every 1000 sweeps the caches
/// are compared with a from-scratch evaluation (tolerance 1e-6) and rebuilt.
ThomasTrace run_chain(const ThomasProblem& problem, const ResolvedControl& control,
                      const ThomasIterationSink& sink = {});

}  // namespace nsc
