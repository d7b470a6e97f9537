#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nsc/errors.hpp"
#include "nsc/geometry.hpp"
#include "nsc/model.hpp"
#include "nsc/rng.hpp"
#include "nsc/stats.hpp"

namespace nsc {

/// Settings for the generalised Thomas sampler. Prior hyperparameters are
/// lognormal (a, b) for kappa, omega, theta and uniform [l, u] for lambda.
/// The proposal scales skappa, somega, stheta are absolute; the sampler walks
/// on the log scale with relative scale s / prior mean.
struct GtpControl {
  double a_kappa = 4.0, b_kappa = 1.0;
  double a_omega = -3.0, b_omega = 1.0;
  double l_lambda = -1.0, u_lambda = 0.99;
  double a_theta = 4.0, b_theta = 1.0;
  std::optional<double> skappa;  // default: prior mean / 100
  std::optional<double> somega;
  std::optional<double> stheta;
  double dlambda = 0.01;
  double smove = 0.1;
  std::size_t iter = 1000;
  std::size_t discard = 100;
  std::size_t step = 10;
  std::size_t conn_multiplier = 1;     // connection updates per sweep
  std::optional<double> dilation;      // default exp(a_omega)
  std::optional<double> fixed_lambda;  // hold lambda at this value
  std::uint64_t seed = 1;
};

/// Mean of lognormal(a, b): exp(a + b^2 / 2).
double lognormal_mean(double a, double b);

/// Checks scales and prior bounds; throws ConfigError.
void validate(const GtpControl& c);

/// Reflects x into [lo, hi].
double reflect_into(double x, double lo, double hi);

/// Allocation log-likelihood:
/// sum_j log(n_j! p(n_j)) + sum_x log k(x - c_a(x), omega) + n_c log kappa - kappa |W_dil|.
/// The n_j! counts the orderings of a cluster's points; with lambda = 0 this
/// is the usual Poisson-cluster allocation likelihood.
double gtp_loglik(std::span<const Point> points, std::span<const Point> centers,
                  std::span<const std::size_t> allocation, const GtpParams& params, double area_dilated);

struct GtpState {
  std::vector<Point> centers;
  std::vector<std::size_t> allocation;          // per point
  std::vector<std::vector<std::size_t>> members;  // per centre
  GtpParams params;

  long size(std::size_t j) const { return static_cast<long>(members[j].size()); }
  std::size_t empty_count() const;
};

std::string serialize_state(const GtpState& state);

struct GtpTerms {
  bool likelihood = true;
  bool parameter_prior = true;
};

class GtpSampler {
 public:
  GtpSampler(std::vector<Point> points, const Window& window, const DilatedWindow& dilated, GtpControl control,
             GtpTerms terms = {});

  /// Single-linkage clusters at distance exp(a_omega) seed the centres (one
  /// per cluster, at its centroid); lambda = 0 clamped into the prior range,
  /// theta from the mean cluster size, omega from the within-cluster spread,
  /// kappa = n_c / |W_dil|.
  void initialize();
  void set_state(std::vector<Point> centers, std::vector<std::size_t> allocation, const GtpParams& params);

  bool step_kappa(Rng& rng);
  bool step_omega(Rng& rng);
  bool step_lambda(Rng& rng);
  bool step_theta(Rng& rng);
  bool step_centers(Rng& rng);
  bool step_connection(Rng& rng);

  double log_ratio_params(const GtpParams& proposal) const;
  double log_ratio_birth() const;
  double log_ratio_death(std::size_t j) const;
  double log_ratio_move(std::size_t j, Point to) const;
  double log_ratio_connection(std::size_t i, std::size_t to) const;

  void apply_birth(Point c);
  void apply_death(std::size_t j);
  void apply_move(std::size_t j, Point to);
  void apply_connection(std::size_t i, std::size_t to);
  void apply_params(const GtpParams& p);

  const GtpState& state() const { return state_; }
  const GtpControl& control() const { return control_; }
  std::span<const Point> points() const { return points_; }
  double area_dilated() const { return area_dil_; }

  /// Cached log-likelihood and its from-scratch value.
  double loglik() const;
  double recompute_loglik() const;
  void refresh();

 private:
  double pmf_sum(const GpdParams& g) const;
  double kernel_term(double omega) const;
  double center_term(double kappa) const;
  double log_prior(const GtpParams& p) const;
  double members_sq(std::size_t j, Point c) const;

  std::vector<Point> points_;
  const Window& window_;
  const DilatedWindow& dilated_;
  GtpControl control_;
  GtpTerms terms_;
  double area_dil_;
  double rel_kappa_, rel_omega_, rel_theta_;
  GtpState state_;
  GpdLogPmfTable table_{GpdParams{}};
  double cached_pmf_sum_ = 0.0;
  double sq_sum_ = 0.0;             // sum of squared point-to-centre distances
  std::vector<std::size_t> slot_;  // position of each point in its centre's member list
};

struct GtpIteration {
  std::size_t iter = 0;
  double kappa = 0.0, omega = 0.0, lambda = 0.0, theta = 0.0;
  std::size_t n_centers = 0;
  double loglik = 0.0;
  bool acc_kappa = false, acc_omega = false, acc_lambda = false, acc_theta = false, acc_centers = false;
  double acc_conn = 0.0;  // accepted fraction of this sweep's connection updates
};

struct GtpTrace {
  std::vector<GtpIteration> iterations;
};

class GtpChainError : public Error {
 public:
  GtpChainError(const std::string& what, std::size_t iteration, std::string dump)
      : Error(what), iteration_(iteration), dump_(std::move(dump)) {}
  std::size_t iteration() const { return iteration_; }
  const std::string& state_dump() const { return dump_; }

 private:
  std::size_t iteration_;
  std::string dump_;
};

using GtpIterationSink = std::function<void(const GtpIteration&)>;

/// W_dil for the sampler: dilation radius from the control.
DilatedWindow gtp_dilated_window(const Window& w, const GtpControl& control);

/// Runs control.iter sweeps: kappa, omega, lambda, theta, one centre move,
/// conn_multiplier connection updates.
GtpTrace estgtp(std::span<const Point> points, const Window& window, const GtpControl& control,
                const GtpIterationSink& sink = {});

struct GtpSummary {
  QuantileSummary kappa, omega, lambda, theta;
  std::size_t samples = 0;
  bool poisson_rejected = false;

  std::string verdict() const;
};

/// Summaries over iterations discard, discard + step, ... (0-based).
GtpSummary summarize_gtp(const GtpTrace& trace, std::size_t discard, std::size_t step);

}  // namespace nsc
