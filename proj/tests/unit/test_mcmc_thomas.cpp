#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "../support/toys.hpp"
#include "nsc/errors.hpp"
#include "nsc/mcmc_thomas.hpp"
#include "oracles.hpp"

using namespace nsc;

namespace {

// Exact probability of the unit square under N(c, omega^2 I), written out
// from erfc rather than through the library kernel.
double square_mass(Point c, double omega) {
  auto axis = [&](double m) {
    const double s = omega * std::sqrt(2.0);
    return 0.5 * (std::erfc((0.0 - m) / s) - std::erfc((1.0 - m) / s));
  };
  return axis(c.x) * axis(c.y);
}

RasterCovariate ramp(const std::string& name, double ax, double ay, double b = 0.0) {
  const std::size_t n = 40;
  const double h = 0.05;
  std::vector<double> v(n * n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double x = -0.5 + (static_cast<double>(c) + 0.5) * h;
      const double y = -0.5 + (static_cast<double>(r) + 0.5) * h;
      v[r * n + c] = ax * x + ay * y + b;
    }
  }
  return RasterCovariate(name, {-0.5, -0.5}, h, n, n, v);
}

struct CovariateProblem {
  Window window{{{0, 1, 0, 1}}};
  DilatedWindow dilated = dilate(window, 0.1, 0.02);
  CovariateSet covs{{ramp("zb", 1.0, 0.0)}, {ramp("za", 0.0, 1.0)}, {ramp("zo", 0.5, 0.5)}};
  std::vector<Point> points;
  std::unique_ptr<ThomasProblem> problem;
  ResolvedControl control;

  explicit CovariateProblem(std::uint64_t seed, std::size_t n = 40) {
    Rng rng(seed);
    points = sample_uniform(window, n, rng);
    problem = std::make_unique<ThomasProblem>(points, covs, window, dilated, std::vector<double>{0.8});
    ThomasControl c;
    c.n_step = 200;
    c.burn_in = 100;
    c.sampling_freq = 5;
    c.seed = seed;
    control = resolve_control(c, points.size(), window, 1, 1);
  }
};

}  // namespace

TEST(Control, Defaults) {
  const Window w({{0, 2, 0, 1}});
  ThomasControl c;
  const ResolvedControl r = resolve_control(c, 100, w, 2, 1);
  EXPECT_EQ(r.n_step, 50000u);
  EXPECT_EQ(r.burn_in, 25000u);
  EXPECT_EQ(r.sampling_freq, 10u);
  ASSERT_EQ(r.prior_mu_mean.size(), 3u);
  EXPECT_DOUBLE_EQ(r.prior_mu_mean[0], std::log(10.0));
  EXPECT_DOUBLE_EQ(r.prior_mu_mean[1], 0.0);
  EXPECT_DOUBLE_EQ(r.prior_mu_sd[0], 2.0);
  EXPECT_DOUBLE_EQ(r.prior_nu_mean[0], std::log(0.05));
  EXPECT_DOUBLE_EQ(r.prior_nu_sd[0], 5.0);
  EXPECT_DOUBLE_EQ(r.prior_nu_sd[1], 2.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(r.proposal_mu_sd[i], 0.1 * r.prior_mu_sd[i]);
  EXPECT_DOUBLE_EQ(r.proposal_nu_sd[0], 0.5);
  EXPECT_DOUBLE_EQ(r.center_move_sd, 0.05);
  EXPECT_EQ(r.sample_count(), 2500u);
  EXPECT_TRUE(r.is_sampled(25010));
  EXPECT_FALSE(r.is_sampled(25000));
  EXPECT_FALSE(r.is_sampled(25005));
}

TEST(Control, Overrides) {
  const Window w({{0, 1, 0, 1}});
  ThomasControl c;
  c.prior_alpha_mean = 1.5;
  c.prior_alphavec_sd = {0.7};
  c.proposal_mu_sd = {0.3, 0.2};
  c.center_move_sd = 0.01;
  const ResolvedControl r = resolve_control(c, 10, w, 1, 0);
  EXPECT_DOUBLE_EQ(r.prior_mu_mean[0], 1.5);
  EXPECT_DOUBLE_EQ(r.prior_mu_sd[1], 0.7);
  EXPECT_DOUBLE_EQ(r.proposal_mu_sd[1], 0.2);
  EXPECT_DOUBLE_EQ(r.center_move_sd, 0.01);
}

TEST(Control, Errors) {
  const Window w({{0, 1, 0, 1}});
  ThomasControl c;
  c.n_step = 10;
  c.burn_in = 10;
  EXPECT_THROW(resolve_control(c, 5, w, 0, 0), ConfigError);
  c.burn_in = 0;
  c.sampling_freq = 0;
  EXPECT_THROW(resolve_control(c, 5, w, 0, 0), ConfigError);
  c.sampling_freq = 1;
  c.prior_alpha_sd = -1.0;
  EXPECT_THROW(resolve_control(c, 5, w, 0, 0), ConfigError);
  c.prior_alpha_sd.reset();
  c.proposal_mu_sd = {0.1, 0.1};
  EXPECT_THROW(resolve_control(c, 5, w, 0, 0), ConfigError);
}

TEST(Problem, PointOutsideWindowIsReported) {
  const Window w({{0, 1, 0, 1}});
  try {
    ThomasProblem p({{0.5, 0.5}, {1.25, 0.5}}, CovariateSet{}, w, dilate(w, 0.1, 0.02), {});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("1.25"), std::string::npos);
  }
}

TEST(CoxLoglik, SingleCentreAtPoint) {
  const Window w({{0, 1, 0, 1}});
  const CovariateSet none;
  const std::vector<Point> x{{0.4, 0.6}};
  const double a = 7.0, om = 0.05;
  const std::vector<double> mu{std::log(a)}, nu{std::log(om)};
  const double expected = std::log(a / (2.0 * std::numbers::pi * om * om)) - a * square_mass(x[0], om);
  EXPECT_NEAR(cox_loglik(x, x, mu, nu, none, w), expected, 1e-12);
}

TEST(CoxLoglik, MatchesSecondImplementation) {
  const Window w({{0, 1, 0, 1}});
  const CovariateSet covs{{}, {ramp("za", 0.3, -0.2)}, {ramp("zo", 0.1, 0.4)}};
  const std::vector<Point> x{{0.2, 0.3}, {0.7, 0.75}};
  const std::vector<Point> c{{0.25, 0.2}, {0.9, 0.95}};
  const std::vector<double> mu{1.3, 0.6}, nu{-2.5, 0.9};
  double expected = 0.0;
  std::vector<double> alpha, omega;
  for (const Point& cc : c) {
    alpha.push_back(std::exp(mu[0] + mu[1] * covs.z_alpha[0].value_at(cc)));
    omega.push_back(std::exp(nu[0] + nu[1] * covs.z_omega[0].value_at(cc)));
  }
  for (const Point& xx : x) {
    double lam = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) {
      const double d2 = (xx.x - c[j].x) * (xx.x - c[j].x) + (xx.y - c[j].y) * (xx.y - c[j].y);
      lam += alpha[j] * std::exp(-d2 / (2 * omega[j] * omega[j])) / (2 * std::numbers::pi * omega[j] * omega[j]);
    }
    expected += std::log(lam);
  }
  for (std::size_t j = 0; j < c.size(); ++j) expected -= alpha[j] * square_mass(c[j], omega[j]);
  EXPECT_NEAR(cox_loglik(x, c, mu, nu, covs, w), expected, 1e-10);
}

TEST(CoxLoglik, DoublingAlphaIdentity) {
  const Window w({{0, 1, 0, 1}});
  const CovariateSet none;
  Rng rng(3);
  const auto x = sample_uniform(w, 12, rng);
  const auto c = sample_uniform(w, 4, rng);
  const std::vector<double> mu{1.0}, mu2{1.0 + std::log(2.0)}, nu{std::log(0.08)};
  double integral = 0.0;
  for (const Point& cc : c) integral += std::exp(1.0) * square_mass(cc, 0.08);
  EXPECT_NEAR(cox_loglik(x, c, mu2, nu, none, w) - cox_loglik(x, c, mu, nu, none, w),
              12.0 * std::log(2.0) - integral, 1e-10);
}

TEST(CentrePrior, ClosedFormsAndQuadratureOracle) {
  const Window w({{0, 1, 0, 1}});
  const DilatedWindow d = dilate(w, 0.2, 0.02);
  const QuadratureGrid g = make_grid(d, d.cell());
  const CovariateSet flat{{ramp("zb", 0.0, 0.0, 0.3)}, {}, {}};
  const std::vector<double> zero{0.0};
  const std::vector<Point> none;
  EXPECT_NEAR(center_logprior(none, zero, 1.0, flat, g), -d.area(), 1e-9);

  const CovariateSet covs{{ramp("zb", 1.2, -0.7)}, {}, {}};
  const std::vector<double> beta{0.9};
  const std::vector<Point> c{{0.1, 0.1}, {1.05, 0.5}};
  const double base = center_logprior(c, beta, 3.0, covs, g);
  const Point u{0.4, -0.1};
  std::vector<Point> c2 = c;
  c2.push_back(u);
  EXPECT_NEAR(center_logprior(c2, beta, 3.0, covs, g) - base, std::log(3.0) + 0.9 * covs.z_beta[0].value_at(u), 1e-12);

  double expected = 0.0;
  for (const Point& p : c) expected += std::log(3.0) + 0.9 * covs.z_beta[0].value_at(p);
  for (std::size_t i = 0; i < g.size(); ++i) expected -= 3.0 * g.weights[i] * std::exp(0.9 * covs.z_beta[0].value_at(g.nodes[i]));
  EXPECT_NEAR(base, expected, 1e-8);
}

TEST(Sampler, InitializeSeedsAtDataPoints) {
  CovariateProblem cp(4, 40);
  ThomasSampler s(*cp.problem, cp.control);
  Rng rng(1);
  s.initialize(rng);
  const auto expected = static_cast<std::size_t>(std::ceil(40.0 / std::exp(cp.control.prior_mu_mean[0])));
  EXPECT_EQ(s.state().centers.size(), expected);
  for (const auto& c : s.state().centers) {
    EXPECT_NE(std::find(cp.points.begin(), cp.points.end(), c.location), cp.points.end());
  }
  EXPECT_EQ(s.state().mu, cp.control.prior_mu_mean);
  EXPECT_NEAR(s.state().loglik, s.recompute_loglik(), 1e-9);
  EXPECT_NEAR(s.state().log_prior_centers, s.recompute_log_prior_centers(), 1e-9);
}

TEST(Sampler, DeathOfLastCentreRejected) {
  toys::ThomasBdmToy toy;
  ThomasSampler s(*toy.problem, toy.control);
  s.set_state(std::vector<Point>{{0.5, 0.5}}, toy.mu(), toy.nu());
  EXPECT_EQ(s.log_ratio_death(0), -std::numeric_limits<double>::infinity());
  Rng rng(2);
  for (int i = 0; i < 2000; ++i) {
    s.step_birth_death_move(rng);
    ASSERT_GE(s.state().centers.size(), 1u);
  }
}

TEST(Sampler, LosingAllIntensityIsRejected) {
  const Window w({{0, 1, 0, 1}});
  ThomasProblem p({{0.1, 0.1}}, CovariateSet{}, w, dilate(w, 0.1, 0.02), {});
  ThomasControl c;
  c.n_step = 10;
  c.burn_in = 0;
  const ResolvedControl rc = resolve_control(c, 1, w, 0, 0);
  ThomasSampler s(p, rc);
  s.set_state(std::vector<Point>{{0.1, 0.1}, {0.9, 0.9}}, {std::log(5.0)}, {std::log(0.005)});
  EXPECT_EQ(s.log_ratio_death(0), -std::numeric_limits<double>::infinity());
  EXPECT_EQ(s.log_ratio_move(0, {0.9, 0.1}), -std::numeric_limits<double>::infinity());
  EXPECT_TRUE(std::isfinite(s.log_ratio_death(1)));
}

TEST(Sampler, ExchangeConsistency) {
  CovariateProblem cp(5, 30);
  ThomasSampler s(*cp.problem, cp.control);
  Rng rng(6);
  std::normal_distribution<double> g;
  for (int rep = 0; rep < 20; ++rep) {
    const auto start = sample_uniform(cp.dilated, 3 + static_cast<std::size_t>(rep % 4), rng);
    const std::vector<double> mu{1.0 + 0.3 * g(rng), 0.2 * g(rng)};
    const std::vector<double> nu{std::log(0.07) + 0.2 * g(rng), 0.3 * g(rng)};
    s.set_state(start, mu, nu);

    const Point born = sample_uniform_point(cp.dilated, rng);
    const double fwd_birth = s.log_ratio_birth(born);
    std::vector<Point> grown = start;
    grown.push_back(born);
    ThomasSampler t(*cp.problem, cp.control);
    t.set_state(grown, mu, nu);
    EXPECT_NEAR(fwd_birth, -t.log_ratio_death(grown.size() - 1), 1e-9);

    const Point from = s.state().centers[0].location;
    const Point to{std::clamp(from.x + 0.05 * g(rng), -0.05, 1.05), std::clamp(from.y + 0.05 * g(rng), -0.05, 1.05)};
    const double fwd_move = s.log_ratio_move(0, to);
    s.apply_move(0, to);
    EXPECT_NEAR(fwd_move, -s.log_ratio_move(0, from), 1e-9);
    s.apply_move(0, from);

    const std::vector<double> mu_p{mu[0] + 0.1 * g(rng), mu[1] + 0.1 * g(rng)};
    const double fwd_mu = s.log_ratio_mu(mu_p);
    s.apply_mu(mu_p);
    EXPECT_NEAR(fwd_mu, -s.log_ratio_mu(mu), 1e-9);
    s.apply_mu(mu);

    const std::vector<double> nu_p{nu[0] + 0.1 * g(rng), nu[1] + 0.1 * g(rng)};
    const double fwd_nu = s.log_ratio_nu(nu_p);
    s.apply_nu(nu_p);
    EXPECT_NEAR(fwd_nu, -s.log_ratio_nu(nu), 1e-9);
  }
}

TEST(Sampler, ZeroStepIsAlwaysAccepted) {
  CovariateProblem cp(7, 25);
  ThomasSampler s(*cp.problem, cp.control);
  Rng rng(8);
  s.initialize(rng);
  EXPECT_EQ(s.log_ratio_mu(s.state().mu), 0.0);
  EXPECT_EQ(s.log_ratio_nu(s.state().nu), 0.0);
  EXPECT_EQ(s.log_ratio_move(0, s.state().centers[0].location), 0.0);
}

TEST(Sampler, KappaFollowsMu) {
  CovariateProblem cp(9, 25);
  ThomasSampler s(*cp.problem, cp.control);
  Rng rng(10);
  s.initialize(rng);
  int accepted = 0;
  for (int i = 0; i < 200 && accepted < 5; ++i) {
    if (!s.step_update_mu(rng)) continue;
    ++accepted;
    EXPECT_EQ(s.state().kappa, kappa_from_count(25.0, s.state().mu, cp.problem->beta_hat, cp.covs,
                                                cp.problem->grid_window));
    EXPECT_NEAR(s.state().log_prior_centers, s.recompute_log_prior_centers(), 1e-9);
  }
  EXPECT_GT(accepted, 0);
}

TEST(Sampler, CachesTrackFullRecomputation) {
  CovariateProblem cp(11, 40);
  ThomasSampler s(*cp.problem, cp.control);
  Rng rng(12);
  s.initialize(rng);
  for (int i = 0; i < 600; ++i) {
    s.step_birth_death_move(rng);
    s.step_update_mu(rng);
    s.step_update_nu(rng);
  }
  EXPECT_LT(s.cache_drift(), 1e-8);
}

TEST(Sampler, PriorOnlyChainMatchesNormalPrior) {
  toys::ThomasBdmToy toy;
  ResolvedControl rc = toy.control;
  rc.proposal_mu_sd = {2.4 * rc.prior_mu_sd[0]};
  rc.proposal_nu_sd = {2.4 * rc.prior_nu_sd[0]};
  ThomasSampler s(*toy.problem, rc, TargetTerms{false, false, true});
  s.set_state(std::vector<Point>{{0.5, 0.5}}, toy.mu(), toy.nu());
  Rng rng(13);
  std::vector<double> mu, nu;
  for (int i = 0; i < 1000000; ++i) {
    s.step_update_mu(rng);
    s.step_update_nu(rng);
    if (i % 10 == 0) {
      mu.push_back(s.state().mu[0]);
      nu.push_back(s.state().nu[0]);
    }
  }
  const double m0 = rc.prior_mu_mean[0], s0 = rc.prior_mu_sd[0];
  const double m1 = rc.prior_nu_mean[0], s1 = rc.prior_nu_sd[0];
  EXPECT_GT(oracle::ks_pvalue(mu, [&](double v) { return oracle::std_normal_cdf((v - m0) / s0); }), 0.01);
  EXPECT_GT(oracle::ks_pvalue(nu, [&](double v) { return oracle::std_normal_cdf((v - m1) / s1); }), 0.01);
}

TEST(Sampler, BirthDeathMoveMatchesEnumeration) {
  toys::ThomasBdmToy toy;
  ThomasSampler s(*toy.problem, toy.control);
  s.set_state(std::vector<Point>{{0.5, 0.5}}, toy.mu(), toy.nu());
  const std::size_t kmax = 40;
  const auto expected = toy.count_distribution(kmax);
  std::vector<double> observed(kmax, 0.0);
  Rng rng(14);
  const int steps = 300000;
  for (int i = 0; i < steps; ++i) {
    s.step_birth_death_move(rng);
    const std::size_t k = s.state().centers.size();
    ASSERT_LE(k, kmax);
    observed[k - 1] += 1.0 / steps;
  }
  EXPECT_LT(oracle::total_variation(observed, expected), 0.03);
}

TEST(RunChain, RecordCountAndDeterminism) {
  CovariateProblem cp(15, 30);
  ResolvedControl rc = cp.control;
  rc.n_step = 10;
  rc.burn_in = 0;
  rc.sampling_freq = 1;
  const ThomasTrace a = run_chain(*cp.problem, rc);
  ASSERT_EQ(a.iterations.size(), 10u);
  EXPECT_EQ(a.sampled().size(), 10u);
  for (const auto& it : a.iterations) EXPECT_EQ(it.pvalues.size(), 1u);

  const ThomasTrace b = run_chain(*cp.problem, cp.control);
  const ThomasTrace c = run_chain(*cp.problem, cp.control);
  ASSERT_EQ(b.iterations.size(), c.iterations.size());
  for (std::size_t i = 0; i < b.iterations.size(); ++i) {
    const auto& x = b.iterations[i];
    const auto& y = c.iterations[i];
    EXPECT_EQ(x.kappa, y.kappa);
    EXPECT_EQ(x.mu, y.mu);
    EXPECT_EQ(x.nu, y.nu);
    EXPECT_EQ(x.loglik, y.loglik);
    EXPECT_EQ(x.n_centers, y.n_centers);
    EXPECT_EQ(x.sampled, y.sampled);
    if (x.sampled) {
      ASSERT_EQ(x.pvalues.size(), 1u);
      EXPECT_TRUE(x.pvalues[0] == y.pvalues[0] || (std::isnan(x.pvalues[0]) && std::isnan(y.pvalues[0])));
    } else {
      EXPECT_TRUE(x.pvalues.empty());
    }
  }
  EXPECT_EQ(b.sampled().size(), cp.control.sample_count());
  EXPECT_EQ(b.birth.proposed + b.death.proposed + b.move.proposed, cp.control.n_step);
}

TEST(RunChain, SinkSeesEveryIteration) {
  CovariateProblem cp(16, 20);
  std::size_t seen = 0;
  run_chain(*cp.problem, cp.control, [&](const ThomasIteration& it) { EXPECT_EQ(it.iter, ++seen); });
  EXPECT_EQ(seen, cp.control.n_step);
}

TEST(State, SerializesAsJson) {
  toys::ThomasBdmToy toy;
  ThomasSampler s(*toy.problem, toy.control);
  s.set_state(std::vector<Point>{{0.5, 0.5}, {0.2, 0.1}}, toy.mu(), toy.nu());
  const std::string dump = serialize_state(s.state());
  EXPECT_NE(dump.find("\"mu\""), std::string::npos);
  EXPECT_NE(dump.find("centers"), std::string::npos);
}
