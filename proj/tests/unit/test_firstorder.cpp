#include <gtest/gtest.h>

#include <cmath>

#include "nsc/errors.hpp"
#include "nsc/firstorder.hpp"
#include "nsc/model.hpp"
#include "oracles.hpp"

using namespace nsc;

namespace {

RasterCovariate linear_x(double x0, double x1, std::size_t n) {
  std::vector<double> v(n * n);
  const double h = (x1 - x0) / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) v[r * n + c] = x0 + (static_cast<double>(c) + 0.5) * h;
  }
  return RasterCovariate("x", {x0, x0}, h, n, n, v);
}

std::vector<Point> uniform_points(const Window& w, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return sample_uniform(w, n, rng);
}

}  // namespace

TEST(PoissonFit, InterceptOnlyIsLogDensity) {
  const Window w({{0, 1, 0, 1}});
  const std::vector<RasterCovariate> none;
  const PoissonFit fit = fit_poisson_intensity(uniform_points(w, 40, 1), none, make_grid(w, 0.01));
  EXPECT_TRUE(fit.converged);
  EXPECT_NEAR(fit.coeffs[0], std::log(40.0), 1e-10);
  EXPECT_TRUE(fit.slopes().empty());

  const Window w2({{0, 2, 0, 1}});
  const PoissonFit fit2 = fit_poisson_intensity(uniform_points(w2, 40, 2), none, make_grid(w2, 0.01));
  EXPECT_NEAR(fit2.coeffs[0], std::log(20.0), 1e-10);
  EXPECT_NEAR(fit2.covariance(0, 0), 1.0 / 40.0, 1e-10);
}

TEST(PoissonFit, EmptyPatternRejected) {
  const Window w({{0, 1, 0, 1}});
  const std::vector<RasterCovariate> none;
  const std::vector<Point> empty;
  EXPECT_THROW(fit_poisson_intensity(empty, none, make_grid(w, 0.1)), ConfigError);
}

TEST(PoissonFit, SimulatedSlopeWithinThreeSd) {
  const Window w({{0, 1, 0, 1}});
  const std::vector<RasterCovariate> covs{linear_x(0, 1, 100)};
  const QuadratureGrid g = make_grid(w, 0.01);
  const std::vector<double> truth{std::log(50.0), 1.2};
  Rng rng(31);
  int hits = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const auto pts = simulate_poisson(w, covs, truth, rng);
    const PoissonFit fit = fit_poisson_intensity(pts, covs, g);
    const double sd = std::sqrt(fit.covariance(1, 1));
    hits += std::abs(fit.coeffs[1] - truth[1]) < 3.0 * sd ? 1 : 0;
  }
  EXPECT_GE(hits, 18);
}

TEST(PoissonLoglik, ClosedForms) {
  const Window w({{0, 1, 0, 1}});
  const QuadratureGrid g = make_grid(w, 0.01);
  const std::vector<RasterCovariate> none;
  const auto pts = uniform_points(w, 25, 3);
  const std::vector<double> zero{0.0};
  EXPECT_NEAR(poisson_loglik(zero, pts, none, g), -1.0, 1e-9);
  const std::vector<double> at_mle{std::log(25.0)};
  EXPECT_NEAR(poisson_loglik(at_mle, pts, none, g), 25.0 * std::log(25.0) - 25.0, 1e-9);
}

TEST(PoissonLoglik, MatchesBruteForce) {
  const Window w({{0, 1, 0, 1}, {0.5, 1.4, 0.8, 1.3}});
  const QuadratureGrid g = make_grid(w, 0.02);
  const std::vector<RasterCovariate> covs{linear_x(-0.5, 2.0, 50)};
  const auto pts = uniform_points(w, 60, 4);
  Rng rng(5);
  std::normal_distribution<double> gauss;
  for (int rep = 0; rep < 10; ++rep) {
    const std::vector<double> c{gauss(rng), gauss(rng)};
    double expected = 0.0;
    for (const auto& p : pts) expected += c[0] + c[1] * covs[0].value_at(p);
    for (std::size_t i = 0; i < g.size(); ++i) expected -= g.weights[i] * std::exp(c[0] + c[1] * covs[0].value_at(g.nodes[i]));
    EXPECT_NEAR(poisson_loglik(c, pts, covs, g), expected, 1e-9 * std::abs(expected) + 1e-9);
    const PoissonRegression reg(covs, g);
    Eigen::VectorXd cv(2);
    cv << c[0], c[1];
    EXPECT_NEAR(reg.log_lik(cv, pts), expected, 1e-9 * std::abs(expected) + 1e-9);
  }
}

TEST(PoissonFit, GradientVanishesAtOptimum) {
  const Window w({{0, 1, 0, 1}});
  const std::vector<RasterCovariate> covs{linear_x(0, 1, 50)};
  const QuadratureGrid g = make_grid(w, 0.02);
  Rng rng(6);
  const std::vector<double> truth{std::log(80.0), -0.8};
  const auto pts = simulate_poisson(w, covs, truth, rng);
  const PoissonRegression reg(covs, g);
  const PoissonFit fit = reg.fit(pts);
  EXPECT_LT(reg.gradient(fit.coeffs, pts).cwiseAbs().maxCoeff(), 1e-8);
  // Any perturbation lowers the likelihood.
  for (double d : {-1e-3, 1e-3}) {
    Eigen::VectorXd c = fit.coeffs;
    c[1] += d;
    EXPECT_LT(reg.log_lik(c, pts), fit.log_lik);
  }
}

TEST(Pvalues, ZeroCoefficientGivesOne) {
  PoissonFit fit;
  fit.coeffs = Eigen::Vector2d(1.0, 0.0);
  fit.covariance = Eigen::Matrix2d::Identity() * 0.04;
  fit.converged = true;
  const auto p = covariate_pvalues(fit);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_DOUBLE_EQ(p[0], 1.0);
}

TEST(Pvalues, StrongEffectIsSignificant) {
  const Window w({{0, 1, 0, 1}});
  const std::vector<RasterCovariate> covs{linear_x(-0.5, 1.5, 80)};
  const DilatedWindow d = dilate(w, 0.25, 0.025);
  const QuadratureGrid g = make_grid(d, d.cell());
  Rng rng(7);
  int hits = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const auto centres = simulate_poisson(d, covs, std::vector<double>{std::log(40.0), 2.0}, rng);
    hits += covariate_pvalues(centres, covs, g)[0] < 0.01 ? 1 : 0;
  }
  EXPECT_GE(hits, 18);
}

TEST(Pvalues, NullEffectIsUniform) {
  const Window w({{0, 1, 0, 1}});
  const std::vector<RasterCovariate> covs{linear_x(-0.5, 1.5, 80)};
  const DilatedWindow d = dilate(w, 0.25, 0.025);
  const QuadratureGrid g = make_grid(d, d.cell());
  Rng rng(8);
  std::vector<double> p;
  for (int rep = 0; rep < 200; ++rep) {
    const auto centres = simulate_poisson(d, covs, std::vector<double>{std::log(60.0), 0.0}, rng);
    p.push_back(covariate_pvalues(centres, covs, g)[0]);
  }
  EXPECT_GT(oracle::ks_pvalue(p, [](double x) { return std::clamp(x, 0.0, 1.0); }), 0.01);
}

TEST(PoissonRegression, MergesIdenticalDesignRows) {
  const Window w({{0, 1, 0, 1}});
  const QuadratureGrid g = make_grid(w, 0.01);
  const std::vector<RasterCovariate> covs{linear_x(0, 1, 10)};
  const PoissonRegression reg(covs, g);
  EXPECT_EQ(reg.unique_nodes(), 10u);
  EXPECT_NEAR(reg.total_weight(), 1.0, 1e-9);
}
