#include "nsc/mcmc_thomas.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace nsc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::size_t kDriftCheckEvery = 1000;
constexpr double kDriftTolerance = 1e-6;

void check_sds(const std::vector<double>& v, const char* what) {
  for (double s : v) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      std::ostringstream msg;
      msg << "control: " << what << " entries must be finite and > 0 (got " << s << ")";
      throw ConfigError(msg.str());
    }
  }
}

std::vector<double> with_default(const std::vector<double>& given, std::size_t n, double fallback, const char* what) {
  if (given.empty()) return std::vector<double>(n, fallback);
  if (given.size() != n) {
    std::ostringstream msg;
    msg << "control: " << what << " has " << given.size() << " entries, expected " << n;
    throw ConfigError(msg.str());
  }
  return given;
}

double safe_diff(double a, double b) {
  if (a == b) return 0.0;  // also covers equal infinities
  return a - b;
}

}  // namespace

ResolvedControl resolve_control(const ThomasControl& c, std::size_t n_points, const Window& window,
                                std::size_t n_alpha, std::size_t n_omega) {
  if (c.n_step == 0) throw ConfigError("control: NStep must be >= 1");
  if (c.burn_in >= c.n_step) throw ConfigError("control: BurnIn must be smaller than NStep");
  if (c.sampling_freq == 0) throw ConfigError("control: SamplingFreq must be >= 1");

  ResolvedControl r;
  r.n_step = c.n_step;
  r.burn_in = c.burn_in;
  r.sampling_freq = c.sampling_freq;
  r.seed = c.seed;

  const double n = static_cast<double>(std::max<std::size_t>(n_points, 1));
  const auto& box = window.bounding_box();
  const double side = std::min(box.width(), box.height());

  r.prior_mu_mean.assign(n_alpha + 1, 0.0);
  r.prior_mu_mean[0] = c.prior_alpha_mean.value_or(std::log(std::sqrt(n)));
  r.prior_mu_sd = {c.prior_alpha_sd.value_or(2.0)};
  const auto avec = with_default(c.prior_alphavec_sd, n_alpha, 2.0, "Prior_alphavec_SD");
  r.prior_mu_sd.insert(r.prior_mu_sd.end(), avec.begin(), avec.end());

  r.prior_nu_mean.assign(n_omega + 1, 0.0);
  r.prior_nu_mean[0] = c.prior_omega_mean.value_or(std::log(0.05 * side));
  r.prior_nu_sd = {c.prior_omega_sd.value_or(5.0)};
  const auto ovec = with_default(c.prior_omegavec_sd, n_omega, 2.0, "Prior_omegavec_SD");
  r.prior_nu_sd.insert(r.prior_nu_sd.end(), ovec.begin(), ovec.end());

  std::vector<double> mu_prop(r.prior_mu_sd), nu_prop(r.prior_nu_sd);
  for (double& s : mu_prop) s *= 0.1;
  for (double& s : nu_prop) s *= 0.1;
  r.proposal_mu_sd = c.proposal_mu_sd.empty() ? mu_prop : with_default(c.proposal_mu_sd, n_alpha + 1, 0.0, "Proposal_alpha_SD");
  r.proposal_nu_sd = c.proposal_nu_sd.empty() ? nu_prop : with_default(c.proposal_nu_sd, n_omega + 1, 0.0, "Proposal_omega_SD");
  r.center_move_sd = c.center_move_sd.value_or(std::exp(r.prior_nu_mean[0]));

  if (!std::isfinite(r.prior_mu_mean[0]) || !std::isfinite(r.prior_nu_mean[0])) {
    throw ConfigError("control: prior means must be finite");
  }
  check_sds(r.prior_mu_sd, "alpha prior SD");
  check_sds(r.prior_nu_sd, "omega prior SD");
  check_sds(r.proposal_mu_sd, "alpha proposal SD");
  check_sds(r.proposal_nu_sd, "omega proposal SD");
  check_sds({r.center_move_sd}, "centre move SD");
  return r;
}

ThomasProblem::ThomasProblem(std::vector<Point> pts, CovariateSet c, Window w, DilatedWindow dw,
                             std::vector<double> beta)
    : points(std::move(pts)),
      covs(std::move(c)),
      window(std::move(w)),
      dilated(std::move(dw)),
      grid_window(make_grid(window, dilated.cell())),
      grid_dilated(make_grid(dilated, dilated.cell())),
      beta_hat(std::move(beta)) {
  covs.validate();
  covs.check_coverage(dilated);
  if (beta_hat.size() != covs.z_beta.size()) {
    throw ConfigError("problem: beta_hat length does not match the number of z_beta covariates");
  }
  for (const Point& p : points) {
    if (!window.contains(p)) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "data point (" << p.x << ", " << p.y << ") lies outside the observation window";
      throw ValidationError(msg.str());
    }
  }
}

double cox_loglik(std::span<const Point> points, std::span<const Point> centers, std::span<const double> mu,
                  std::span<const double> nu, const CovariateSet& covs, const Window& w) {
  std::vector<double> alpha, omega;
  double integral = 0.0;
  for (const Point& c : centers) {
    alpha.push_back(alpha_at(mu, covs.z_alpha, c));
    omega.push_back(omega_at(nu, covs.z_omega, c));
    integral += alpha.back() * gauss_window_mass(c, omega.back(), w);
  }
  double data = 0.0;
  for (const Point& x : points) {
    double lam = 0.0;
    for (std::size_t j = 0; j < centers.size(); ++j) {
      lam += alpha[j] * gauss_kernel(x.x - centers[j].x, x.y - centers[j].y, omega[j]);
    }
    if (!(lam > 0.0)) return kNegInf;
    data += std::log(lam);
  }
  return data - integral;
}

double center_logprior(std::span<const Point> centers, std::span<const double> beta_hat, double kappa,
                       const CovariateSet& covs, const QuadratureGrid& grid_dilated) {
  double integral_f = 0.0;
  for (std::size_t i = 0; i < grid_dilated.size(); ++i) {
    integral_f += grid_dilated.weights[i] * f_centers(beta_hat, covs.z_beta, grid_dilated.nodes[i]);
  }
  double s = -kappa * integral_f;
  for (const Point& c : centers) s += std::log(kappa) + log_f_centers(beta_hat, covs.z_beta, c);
  return s;
}

std::vector<Point> ChainState::center_locations() const {
  std::vector<Point> out;
  out.reserve(centers.size());
  for (const auto& c : centers) out.push_back(c.location);
  return out;
}

std::string serialize_state(const ChainState& state) {
  nlohmann::ordered_json j;
  j["kappa"] = state.kappa;
  j["mu"] = state.mu;
  j["nu"] = state.nu;
  j["loglik"] = std::isfinite(state.loglik) ? nlohmann::ordered_json(state.loglik) : nlohmann::ordered_json(nullptr);
  j["log_prior_centers"] = std::isfinite(state.log_prior_centers)
                               ? nlohmann::ordered_json(state.log_prior_centers)
                               : nlohmann::ordered_json(nullptr);
  auto centers = nlohmann::ordered_json::array();
  for (const auto& c : state.centers) {
    centers.push_back({{"x", c.location.x}, {"y", c.location.y}, {"alpha", c.alpha}, {"omega", c.omega}});
  }
  j["centers"] = std::move(centers);
  return j.dump(2);
}

// --- Sampler -----------------------------------------------------------------

ThomasSampler::ThomasSampler(const ThomasProblem& problem, ResolvedControl control, TargetTerms terms)
    : problem_(problem),
      control_(std::move(control)),
      terms_(terms),
      kappa_(problem.beta_hat, problem.covs, problem.grid_window),
      n_obs_(static_cast<double>(problem.points.size())) {
  if (control_.prior_mu_mean.size() != problem.covs.z_alpha.size() + 1 ||
      control_.prior_nu_mean.size() != problem.covs.z_omega.size() + 1) {
    throw ConfigError("sampler: control dimensions do not match the covariate set");
  }
  for (std::size_t i = 0; i < problem.grid_dilated.size(); ++i) {
    integral_f_dil_ += problem.grid_dilated.weights[i] *
                       f_centers(problem.beta_hat, problem.covs.z_beta, problem.grid_dilated.nodes[i]);
  }
  log_area_dil_ = std::log(problem.dilated.area());
}

void ThomasSampler::fill_kernel(CenterCache& cc) const {
  const auto& pts = problem_.points;
  cc.kernel.resize(pts.size());
  const double inv2s2 = 1.0 / (2.0 * cc.omega * cc.omega);
  const double norm = 1.0 / (2.0 * std::numbers::pi * cc.omega * cc.omega);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    cc.kernel[i] = norm * std::exp(-squared_distance(pts[i], cc.location) * inv2s2);
  }
}

CenterCache ThomasSampler::make_center(Point c, std::span<const double> mu, std::span<const double> nu) const {
  CenterCache cc;
  cc.location = c;
  for (const auto& z : problem_.covs.z_alpha) cc.z_alpha.push_back(z.value_at(c));
  for (const auto& z : problem_.covs.z_omega) cc.z_omega.push_back(z.value_at(c));
  cc.log_f = log_f_centers(problem_.beta_hat, problem_.covs.z_beta, c);
  double ea = mu[0];
  for (std::size_t j = 0; j < cc.z_alpha.size(); ++j) ea += mu[j + 1] * cc.z_alpha[j];
  double eo = nu[0];
  for (std::size_t j = 0; j < cc.z_omega.size(); ++j) eo += nu[j + 1] * cc.z_omega[j];
  cc.alpha = std::exp(ea);
  cc.omega = std::exp(eo);
  cc.mass = gauss_window_mass(c, cc.omega, problem_.window);
  fill_kernel(cc);
  return cc;
}

double ThomasSampler::sum_log(const std::vector<double>& lam) const {
  double s = 0.0;
  for (double v : lam) {
    if (!(v > 0.0)) return kNegInf;
    s += std::log(v);
  }
  return s;
}

void ThomasSampler::intensity_without(std::size_t skip, std::vector<double>& out) const {
  out.assign(problem_.points.size(), 0.0);
  const auto& cs = state_.centers;
  for (std::size_t j = 0; j < cs.size(); ++j) {
    if (j == skip) continue;
    const double a = cs[j].alpha;
    const double* k = cs[j].kernel.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += a * k[i];
  }
}

double ThomasSampler::log_normal_prior(std::span<const double> v, const std::vector<double>& mean,
                                       const std::vector<double>& sd) const {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double z = (v[i] - mean[i]) / sd[i];
    s -= 0.5 * z * z;
  }
  return s;
}

double ThomasSampler::center_prior_value(double kappa, std::size_t n, double slf) const {
  if (!(kappa > 0.0)) return n == 0 ? 0.0 : kNegInf;
  return static_cast<double>(n) * std::log(kappa) + slf - kappa * integral_f_dil_;
}

double ThomasSampler::sum_log_f() const {
  double s = 0.0;
  for (const auto& c : state_.centers) s += c.log_f;
  return s;
}

void ThomasSampler::set_state(std::span<const Point> centers, std::vector<double> mu, std::vector<double> nu) {
  if (centers.empty()) throw ConfigError("sampler: at least one centre is required");
  if (mu.size() != control_.prior_mu_mean.size() || nu.size() != control_.prior_nu_mean.size()) {
    throw ConfigError("sampler: mu/nu length mismatch");
  }
  for (const Point& c : centers) {
    if (!problem_.dilated.contains(c)) throw ConfigError("sampler: centre outside the dilated window");
  }
  state_ = ChainState{};
  state_.mu = std::move(mu);
  state_.nu = std::move(nu);
  for (const Point& c : centers) state_.centers.push_back(make_center(c, state_.mu, state_.nu));
  refresh();
}

void ThomasSampler::refresh() {
  for (auto& cc : state_.centers) {
    double ea = state_.mu[0];
    for (std::size_t j = 0; j < cc.z_alpha.size(); ++j) ea += state_.mu[j + 1] * cc.z_alpha[j];
    double eo = state_.nu[0];
    for (std::size_t j = 0; j < cc.z_omega.size(); ++j) eo += state_.nu[j + 1] * cc.z_omega[j];
    cc.alpha = std::exp(ea);
    cc.omega = std::exp(eo);
    cc.mass = gauss_window_mass(cc.location, cc.omega, problem_.window);
    fill_kernel(cc);
  }
  state_.kappa = n_obs_ > 0.0 ? kappa_.kappa(n_obs_, state_.mu) : 0.0;
  intensity_without(static_cast<std::size_t>(-1), state_.intensity);
  double mass = 0.0;
  for (const auto& cc : state_.centers) mass += cc.alpha * cc.mass;
  state_.loglik = sum_log(state_.intensity) - mass;
  state_.log_prior_centers = center_prior_value(state_.kappa, state_.centers.size(), sum_log_f());
}

void ThomasSampler::initialize(Rng& rng) {
  const std::size_t n = problem_.points.size();
  const double mean_size = std::exp(control_.prior_mu_mean[0]);
  auto count = static_cast<std::size_t>(std::ceil(static_cast<double>(n) / mean_size));
  count = std::clamp<std::size_t>(count, 1, std::max<std::size_t>(n, 1));

  std::vector<Point> seeds;
  if (n == 0) {
    seeds.push_back(sample_uniform_point(problem_.dilated, rng));
  } else {
    // Partial Fisher-Yates: the first `count` entries are a uniform draw
    // without replacement.
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < count; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(idx[i], idx[pick(rng)]);
      seeds.push_back(problem_.points[idx[i]]);
    }
  }
  set_state(seeds, control_.prior_mu_mean, control_.prior_nu_mean);
}

double ThomasSampler::recompute_loglik() const {
  const auto locs = state_.center_locations();
  return cox_loglik(problem_.points, locs, state_.mu, state_.nu, problem_.covs, problem_.window);
}

double ThomasSampler::recompute_log_prior_centers() const {
  const auto locs = state_.center_locations();
  const double kappa = n_obs_ > 0.0 ? kappa_.kappa(n_obs_, state_.mu) : 0.0;
  if (!(kappa > 0.0)) return center_prior_value(kappa, locs.size(), 0.0);
  return center_logprior(locs, problem_.beta_hat, kappa, problem_.covs, problem_.grid_dilated);
}

double ThomasSampler::cache_drift() const {
  const double a = std::fabs(safe_diff(state_.loglik, recompute_loglik()));
  const double b = std::fabs(safe_diff(state_.log_prior_centers, recompute_log_prior_centers()));
  return std::max(a, b);
}

// --- Birth / death / move ----------------------------------------------------

double ThomasSampler::log_ratio_birth(Point c) const {
  if (!problem_.dilated.contains(c)) return kNegInf;
  const CenterCache cc = make_center(c, state_.mu, state_.nu);
  scratch_ = state_.intensity;
  for (std::size_t i = 0; i < scratch_.size(); ++i) scratch_[i] += cc.alpha * cc.kernel[i];
  double mass = cc.alpha * cc.mass;
  for (const auto& o : state_.centers) mass += o.alpha * o.mass;
  const double ll = sum_log(scratch_) - mass;
  double r = log_area_dil_ - std::log(static_cast<double>(state_.centers.size() + 1));
  if (terms_.likelihood) r += safe_diff(ll, state_.loglik);
  if (terms_.center_prior) r += std::log(state_.kappa) + cc.log_f;
  return r;
}

double ThomasSampler::log_ratio_death(std::size_t index) const {
  const auto n = state_.centers.size();
  if (n <= 1) return kNegInf;
  intensity_without(index, scratch_);
  double mass = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j != index) mass += state_.centers[j].alpha * state_.centers[j].mass;
  }
  const double ll = sum_log(scratch_) - mass;
  double r = std::log(static_cast<double>(n)) - log_area_dil_;
  if (terms_.likelihood) r += safe_diff(ll, state_.loglik);
  if (terms_.center_prior) r -= std::log(state_.kappa) + state_.centers[index].log_f;
  return r;
}

double ThomasSampler::log_ratio_move(std::size_t index, Point to) const {
  if (!problem_.dilated.contains(to)) return kNegInf;
  const CenterCache cc = make_center(to, state_.mu, state_.nu);
  intensity_without(index, scratch_);
  for (std::size_t i = 0; i < scratch_.size(); ++i) scratch_[i] += cc.alpha * cc.kernel[i];
  double mass = cc.alpha * cc.mass;
  for (std::size_t j = 0; j < state_.centers.size(); ++j) {
    if (j != index) mass += state_.centers[j].alpha * state_.centers[j].mass;
  }
  const double ll = sum_log(scratch_) - mass;
  double r = 0.0;
  if (terms_.likelihood) r += safe_diff(ll, state_.loglik);
  if (terms_.center_prior) r += cc.log_f - state_.centers[index].log_f;
  return r;
}

void ThomasSampler::apply_move(std::size_t index, Point to) {
  CenterCache cc = make_center(to, state_.mu, state_.nu);
  intensity_without(index, scratch_);
  for (std::size_t i = 0; i < scratch_.size(); ++i) scratch_[i] += cc.alpha * cc.kernel[i];
  state_.log_prior_centers += cc.log_f - state_.centers[index].log_f;
  state_.centers[index] = std::move(cc);
  state_.intensity.swap(scratch_);
  double mass = 0.0;
  for (const auto& o : state_.centers) mass += o.alpha * o.mass;
  state_.loglik = sum_log(state_.intensity) - mass;
}

bool ThomasSampler::step_birth_death_move(Rng& rng) {
  const double u = uniform01(rng);
  const std::size_t n = state_.centers.size();
  if (u < 1.0 / 3.0) {
    auto& t = tally_[static_cast<std::size_t>(MoveType::Birth)];
    ++t.proposed;
    const Point c = sample_uniform_point(problem_.dilated, rng);
    CenterCache cc = make_center(c, state_.mu, state_.nu);
    std::vector<double> lam = state_.intensity;
    for (std::size_t i = 0; i < lam.size(); ++i) lam[i] += cc.alpha * cc.kernel[i];
    double mass = cc.alpha * cc.mass;
    for (const auto& o : state_.centers) mass += o.alpha * o.mass;
    const double ll = sum_log(lam) - mass;
    double r = log_area_dil_ - std::log(static_cast<double>(n + 1));
    if (terms_.likelihood) r += safe_diff(ll, state_.loglik);
    if (terms_.center_prior) r += std::log(state_.kappa) + cc.log_f;
    if (!(std::log(uniform01(rng)) < r)) return false;
    state_.log_prior_centers += std::log(state_.kappa) + cc.log_f;
    state_.centers.push_back(std::move(cc));
    state_.intensity.swap(lam);
    state_.loglik = ll;
    ++t.accepted;
    return true;
  }
  if (u < 2.0 / 3.0) {
    auto& t = tally_[static_cast<std::size_t>(MoveType::Death)];
    ++t.proposed;
    if (n <= 1) return false;
    const std::size_t j = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    const double r = log_ratio_death(j);
    if (!(std::log(uniform01(rng)) < r)) return false;
    // scratch_ holds the intensity without centre j
    state_.log_prior_centers -= std::log(state_.kappa) + state_.centers[j].log_f;
    state_.centers.erase(state_.centers.begin() + static_cast<std::ptrdiff_t>(j));
    state_.intensity.swap(scratch_);
    double mass = 0.0;
    for (const auto& o : state_.centers) mass += o.alpha * o.mass;
    state_.loglik = sum_log(state_.intensity) - mass;
    ++t.accepted;
    return true;
  }
  auto& t = tally_[static_cast<std::size_t>(MoveType::Move)];
  ++t.proposed;
  const std::size_t j = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  std::normal_distribution<double> step(0.0, control_.center_move_sd);
  const Point from = state_.centers[j].location;
  const Point to{from.x + step(rng), from.y + step(rng)};
  if (!problem_.dilated.contains(to)) return false;
  const double r = log_ratio_move(j, to);
  if (!(std::log(uniform01(rng)) < r)) return false;
  apply_move(j, to);
  ++t.accepted;
  return true;
}

// --- mu / nu -----------------------------------------------------------------

ThomasSampler::MuEval ThomasSampler::evaluate_mu(std::span<const double> mu) const {
  MuEval ev;
  const auto& cs = state_.centers;
  ev.alpha.reserve(cs.size());
  ev.intensity.assign(problem_.points.size(), 0.0);
  double mass = 0.0;
  double slf = 0.0;
  for (const auto& cc : cs) {
    double ea = mu[0];
    for (std::size_t j = 0; j < cc.z_alpha.size(); ++j) ea += mu[j + 1] * cc.z_alpha[j];
    const double a = std::exp(ea);
    ev.alpha.push_back(a);
    mass += a * cc.mass;
    slf += cc.log_f;
    for (std::size_t i = 0; i < ev.intensity.size(); ++i) ev.intensity[i] += a * cc.kernel[i];
  }
  ev.loglik = sum_log(ev.intensity) - mass;
  ev.kappa = n_obs_ > 0.0 ? kappa_.kappa(n_obs_, mu) : 0.0;
  ev.log_prior_centers = center_prior_value(ev.kappa, cs.size(), slf);
  return ev;
}

double ThomasSampler::log_ratio_mu(std::span<const double> proposal) const {
  const MuEval ev = evaluate_mu(proposal);
  double r = 0.0;
  if (terms_.likelihood) r += safe_diff(ev.loglik, state_.loglik);
  if (terms_.center_prior) r += safe_diff(ev.log_prior_centers, state_.log_prior_centers);
  if (terms_.parameter_prior) {
    r += log_normal_prior(proposal, control_.prior_mu_mean, control_.prior_mu_sd) -
         log_normal_prior(state_.mu, control_.prior_mu_mean, control_.prior_mu_sd);
  }
  return r;
}

void ThomasSampler::apply_mu(std::span<const double> proposal) {
  MuEval ev = evaluate_mu(proposal);
  state_.mu.assign(proposal.begin(), proposal.end());
  for (std::size_t j = 0; j < state_.centers.size(); ++j) state_.centers[j].alpha = ev.alpha[j];
  state_.intensity = std::move(ev.intensity);
  state_.loglik = ev.loglik;
  state_.kappa = ev.kappa;
  state_.log_prior_centers = ev.log_prior_centers;
}

bool ThomasSampler::step_update_mu(Rng& rng) {
  std::vector<double> prop(state_.mu);
  for (std::size_t i = 0; i < prop.size(); ++i) {
    prop[i] += std::normal_distribution<double>(0.0, control_.proposal_mu_sd[i])(rng);
  }
  MuEval ev = evaluate_mu(prop);
  double r = 0.0;
  if (terms_.likelihood) r += safe_diff(ev.loglik, state_.loglik);
  if (terms_.center_prior) r += safe_diff(ev.log_prior_centers, state_.log_prior_centers);
  if (terms_.parameter_prior) {
    r += log_normal_prior(prop, control_.prior_mu_mean, control_.prior_mu_sd) -
         log_normal_prior(state_.mu, control_.prior_mu_mean, control_.prior_mu_sd);
  }
  if (!(std::log(uniform01(rng)) < r)) return false;
  state_.mu = std::move(prop);
  for (std::size_t j = 0; j < state_.centers.size(); ++j) state_.centers[j].alpha = ev.alpha[j];
  state_.intensity = std::move(ev.intensity);
  state_.loglik = ev.loglik;
  state_.kappa = ev.kappa;
  state_.log_prior_centers = ev.log_prior_centers;
  return true;
}

ThomasSampler::NuEval ThomasSampler::evaluate_nu(std::span<const double> nu) const {
  NuEval ev;
  ev.centers = state_.centers;
  ev.intensity.assign(problem_.points.size(), 0.0);
  double mass = 0.0;
  for (auto& cc : ev.centers) {
    double eo = nu[0];
    for (std::size_t j = 0; j < cc.z_omega.size(); ++j) eo += nu[j + 1] * cc.z_omega[j];
    cc.omega = std::exp(eo);
    cc.mass = gauss_window_mass(cc.location, cc.omega, problem_.window);
    fill_kernel(cc);
    mass += cc.alpha * cc.mass;
    for (std::size_t i = 0; i < ev.intensity.size(); ++i) ev.intensity[i] += cc.alpha * cc.kernel[i];
  }
  ev.loglik = sum_log(ev.intensity) - mass;
  return ev;
}

double ThomasSampler::log_ratio_nu(std::span<const double> proposal) const {
  const NuEval ev = evaluate_nu(proposal);
  double r = 0.0;
  if (terms_.likelihood) r += safe_diff(ev.loglik, state_.loglik);
  if (terms_.parameter_prior) {
    r += log_normal_prior(proposal, control_.prior_nu_mean, control_.prior_nu_sd) -
         log_normal_prior(state_.nu, control_.prior_nu_mean, control_.prior_nu_sd);
  }
  return r;
}

void ThomasSampler::apply_nu(std::span<const double> proposal) {
  NuEval ev = evaluate_nu(proposal);
  state_.nu.assign(proposal.begin(), proposal.end());
  state_.centers = std::move(ev.centers);
  state_.intensity = std::move(ev.intensity);
  state_.loglik = ev.loglik;
}

bool ThomasSampler::step_update_nu(Rng& rng) {
  std::vector<double> prop(state_.nu);
  for (std::size_t i = 0; i < prop.size(); ++i) {
    prop[i] += std::normal_distribution<double>(0.0, control_.proposal_nu_sd[i])(rng);
  }
  NuEval ev = evaluate_nu(prop);
  double r = 0.0;
  if (terms_.likelihood) r += safe_diff(ev.loglik, state_.loglik);
  if (terms_.parameter_prior) {
    r += log_normal_prior(prop, control_.prior_nu_mean, control_.prior_nu_sd) -
         log_normal_prior(state_.nu, control_.prior_nu_mean, control_.prior_nu_sd);
  }
  if (!(std::log(uniform01(rng)) < r)) return false;
  state_.nu = std::move(prop);
  state_.centers = std::move(ev.centers);
  state_.intensity = std::move(ev.intensity);
  state_.loglik = ev.loglik;
  return true;
}

// --- Chain driver --------------------------------------------------------------

std::vector<const ThomasIteration*> ThomasTrace::sampled() const {
  std::vector<const ThomasIteration*> out;
  for (const auto& it : iterations) {
    if (it.sampled) out.push_back(&it);
  }
  return out;
}

ThomasTrace run_chain(const ThomasProblem& problem, const ResolvedControl& control,
                      const ThomasIterationSink& sink) {
  ThomasSampler sampler(problem, control);
  Rng rng = make_rng(control.seed, "thomas-chain");
  sampler.initialize(rng);

  const bool want_pvalues = !problem.covs.z_beta.empty();
  std::optional<PoissonRegression> center_fit;
  if (want_pvalues) center_fit.emplace(problem.covs.z_beta, problem.grid_dilated);

  ThomasTrace trace;
  trace.iterations.reserve(control.n_step);
  for (std::size_t iter = 1; iter <= control.n_step; ++iter) {
    ThomasIteration rec;
    rec.iter = iter;
    try {
      rec.acc_bdm = sampler.step_birth_death_move(rng);
      rec.acc_mu = sampler.step_update_mu(rng);
      rec.acc_nu = sampler.step_update_nu(rng);
      if (iter % kDriftCheckEvery == 0) {
        const double drift = sampler.cache_drift();
        if (!(drift <= kDriftTolerance)) {
          std::ostringstream msg;
          msg << "cached log-likelihood drifted by " << drift << " from a full recomputation";
          throw NumericError(msg.str());
        }
        sampler.refresh();
      }
      rec.sampled = control.is_sampled(iter);
      if (rec.sampled && want_pvalues) {
        try {
          rec.pvalues = covariate_pvalues(center_fit->fit(sampler.state().center_locations()));
        } catch (const FitError&) {
          rec.pvalues.assign(problem.covs.z_beta.size(), std::numeric_limits<double>::quiet_NaN());
        }
      }
    } catch (const ChainError&) {
      throw;
    } catch (const Error& e) {
      std::ostringstream msg;
      msg << "chain aborted at iteration " << iter << ": " << e.what();
      throw ChainError(msg.str(), iter, serialize_state(sampler.state()));
    }
    const auto& st = sampler.state();
    rec.kappa = st.kappa;
    rec.mu = st.mu;
    rec.nu = st.nu;
    rec.n_centers = st.centers.size();
    rec.loglik = st.loglik;
    if (sink) sink(rec);
    trace.iterations.push_back(std::move(rec));
  }
  trace.birth = sampler.tally(MoveType::Birth);
  trace.death = sampler.tally(MoveType::Death);
  trace.move = sampler.tally(MoveType::Move);
  return trace;
}

}  // namespace nsc
