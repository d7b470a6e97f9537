#include "nsc/gtp.hpp"

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

double log_lognormal(double x, double a, double b) {
  if (!(x > 0.0)) return kNegInf;
  const double z = (std::log(x) - a) / b;
  return -std::log(x) - 0.5 * z * z;
}

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    std::ostringstream msg;
    msg << "gtp control: " << what << " must be finite and > 0 (got " << v << ")";
    throw ConfigError(msg.str());
  }
}

// Union-find with path halving.
std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

}  // namespace

double lognormal_mean(double a, double b) { return std::exp(a + 0.5 * b * b); }

void validate(const GtpControl& c) {
  require_positive(c.b_kappa, "b_kappa");
  require_positive(c.b_omega, "b_omega");
  require_positive(c.b_theta, "b_theta");
  require_positive(c.dlambda, "dlambda");
  require_positive(c.smove, "smove");
  if (c.skappa) require_positive(*c.skappa, "skappa");
  if (c.somega) require_positive(*c.somega, "somega");
  if (c.stheta) require_positive(*c.stheta, "stheta");
  if (c.dilation && !(*c.dilation >= 0.0)) throw ConfigError("gtp control: dilation must be >= 0");
  if (!(c.l_lambda < c.u_lambda)) throw ConfigError("gtp control: l_lambda must be smaller than u_lambda");
  if (!(c.u_lambda < 1.0)) throw ConfigError("gtp control: u_lambda must be < 1");
  if (!(c.l_lambda >= -1.0)) throw ConfigError("gtp control: l_lambda must be >= -1");
  if (c.step == 0) throw ConfigError("gtp control: step must be >= 1");
  if (c.conn_multiplier == 0) throw ConfigError("gtp control: connection multiplier must be >= 1");
  if (c.fixed_lambda && !(*c.fixed_lambda >= -1.0 && *c.fixed_lambda < 1.0)) {
    throw ConfigError("gtp control: fixed lambda must lie in [-1, 1)");
  }
}

double reflect_into(double x, double lo, double hi) {
  const double width = hi - lo;
  if (!(width > 0.0)) return lo;
  // Fold onto a period of 2 * width, then mirror the upper half.
  double t = std::fmod(x - lo, 2.0 * width);
  if (t < 0.0) t += 2.0 * width;
  if (t > width) t = 2.0 * width - t;
  return lo + t;
}

namespace {

// log(n! p(n)): a labelled allocation of n points to one centre.
double cluster_term(const GpdLogPmfTable& t, long n) { return t(n) + std::lgamma(static_cast<double>(n) + 1.0); }

}  // namespace

double gtp_loglik(std::span<const Point> points, std::span<const Point> centers,
                  std::span<const std::size_t> allocation, const GtpParams& params, double area_dilated) {
  if (allocation.size() != points.size()) throw ConfigError("gtp_loglik: allocation length mismatch");
  std::vector<long> sizes(centers.size(), 0);
  double sq = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (allocation[i] >= centers.size()) throw ConfigError("gtp_loglik: allocation index out of range");
    ++sizes[allocation[i]];
    sq += squared_distance(points[i], centers[allocation[i]]);
  }
  double s = 0.0;
  for (long n : sizes) s += gpd_log_pmf(n, params.gpd) + std::lgamma(static_cast<double>(n) + 1.0);
  const double w2 = params.omega * params.omega;
  s += -static_cast<double>(points.size()) * std::log(2.0 * std::numbers::pi * w2) - sq / (2.0 * w2);
  s += static_cast<double>(centers.size()) * std::log(params.kappa) - params.kappa * area_dilated;
  return s;
}

std::size_t GtpState::empty_count() const {
  return static_cast<std::size_t>(
      std::count_if(members.begin(), members.end(), [](const auto& m) { return m.empty(); }));
}

std::string serialize_state(const GtpState& state) {
  nlohmann::ordered_json j;
  j["kappa"] = state.params.kappa;
  j["omega"] = state.params.omega;
  j["lambda"] = state.params.gpd.lambda;
  j["theta"] = state.params.gpd.theta;
  auto centers = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < state.centers.size(); ++c) {
    centers.push_back({{"x", state.centers[c].x}, {"y", state.centers[c].y}, {"size", state.members[c].size()}});
  }
  j["centers"] = std::move(centers);
  j["allocation"] = state.allocation;
  return j.dump(2);
}

DilatedWindow gtp_dilated_window(const Window& w, const GtpControl& control) {
  const double radius = control.dilation.value_or(std::exp(control.a_omega));
  double cell = default_cell(w);
  if (radius > 0.0) cell = std::min(cell, radius / 2.0);
  return dilate(w, radius, cell);
}

// --- Sampler -----------------------------------------------------------------

GtpSampler::GtpSampler(std::vector<Point> points, const Window& window, const DilatedWindow& dilated,
                       GtpControl control, GtpTerms terms)
    : points_(std::move(points)),
      window_(window),
      dilated_(dilated),
      control_(std::move(control)),
      terms_(terms),
      area_dil_(dilated.area()) {
  validate(control_);
  rel_kappa_ = control_.skappa.value_or(lognormal_mean(control_.a_kappa, control_.b_kappa) / 100.0) /
               lognormal_mean(control_.a_kappa, control_.b_kappa);
  rel_omega_ = control_.somega.value_or(lognormal_mean(control_.a_omega, control_.b_omega) / 100.0) /
               lognormal_mean(control_.a_omega, control_.b_omega);
  rel_theta_ = control_.stheta.value_or(lognormal_mean(control_.a_theta, control_.b_theta) / 100.0) /
               lognormal_mean(control_.a_theta, control_.b_theta);
  for (const Point& p : points_) {
    if (!window_.contains(p)) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "data point (" << p.x << ", " << p.y << ") lies outside the observation window";
      throw ValidationError(msg.str());
    }
  }
}

void GtpSampler::initialize() {
  const std::size_t n = points_.size();
  if (n == 0) {
    const auto& box = window_.bounding_box();
    Point c{0.5 * (box.x_left + box.x_right), 0.5 * (box.y_bottom + box.y_top)};
    if (!dilated_.contains(c)) c = dilated_.cell_center(dilated_.active_cells().front());
    GtpParams p;
    p.gpd.lambda = control_.fixed_lambda.value_or(std::clamp(0.0, control_.l_lambda, control_.u_lambda));
    p.gpd.theta = lognormal_mean(control_.a_theta, control_.b_theta);
    p.omega = std::exp(control_.a_omega);
    p.kappa = 1.0 / area_dil_;
    set_state({c}, {}, p);
    return;
  }

  const double h = std::exp(control_.a_omega);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return points_[a].x < points_[b].x || (points_[a].x == points_[b].x && a < b);
  });
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  for (std::size_t a = 0; a < n; ++a) {
    const Point& pa = points_[order[a]];
    for (std::size_t b = a + 1; b < n && points_[order[b]].x - pa.x <= h; ++b) {
      if (squared_distance(pa, points_[order[b]]) <= h * h) {
        const std::size_t ra = find_root(parent, order[a]);
        const std::size_t rb = find_root(parent, order[b]);
        if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
      }
    }
  }

  std::vector<std::size_t> label(n, static_cast<std::size_t>(-1));
  std::vector<std::size_t> allocation(n);
  std::vector<double> sx, sy;
  std::vector<std::size_t> count, first;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = find_root(parent, i);
    if (label[r] == static_cast<std::size_t>(-1)) {
      label[r] = sx.size();
      sx.push_back(0.0);
      sy.push_back(0.0);
      count.push_back(0);
      first.push_back(i);
    }
    const std::size_t k = label[r];
    allocation[i] = k;
    sx[k] += points_[i].x;
    sy[k] += points_[i].y;
    ++count[k];
  }
  std::vector<Point> centers;
  long largest = 0;
  for (std::size_t k = 0; k < sx.size(); ++k) {
    const double m = static_cast<double>(count[k]);
    Point c{sx[k] / m, sy[k] / m};
    if (!dilated_.contains(c)) c = points_[first[k]];
    centers.push_back(c);
    largest = std::max(largest, static_cast<long>(count[k]));
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) sq += squared_distance(points_[i], centers[allocation[i]]);

  GtpParams p;
  p.gpd.lambda = control_.fixed_lambda.value_or(std::clamp(0.0, control_.l_lambda, control_.u_lambda));
  p.gpd.theta = static_cast<double>(n) / static_cast<double>(centers.size()) * (1.0 - p.gpd.lambda);
  if (p.gpd.lambda < 0.0) p.gpd.theta = std::max(p.gpd.theta, -p.gpd.lambda * static_cast<double>(largest) + 1.0);
  p.omega = sq > 0.0 ? std::sqrt(sq / (2.0 * static_cast<double>(n))) : h;
  p.kappa = static_cast<double>(centers.size()) / area_dil_;
  set_state(std::move(centers), std::move(allocation), p);
}

void GtpSampler::set_state(std::vector<Point> centers, std::vector<std::size_t> allocation,
                           const GtpParams& params) {
  if (centers.empty()) throw ConfigError("gtp: at least one centre is required");
  if (allocation.size() != points_.size()) throw ConfigError("gtp: allocation length mismatch");
  for (const Point& c : centers) {
    if (!dilated_.contains(c)) throw ConfigError("gtp: centre outside the dilated window");
  }
  validate(params);
  state_.centers = std::move(centers);
  state_.allocation = std::move(allocation);
  state_.params = params;
  state_.members.assign(state_.centers.size(), {});
  slot_.assign(points_.size(), 0);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const std::size_t a = state_.allocation[i];
    if (a >= state_.centers.size()) throw ConfigError("gtp: allocation index out of range");
    slot_[i] = state_.members[a].size();
    state_.members[a].push_back(i);
  }
  refresh();
}

void GtpSampler::refresh() {
  table_ = GpdLogPmfTable(state_.params.gpd);
  cached_pmf_sum_ = pmf_sum(state_.params.gpd);
  sq_sum_ = 0.0;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    sq_sum_ += squared_distance(points_[i], state_.centers[state_.allocation[i]]);
  }
}

double GtpSampler::pmf_sum(const GpdParams& g) const {
  const GpdLogPmfTable t(g);
  double s = 0.0;
  for (std::size_t j = 0; j < state_.centers.size(); ++j) s += cluster_term(t, state_.size(j));
  return s;
}

double GtpSampler::kernel_term(double omega) const {
  const double w2 = omega * omega;
  return -static_cast<double>(points_.size()) * std::log(2.0 * std::numbers::pi * w2) - sq_sum_ / (2.0 * w2);
}

double GtpSampler::center_term(double kappa) const {
  return static_cast<double>(state_.centers.size()) * std::log(kappa) - kappa * area_dil_;
}

double GtpSampler::log_prior(const GtpParams& p) const {
  double s = log_lognormal(p.kappa, control_.a_kappa, control_.b_kappa) +
             log_lognormal(p.omega, control_.a_omega, control_.b_omega) +
             log_lognormal(p.gpd.theta, control_.a_theta, control_.b_theta);
  if (!control_.fixed_lambda && (p.gpd.lambda < control_.l_lambda || p.gpd.lambda > control_.u_lambda)) {
    return kNegInf;
  }
  return s;
}

double GtpSampler::members_sq(std::size_t j, Point c) const {
  double s = 0.0;
  for (std::size_t i : state_.members[j]) s += squared_distance(points_[i], c);
  return s;
}

double GtpSampler::loglik() const {
  return cached_pmf_sum_ + kernel_term(state_.params.omega) + center_term(state_.params.kappa);
}

double GtpSampler::recompute_loglik() const {
  return gtp_loglik(points_, state_.centers, state_.allocation, state_.params, area_dil_);
}

// --- Parameters --------------------------------------------------------------

double GtpSampler::log_ratio_params(const GtpParams& q) const {
  const GtpParams& p = state_.params;
  double r = 0.0;
  if (terms_.likelihood) {
    double d = 0.0;
    if (q.gpd.lambda != p.gpd.lambda || q.gpd.theta != p.gpd.theta) d += pmf_sum(q.gpd) - cached_pmf_sum_;
    if (q.omega != p.omega) d += kernel_term(q.omega) - kernel_term(p.omega);
    if (q.kappa != p.kappa) d += center_term(q.kappa) - center_term(p.kappa);
    r += d;
  }
  if (terms_.parameter_prior) r += log_prior(q) - log_prior(p);
  return r;
}

void GtpSampler::apply_params(const GtpParams& q) {
  const bool gpd_changed = q.gpd.lambda != state_.params.gpd.lambda || q.gpd.theta != state_.params.gpd.theta;
  state_.params = q;
  if (gpd_changed) {
    table_ = GpdLogPmfTable(q.gpd);
    cached_pmf_sum_ = pmf_sum(q.gpd);
  }
}

bool GtpSampler::step_kappa(Rng& rng) {
  GtpParams q = state_.params;
  q.kappa = state_.params.kappa * std::exp(std::normal_distribution<double>(0.0, rel_kappa_)(rng));
  const double r = log_ratio_params(q) + std::log(q.kappa) - std::log(state_.params.kappa);
  if (!(std::log(uniform01(rng)) < r)) return false;
  apply_params(q);
  return true;
}

bool GtpSampler::step_omega(Rng& rng) {
  GtpParams q = state_.params;
  q.omega = state_.params.omega * std::exp(std::normal_distribution<double>(0.0, rel_omega_)(rng));
  const double r = log_ratio_params(q) + std::log(q.omega) - std::log(state_.params.omega);
  if (!(std::log(uniform01(rng)) < r)) return false;
  apply_params(q);
  return true;
}

bool GtpSampler::step_theta(Rng& rng) {
  GtpParams q = state_.params;
  q.gpd.theta = state_.params.gpd.theta * std::exp(std::normal_distribution<double>(0.0, rel_theta_)(rng));
  const double r = log_ratio_params(q) + std::log(q.gpd.theta) - std::log(state_.params.gpd.theta);
  if (!(std::log(uniform01(rng)) < r)) return false;
  apply_params(q);
  return true;
}

bool GtpSampler::step_lambda(Rng& rng) {
  if (control_.fixed_lambda) return false;
  GtpParams q = state_.params;
  const double step = std::normal_distribution<double>(0.0, control_.dlambda)(rng);
  q.gpd.lambda = reflect_into(state_.params.gpd.lambda + step, control_.l_lambda, control_.u_lambda);
  // GPD needs lambda < 1; the upper bound is < 1 already.
  const double r = log_ratio_params(q);
  if (!(std::log(uniform01(rng)) < r)) return false;
  apply_params(q);
  return true;
}

// --- Centres -------------------------------------------------------------------

double GtpSampler::log_ratio_birth() const {
  const double e = static_cast<double>(state_.empty_count());
  double r = std::log(area_dil_) - std::log(e + 1.0);
  if (terms_.likelihood) r += std::log(state_.params.kappa) + table_(0);
  return r;
}

double GtpSampler::log_ratio_death(std::size_t j) const {
  if (state_.centers.size() <= 1 || !state_.members[j].empty()) return kNegInf;
  const double e = static_cast<double>(state_.empty_count());
  double r = std::log(e) - std::log(area_dil_);
  if (terms_.likelihood) r -= std::log(state_.params.kappa) + table_(0);
  return r;
}

double GtpSampler::log_ratio_move(std::size_t j, Point to) const {
  if (!dilated_.contains(to)) return kNegInf;
  if (!terms_.likelihood || state_.members[j].empty()) return 0.0;
  const double w2 = state_.params.omega * state_.params.omega;
  return -(members_sq(j, to) - members_sq(j, state_.centers[j])) / (2.0 * w2);
}

void GtpSampler::apply_birth(Point c) {
  state_.centers.push_back(c);
  state_.members.emplace_back();
  cached_pmf_sum_ += table_(0);
}

void GtpSampler::apply_death(std::size_t j) {
  if (!state_.members[j].empty()) throw NumericError("gtp: death of an occupied centre");
  cached_pmf_sum_ -= table_(0);
  const std::size_t last = state_.centers.size() - 1;
  if (j != last) {
    state_.centers[j] = state_.centers[last];
    state_.members[j] = std::move(state_.members[last]);
    for (std::size_t i : state_.members[j]) state_.allocation[i] = j;
  }
  state_.centers.pop_back();
  state_.members.pop_back();
}

void GtpSampler::apply_move(std::size_t j, Point to) {
  sq_sum_ += members_sq(j, to) - members_sq(j, state_.centers[j]);
  state_.centers[j] = to;
}

bool GtpSampler::step_centers(Rng& rng) {
  const double u = uniform01(rng);
  const std::size_t nc = state_.centers.size();
  if (u < 1.0 / 3.0) {
    const Point c = sample_uniform_point(dilated_, rng);
    if (!(std::log(uniform01(rng)) < log_ratio_birth())) return false;
    apply_birth(c);
    return true;
  }
  if (u < 2.0 / 3.0) {
    const std::size_t e = state_.empty_count();
    if (e == 0 || nc <= 1) return false;
    // k-th empty centre, k uniform
    std::size_t k = std::uniform_int_distribution<std::size_t>(0, e - 1)(rng);
    std::size_t j = 0;
    for (; j < nc; ++j) {
      if (state_.members[j].empty() && k-- == 0) break;
    }
    if (!(std::log(uniform01(rng)) < log_ratio_death(j))) return false;
    apply_death(j);
    return true;
  }
  const std::size_t j = std::uniform_int_distribution<std::size_t>(0, nc - 1)(rng);
  std::normal_distribution<double> step(0.0, control_.smove);
  const Point from = state_.centers[j];
  const Point to{from.x + step(rng), from.y + step(rng)};
  if (!dilated_.contains(to)) return false;
  if (!(std::log(uniform01(rng)) < log_ratio_move(j, to))) return false;
  apply_move(j, to);
  return true;
}

// --- Connections ---------------------------------------------------------------

double GtpSampler::log_ratio_connection(std::size_t i, std::size_t to) const {
  const std::size_t from = state_.allocation[i];
  if (from == to || !terms_.likelihood) return 0.0;
  const long na = state_.size(from);
  const long nk = state_.size(to);
  const double w2 = state_.params.omega * state_.params.omega;
  const double dpmf = cluster_term(table_, na - 1) - cluster_term(table_, na) + cluster_term(table_, nk + 1) -
                      cluster_term(table_, nk);
  const double dker = -(squared_distance(points_[i], state_.centers[to]) -
                        squared_distance(points_[i], state_.centers[from])) /
                      (2.0 * w2);
  return dpmf + dker;
}

void GtpSampler::apply_connection(std::size_t i, std::size_t to) {
  const std::size_t from = state_.allocation[i];
  if (from == to) return;
  const long na = state_.size(from);
  const long nk = state_.size(to);
  cached_pmf_sum_ += cluster_term(table_, na - 1) - cluster_term(table_, na) + cluster_term(table_, nk + 1) -
                     cluster_term(table_, nk);
  sq_sum_ += squared_distance(points_[i], state_.centers[to]) - squared_distance(points_[i], state_.centers[from]);

  auto& src = state_.members[from];
  const std::size_t s = slot_[i];
  src[s] = src.back();
  slot_[src[s]] = s;
  src.pop_back();
  slot_[i] = state_.members[to].size();
  state_.members[to].push_back(i);
  state_.allocation[i] = to;
}

bool GtpSampler::step_connection(Rng& rng) {
  if (points_.empty()) return true;
  const std::size_t i = std::uniform_int_distribution<std::size_t>(0, points_.size() - 1)(rng);
  const std::size_t k = std::uniform_int_distribution<std::size_t>(0, state_.centers.size() - 1)(rng);
  if (k == state_.allocation[i]) return true;
  if (!(std::log(uniform01(rng)) < log_ratio_connection(i, k))) return false;
  apply_connection(i, k);
  return true;
}

// --- Driver --------------------------------------------------------------------

GtpTrace estgtp(std::span<const Point> points, const Window& window, const GtpControl& control,
                const GtpIterationSink& sink) {
  validate(control);
  if (points.empty()) throw ConfigError("estgtp: point pattern is empty");
  const DilatedWindow dilated = gtp_dilated_window(window, control);
  GtpSampler sampler(std::vector<Point>(points.begin(), points.end()), window, dilated, control);
  sampler.initialize();
  Rng rng = make_rng(control.seed, "gtp-chain");

  GtpTrace trace;
  trace.iterations.reserve(control.iter);
  for (std::size_t iter = 1; iter <= control.iter; ++iter) {
    GtpIteration rec;
    rec.iter = iter;
    try {
      rec.acc_kappa = sampler.step_kappa(rng);
      rec.acc_omega = sampler.step_omega(rng);
      rec.acc_lambda = sampler.step_lambda(rng);
      rec.acc_theta = sampler.step_theta(rng);
      rec.acc_centers = sampler.step_centers(rng);
      std::size_t accepted = 0;
      for (std::size_t c = 0; c < control.conn_multiplier; ++c) accepted += sampler.step_connection(rng) ? 1 : 0;
      rec.acc_conn = static_cast<double>(accepted) / static_cast<double>(control.conn_multiplier);
      if (iter % kDriftCheckEvery == 0) {
        const double a = sampler.loglik();
        const double b = sampler.recompute_loglik();
        if (!(a == b || std::fabs(a - b) <= kDriftTolerance)) {
          std::ostringstream msg;
          msg << "cached log-likelihood drifted by " << std::fabs(a - b) << " from a full recomputation";
          throw NumericError(msg.str());
        }
        sampler.refresh();
      }
    } catch (const Error& e) {
      std::ostringstream msg;
      msg << "gtp chain aborted at iteration " << iter << ": " << e.what();
      throw GtpChainError(msg.str(), iter, serialize_state(sampler.state()));
    }
    const auto& st = sampler.state();
    rec.kappa = st.params.kappa;
    rec.omega = st.params.omega;
    rec.lambda = st.params.gpd.lambda;
    rec.theta = st.params.gpd.theta;
    rec.n_centers = st.centers.size();
    rec.loglik = sampler.loglik();
    if (sink) sink(rec);
    trace.iterations.push_back(rec);
  }
  return trace;
}

std::string GtpSummary::verdict() const {
  if (!poisson_rejected) return "Poisson not rejected";
  return lambda.q025 > 0.0 ? "over-dispersed" : "under-dispersed";
}

GtpSummary summarize_gtp(const GtpTrace& trace, std::size_t discard, std::size_t step) {
  if (step == 0) throw ConfigError("summarize_gtp: step must be >= 1");
  if (discard >= trace.iterations.size()) {
    std::ostringstream msg;
    msg << "summarize_gtp: discard (" << discard << ") leaves no samples from a trace of length "
        << trace.iterations.size();
    throw ConfigError(msg.str());
  }
  std::vector<double> k, w, l, t;
  for (std::size_t i = discard; i < trace.iterations.size(); i += step) {
    const auto& it = trace.iterations[i];
    k.push_back(it.kappa);
    w.push_back(it.omega);
    l.push_back(it.lambda);
    t.push_back(it.theta);
  }
  GtpSummary s;
  s.kappa = summarize_values(k);
  s.omega = summarize_values(w);
  s.lambda = summarize_values(l);
  s.theta = summarize_values(t);
  s.samples = k.size();
  s.poisson_rejected = !(s.lambda.q025 <= 0.0 && 0.0 <= s.lambda.q975);
  return s;
}

}  // namespace nsc
