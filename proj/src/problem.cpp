// SPDX-License-Identifier: Apache-2.0
#include "casgd/problem.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <boost/math/distributions/normal.hpp>
#include <nlohmann/json.hpp>

#include "casgd/error.hpp"
#include "casgd/rng.hpp"

namespace casgd {

using nlohmann::json;

double ComponentOracle::gradient_norm(std::size_t i, const Vector& x) const {
  Vector g(dimension());
  gradient(i, x, g);
  return g.norm();
}

LeastSquaresOracle::LeastSquaresOracle(RowMatrix a, Vector y, std::optional<Vector> planted)
    : a_(std::move(a)), y_(std::move(y)), planted_(std::move(planted)) {
  if (a_.rows() != y_.size()) {
    fail(ErrorCode::kInvalidSize, "least squares: data rows and targets differ in length");
  }
  if (planted_ && planted_->size() != a_.cols()) {
    fail(ErrorCode::kInvalidSize, "least squares: planted point has wrong dimension");
  }
  row_norms_ = a_.rowwise().norm();
}

double LeastSquaresOracle::value(std::size_t i, const Vector& x) const {
  const double r = a_.row(static_cast<Eigen::Index>(i)).dot(x) - y_[static_cast<Eigen::Index>(i)];
  return 0.5 * r * r;
}

void LeastSquaresOracle::gradient(std::size_t i, const Vector& x, Vector& out) const {
  const auto row = a_.row(static_cast<Eigen::Index>(i));
  const double r = row.dot(x) - y_[static_cast<Eigen::Index>(i)];
  out = r * row.transpose();
}

double LeastSquaresOracle::gradient_norm(std::size_t i, const Vector& x) const {
  const auto k = static_cast<Eigen::Index>(i);
  return std::abs(a_.row(k).dot(x) - y_[k]) * row_norms_[k];
}

bool BallDomain::contains(const Vector& x) const {
  return (x - center).norm() <= radius() + 1e-9 * diameter;
}

FiniteSumProblem::FiniteSumProblem(std::vector<CostedComponent> components, BallDomain domain,
                                   std::optional<double> strong_convexity,
                                   std::shared_ptr<const ComponentOracle> oracle,
                                   std::uint64_t seed)
    : components_(std::move(components)),
      domain_(std::move(domain)),
      strong_convexity_(strong_convexity),
      oracle_(std::move(oracle)),
      seed_(seed) {
  if (!oracle_) fail(ErrorCode::kInvalidArgument, "problem: missing oracle");
  if (components_.empty()) fail(ErrorCode::kInvalidSize, "problem: no components");
  if (components_.size() != oracle_->size()) {
    fail(ErrorCode::kInvalidSize, "problem: component count does not match oracle");
  }
  if (!(domain_.diameter > 0.0) || !std::isfinite(domain_.diameter)) {
    fail(ErrorCode::kInvalidRange, "problem: domain diameter must be positive");
  }
  if (domain_.center.size() != oracle_->dimension()) {
    fail(ErrorCode::kInvalidSize, "problem: domain center has wrong dimension");
  }
  if (strong_convexity_ && !(*strong_convexity_ > 0.0)) {
    fail(ErrorCode::kInvalidRange, "problem: strong convexity modulus must be positive");
  }
  std::vector<bool> seen(components_.size(), false);
  for (const auto& c : components_) {
    if (c.index >= components_.size() || seen[c.index]) {
      fail(ErrorCode::kIndex, "problem: component indices must be distinct and cover [0, n)");
    }
    seen[c.index] = true;
    if (!(c.lipschitz_bound >= 0.0)) {
      fail(ErrorCode::kInvalidRange, "problem: negative Lipschitz bound");
    }
    if (!(c.cost > 0.0)) fail(ErrorCode::kInvalidCost, "problem: costs must be positive");
  }
  std::sort(components_.begin(), components_.end(),
            [](const CostedComponent& a, const CostedComponent& b) { return a.index < b.index; });
}

const LeastSquaresOracle* FiniteSumProblem::least_squares() const {
  return dynamic_cast<const LeastSquaresOracle*>(oracle_.get());
}

std::vector<double> FiniteSumProblem::costs() const {
  std::vector<double> out(components_.size());
  for (const auto& c : components_) out[c.index] = c.cost;
  return out;
}

std::vector<double> FiniteSumProblem::lipschitz_bounds() const {
  std::vector<double> out(components_.size());
  for (const auto& c : components_) out[c.index] = c.lipschitz_bound;
  return out;
}

void FiniteSumProblem::check_in_domain(const Vector& x) const {
  if (x.size() != dimension()) fail(ErrorCode::kInvalidSize, "point has wrong dimension");
  if (!x.allFinite()) fail(ErrorCode::kNumeric, "point has non-finite coordinates");
  if (!domain_.contains(x)) fail(ErrorCode::kDomain, "point lies outside the domain");
}

namespace {

std::optional<double> smallest_hessian_eigenvalue(const RowMatrix& a) {
  const Eigen::MatrixXd h = (a.transpose() * a) / static_cast<double>(a.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (lo > 1e-10 * std::max(hi, 1.0)) return lo;
  return std::nullopt;
}

// Reassigns an already drawn cost multiset so that cost ranks follow a
// Gaussian copula with correlation rho against the ranks of `key`.
void correlate_costs(std::vector<double>& costs, const Vector& key, double rho, Engine& engine) {
  const std::size_t n = costs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key[Eigen::Index(a)] < key[Eigen::Index(b)]; });
  const boost::math::normal_distribution<double> unit;
  std::normal_distribution<double> normal;
  std::vector<double> latent(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double score = boost::math::quantile(unit, (static_cast<double>(r) + 0.5) / static_cast<double>(n));
    latent[order[r]] = rho * score + std::sqrt(1.0 - rho * rho) * normal(engine);
  }
  std::vector<double> sorted = costs;
  std::sort(sorted.begin(), sorted.end());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return latent[a] < latent[b]; });
  for (std::size_t r = 0; r < n; ++r) costs[order[r]] = sorted[r];
}

}  // namespace

FiniteSumProblem generate_least_squares(const LeastSquaresSpec& spec) {
  if (spec.n == 0 || spec.d == 0) fail(ErrorCode::kInvalidSize, "generate: n and d must be positive");
  if (!(spec.norm_bound > 0.0)) fail(ErrorCode::kInvalidRange, "generate: norm bound must be positive");
  if (!(spec.cost_low > 0.0)) fail(ErrorCode::kInvalidCost, "generate: costs must be positive");
  if (spec.cost_high < spec.cost_low) fail(ErrorCode::kInvalidRange, "generate: cost_high < cost_low");
  if (!(spec.diameter > 0.0)) fail(ErrorCode::kInvalidRange, "generate: diameter must be positive");
  if (spec.cost_correlation < -1.0 || spec.cost_correlation > 1.0) {
    fail(ErrorCode::kInvalidRange, "generate: cost correlation must lie in [-1, 1]");
  }
  if (spec.target_noise < 0.0) fail(ErrorCode::kInvalidRange, "generate: negative target noise");

  const auto n = static_cast<Eigen::Index>(spec.n);
  const auto d = static_cast<Eigen::Index>(spec.d);

  Engine instance = make_engine(spec.seed, Stream::kInstance);
  std::normal_distribution<double> normal;
  RowMatrix a(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) = normal(instance);
  }
  if (spec.profile == NormProfile::kUniformRadius) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double norm = a.row(i).norm();
      // 1 - u lies in (0, 1], so no row collapses to zero.
      const double radius = 1.0 - uniform01(instance);
      if (norm > 0.0) a.row(i) *= radius / norm;
    }
  }
  const double max_norm = a.rowwise().norm().maxCoeff();
  if (max_norm > 0.0) a *= spec.norm_bound / max_norm;

  Engine planted_engine = make_engine(spec.seed, Stream::kPlanted);
  Vector x0(d);
  for (Eigen::Index j = 0; j < d; ++j) x0[j] = normal(planted_engine);
  const double x0_norm = x0.norm();
  const double x0_radius =
      0.25 * spec.diameter * std::pow(uniform01(planted_engine), 1.0 / static_cast<double>(d));
  if (x0_norm > 0.0) x0 *= x0_radius / x0_norm;

  // Row-wise dot products match the oracle's evaluation order, so residuals at x0 are exactly 0.
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = a.row(i).dot(x0);
  const Vector row_norms = a.rowwise().norm();
  if (spec.target_noise > 0.0) {
    // Clipping at D*||a_i|| keeps ||grad f_i|| <= 2D ||a_i||^2 on the domain.
    Engine noise = make_engine(spec.seed, Stream::kNoise);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double limit = spec.diameter * row_norms[i];
      y[i] += std::clamp(spec.target_noise * normal(noise), -limit, limit);
    }
  }

  Engine cost_engine = make_engine(spec.seed, Stream::kCost);
  std::vector<double> costs(spec.n);
  for (auto& c : costs) c = spec.cost_low + (spec.cost_high - spec.cost_low) * uniform01(cost_engine);
  if (spec.cost_correlation != 0.0) correlate_costs(costs, row_norms, spec.cost_correlation, cost_engine);

  BallDomain domain{Vector::Zero(d), spec.diameter};
  std::vector<CostedComponent> components(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const double norm = row_norms[Eigen::Index(i)];
    components[i] = {i, norm * norm * 2.0 * spec.diameter, costs[i]};
  }
  auto mu = smallest_hessian_eigenvalue(a);
  std::optional<Vector> planted;
  if (spec.target_noise == 0.0) planted = x0;
  auto oracle = std::make_shared<LeastSquaresOracle>(std::move(a), std::move(y), std::move(planted));
  return FiniteSumProblem(std::move(components), std::move(domain), mu, std::move(oracle), spec.seed);
}

FiniteSumProblem generate_least_squares(std::size_t n, std::size_t d, double norm_bound,
                                        double cost_low, double cost_high, std::uint64_t seed) {
  LeastSquaresSpec spec;
  spec.n = n;
  spec.d = d;
  spec.norm_bound = norm_bound;
  spec.cost_low = cost_low;
  spec.cost_high = cost_high;
  spec.seed = seed;
  return generate_least_squares(spec);
}

FiniteSumProblem make_least_squares(RowMatrix a, Vector y, std::vector<double> costs,
                                    BallDomain domain, std::vector<double> lipschitz_bounds,
                                    std::optional<Vector> planted, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(a.rows());
  if (n == 0 || a.cols() == 0) fail(ErrorCode::kInvalidSize, "least squares: empty data");
  if (costs.size() != n) fail(ErrorCode::kInvalidSize, "least squares: cost vector length mismatch");
  if (!lipschitz_bounds.empty() && lipschitz_bounds.size() != n) {
    fail(ErrorCode::kInvalidSize, "least squares: Lipschitz bound vector length mismatch");
  }
  if (domain.center.size() == 0) domain.center = Vector::Zero(a.cols());
  std::vector<CostedComponent> components(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double norm = a.row(Eigen::Index(i)).norm();
    const double g = lipschitz_bounds.empty() ? norm * norm * 2.0 * domain.diameter : lipschitz_bounds[i];
    components[i] = {i, g, costs[i]};
  }
  auto mu = smallest_hessian_eigenvalue(a);
  auto oracle = std::make_shared<LeastSquaresOracle>(std::move(a), std::move(y), std::move(planted));
  return FiniteSumProblem(std::move(components), std::move(domain), mu, std::move(oracle), seed);
}

EvaluationResult component_gradient(const FiniteSumProblem& problem, std::size_t i, const Vector& x) {
  if (i >= problem.size()) fail(ErrorCode::kIndex, "component index out of range");
  problem.check_in_domain(x);
  EvaluationResult result;
  problem.oracle().gradient(i, x, result.gradient);
  result.incurred_cost = problem.components()[i].cost;
  return result;
}

Vector full_gradient(const FiniteSumProblem& problem, const Vector& x) {
  problem.check_in_domain(x);
  const auto& oracle = problem.oracle();
  Vector sum = Vector::Zero(problem.dimension());
  Vector g(problem.dimension());
  for (std::size_t i = 0; i < problem.size(); ++i) {
    oracle.gradient(i, x, g);
    sum += g;
  }
  return sum / static_cast<double>(problem.size());
}

double objective(const FiniteSumProblem& problem, const Vector& x) {
  const auto& oracle = problem.oracle();
  double sum = 0.0;
  for (std::size_t i = 0; i < problem.size(); ++i) sum += oracle.value(i, x);
  return sum / static_cast<double>(problem.size());
}

namespace {

// Minimizes 0.5 z^T H z - g^T z over ||z|| <= r for symmetric PSD H.
Vector ball_constrained_quadratic(const Eigen::MatrixXd& h, const Vector& g, double r) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
  const Vector& lambda = eig.eigenvalues();
  const Eigen::MatrixXd& q = eig.eigenvectors();
  const Vector coeff = q.transpose() * g;
  const double scale = std::max(lambda.cwiseAbs().maxCoeff(), 1.0);
  const double tiny = 1e-12 * scale;

  auto solve = [&](double shift) {
    Vector w(coeff.size());
    for (Eigen::Index k = 0; k < coeff.size(); ++k) {
      const double denom = lambda[k] + shift;
      w[k] = denom > tiny ? coeff[k] / denom : 0.0;
    }
    return w;
  };

  Vector w = solve(0.0);
  if (w.norm() <= r) return q * w;

  double lo = 0.0;
  double hi = std::max(coeff.norm() / r, tiny);
  while (solve(hi).norm() > r) hi *= 2.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (solve(mid).norm() > r) lo = mid; else hi = mid;
    if (hi - lo <= 1e-15 * hi) break;
  }
  w = solve(hi);
  return q * w;
}

}  // namespace

Minimizer restricted_minimizer(const FiniteSumProblem& problem, std::span<const std::size_t> rows) {
  const auto* ls = problem.least_squares();
  if (ls == nullptr) fail(ErrorCode::kUnsupported, "minimizer: instance is not least squares");
  const auto d = problem.dimension();
  const auto& a = ls->data();
  const auto& y = ls->targets();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
  Vector b = Vector::Zero(d);
  for (std::size_t i : rows) {
    if (i >= problem.size()) fail(ErrorCode::kIndex, "minimizer: row index out of range");
    const auto row = a.row(Eigen::Index(i));
    h.noalias() += row.transpose() * row;
    b += y[Eigen::Index(i)] * row.transpose();
  }
  const double n = static_cast<double>(problem.size());
  h /= n;
  b /= n;
  const auto& domain = problem.domain();
  const Vector z = ball_constrained_quadratic(h, b - h * domain.center, domain.radius());
  Minimizer out;
  out.point = domain.center + z;
  double value = 0.0;
  for (std::size_t i : rows) value += ls->value(i, out.point);
  out.value = value / n;
  return out;
}

Minimizer true_minimizer(const FiniteSumProblem& problem) {
  const auto* ls = problem.least_squares();
  if (ls == nullptr) fail(ErrorCode::kUnsupported, "minimizer: instance is not least squares");
  if (ls->planted() && problem.domain().contains(*ls->planted())) {
    // With zero residuals the planted point attains the lower bound 0.
    const double value = objective(problem, *ls->planted());
    if (value == 0.0) return {*ls->planted(), value};
  }
  std::vector<std::size_t> all(problem.size());
  std::iota(all.begin(), all.end(), 0);
  return restricted_minimizer(problem, all);
}

std::vector<double> dynamic_gradient_norms(const FiniteSumProblem& problem, const Vector& x) {
  problem.check_in_domain(x);
  std::vector<double> out(problem.size());
  const auto& oracle = problem.oracle();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = oracle.gradient_norm(i, x);
  return out;
}

namespace {

json vector_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vector json_vector(const json& j, Eigen::Index expected, const char* field) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != expected) {
    fail(ErrorCode::kParse, std::string("instance: field '") + field + "' has wrong length");
  }
  Vector v(expected);
  for (Eigen::Index i = 0; i < expected; ++i) v[i] = j[std::size_t(i)].get<double>();
  return v;
}

}  // namespace

std::string problem_to_json(const FiniteSumProblem& problem, const std::string& meta_json) {
  const auto* ls = problem.least_squares();
  if (ls == nullptr) fail(ErrorCode::kUnsupported, "serialize: instance is not least squares");
  json doc = json::object();
  if (!meta_json.empty()) doc["meta"] = json::parse(meta_json);
  doc["n"] = problem.size();
  doc["d"] = problem.dimension();
  doc["D"] = problem.domain().diameter;
  if (problem.strong_convexity()) doc["mu"] = *problem.strong_convexity();
  doc["seed"] = problem.seed();
  doc["center"] = vector_json(problem.domain().center);
  doc["costs"] = problem.costs();
  doc["lipschitz_bounds"] = problem.lipschitz_bounds();
  json rows = json::array();
  const auto& a = ls->data();
  for (Eigen::Index i = 0; i < a.rows(); ++i) rows.push_back(vector_json(a.row(i).transpose()));
  doc["a"] = std::move(rows);
  doc["y"] = vector_json(ls->targets());
  if (ls->planted()) doc["x0"] = vector_json(*ls->planted());
  return doc.dump() + "\n";
}

FiniteSumProblem problem_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("instance: ") + e.what());
  }
  try {
    const auto n = doc.at("n").get<std::size_t>();
    const auto d = doc.at("d").get<Eigen::Index>();
    if (n == 0 || d <= 0) fail(ErrorCode::kInvalidSize, "instance: n and d must be positive");
    BallDomain domain;
    domain.diameter = doc.at("D").get<double>();
    domain.center = doc.contains("center") ? json_vector(doc["center"], d, "center") : Vector::Zero(d);
    const auto costs = doc.at("costs").get<std::vector<double>>();
    const auto bounds = doc.at("lipschitz_bounds").get<std::vector<double>>();
    if (costs.size() != n || bounds.size() != n) {
      fail(ErrorCode::kParse, "instance: costs/lipschitz_bounds length differs from n");
    }
    const auto& rows = doc.at("a");
    if (!rows.is_array() || rows.size() != n) fail(ErrorCode::kParse, "instance: 'a' must have n rows");
    RowMatrix a(static_cast<Eigen::Index>(n), d);
    for (std::size_t i = 0; i < n; ++i) a.row(Eigen::Index(i)) = json_vector(rows[i], d, "a").transpose();
    Vector y = json_vector(doc.at("y"), static_cast<Eigen::Index>(n), "y");
    std::optional<Vector> planted;
    if (doc.contains("x0")) planted = json_vector(doc["x0"], d, "x0");
    std::optional<double> mu;
    if (doc.contains("mu")) mu = doc["mu"].get<double>();
    const auto seed = doc.value("seed", std::uint64_t{0});

    std::vector<CostedComponent> components(n);
    for (std::size_t i = 0; i < n; ++i) components[i] = {i, bounds[i], costs[i]};
    auto oracle = std::make_shared<LeastSquaresOracle>(std::move(a), std::move(y), std::move(planted));
    return FiniteSumProblem(std::move(components), std::move(domain), mu, std::move(oracle), seed);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("instance: ") + e.what());
  }
}

}  // namespace casgd
