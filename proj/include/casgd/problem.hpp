// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace casgd {

using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One summand f_i of the finite sum together with its Lipschitz bound G_i
/// and its per-query cost c_i.
struct CostedComponent {
  std::size_t index = 0;
  double lipschitz_bound = 0.0;
  double cost = 1.0;
};

/// Gradient of one component and the cost charged for obtaining it.
struct EvaluationResult {
  Vector gradient;
  double incurred_cost = 0.0;
};

/// Instance payload behind the gradient oracle.
class ComponentOracle {
 public:
  virtual ~ComponentOracle() = default;

  virtual std::size_t size() const = 0;
  virtual Eigen::Index dimension() const = 0;
  virtual double value(std::size_t i, const Vector& x) const = 0;
  virtual void gradient(std::size_t i, const Vector& x, Vector& out) const = 0;
  virtual double gradient_norm(std::size_t i, const Vector& x) const;
};

/// f_i(x) = 0.5 (a_i^T x - y_i)^2.
class LeastSquaresOracle final : public ComponentOracle {
 public:
  LeastSquaresOracle(RowMatrix a, Vector y, std::optional<Vector> planted = std::nullopt);

  std::size_t size() const override { return static_cast<std::size_t>(a_.rows()); }
  Eigen::Index dimension() const override { return a_.cols(); }
  double value(std::size_t i, const Vector& x) const override;
  void gradient(std::size_t i, const Vector& x, Vector& out) const override;
  double gradient_norm(std::size_t i, const Vector& x) const override;

  const RowMatrix& data() const { return a_; }
  const Vector& targets() const { return y_; }
  const Vector& row_norms() const { return row_norms_; }
  const std::optional<Vector>& planted() const { return planted_; }

 private:
  RowMatrix a_;
  Vector y_;
  Vector row_norms_;
  std::optional<Vector> planted_;
};

/// Euclidean ball of diameter D around a center.
struct BallDomain {
  Vector center;
  double diameter = 2.0;

  double radius() const { return 0.5 * diameter; }
  /// Membership with tolerance 1e-9 relative to the diameter.
  bool contains(const Vector& x) const;
};

class FiniteSumProblem {
 public:
  FiniteSumProblem(std::vector<CostedComponent> components, BallDomain domain,
                   std::optional<double> strong_convexity,
                   std::shared_ptr<const ComponentOracle> oracle, std::uint64_t seed = 0);

  std::size_t size() const { return components_.size(); }
  Eigen::Index dimension() const { return oracle_->dimension(); }
  const std::vector<CostedComponent>& components() const { return components_; }
  const BallDomain& domain() const { return domain_; }
  const std::optional<double>& strong_convexity() const { return strong_convexity_; }
  std::uint64_t seed() const { return seed_; }

  const ComponentOracle& oracle() const { return *oracle_; }
  /// Null unless the payload is least squares.
  const LeastSquaresOracle* least_squares() const;

  std::vector<double> costs() const;
  std::vector<double> lipschitz_bounds() const;

  /// Throws kDomain when x lies outside the ball beyond tolerance.
  void check_in_domain(const Vector& x) const;

 private:
  std::vector<CostedComponent> components_;
  BallDomain domain_;
  std::optional<double> strong_convexity_;
  std::shared_ptr<const ComponentOracle> oracle_;
  std::uint64_t seed_ = 0;
};

/// How row norms are spread before the global rescale to max norm L.
enum class NormProfile {
  /// Rows are i.i.d. standard normal vectors; norms concentrate near sqrt(d).
  kGaussian,
  /// Gaussian directions with radii drawn uniformly in (0, 1].
  kUniformRadius,
};

struct LeastSquaresSpec {
  std::size_t n = 3000;
  std::size_t d = 50;
  double norm_bound = 10.0;
  double cost_low = 1.0;
  double cost_high = 1000.0;
  std::uint64_t seed = 7;
  double diameter = 2.0;
  NormProfile profile = NormProfile::kUniformRadius;
  /// Standard deviation of additive target noise; 0 keeps the planted optimum exact.
  double target_noise = 0.0;
  /// Rank correlation in [-1, 1] between costs and row norms (Gaussian copula).
  double cost_correlation = 0.0;
};

FiniteSumProblem generate_least_squares(const LeastSquaresSpec& spec);

FiniteSumProblem generate_least_squares(std::size_t n, std::size_t d, double norm_bound,
                                        double cost_low, double cost_high, std::uint64_t seed);

/// Builds a least-squares problem from explicit data. G_i defaults to
/// ||a_i||^2 * 2D when lipschitz_bounds is empty.
FiniteSumProblem make_least_squares(RowMatrix a, Vector y, std::vector<double> costs,
                                    BallDomain domain, std::vector<double> lipschitz_bounds = {},
                                    std::optional<Vector> planted = std::nullopt,
                                    std::uint64_t seed = 0);

EvaluationResult component_gradient(const FiniteSumProblem& problem, std::size_t i,
                                    const Vector& x);

/// (1/n) sum_i grad f_i(x), exact summation, no cost charged.
Vector full_gradient(const FiniteSumProblem& problem, const Vector& x);

/// (1/n) sum_i f_i(x).
double objective(const FiniteSumProblem& problem, const Vector& x);

struct Minimizer {
  Vector point;
  double value = 0.0;
};

/// Domain-constrained minimizer of a least-squares instance.
Minimizer true_minimizer(const FiniteSumProblem& problem);

/// Minimizer over the ball of (1/n) sum_{i in rows} f_i for a least-squares
/// instance. Among multiple minimizers the one closest to the center wins.
Minimizer restricted_minimizer(const FiniteSumProblem& problem, std::span<const std::size_t> rows);

/// ||grad f_i(x)|| for all i. Cost accounting for these sweeps is the
/// caller's business (see RunOptions::charge_dynamic_sweeps).
std::vector<double> dynamic_gradient_norms(const FiniteSumProblem& problem, const Vector& x);

/// Instance document: {n, d, D, mu?, seed, center, costs, lipschitz_bounds, a, y, x0?}.
std::string problem_to_json(const FiniteSumProblem& problem, const std::string& meta_json = "");
FiniteSumProblem problem_from_json(const std::string& text);

}  // namespace casgd
