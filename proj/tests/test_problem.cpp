// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "casgd/problem.hpp"

#include <cmath>
#include <random>

#include "casgd/rng.hpp"
#include "test_support.hpp"

using namespace casgd;
using doctest::Approx;

namespace {

FiniteSumProblem two_by_two_problem() {
  RowMatrix a(1, 2);
  a << 1, 0;
  Vector y(1);
  y << 0;
  BallDomain dom{Vector::Zero(2), 6.0};
  return make_least_squares(a, y, {2.5}, dom);
}

Vector random_in_ball(const BallDomain& dom, Engine& e) {
  std::normal_distribution<double> normal;
  Vector v(dom.center.size());
  for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = normal(e);
  return dom.center + v.normalized() * dom.radius() * std::pow(uniform01(e), 1.0 / double(v.size()));
}

}  // namespace

TEST_CASE("generator at full scale") {
  const auto p = generate_least_squares(3000, 50, 10.0, 1.0, 1000.0, 7);
  CHECK(p.size() == 3000);
  CHECK(p.dimension() == 50);
  CHECK(p.least_squares()->row_norms().maxCoeff() == Approx(10.0).epsilon(1e-12));
  for (double c : p.costs()) {
    CHECK(c >= 1.0);
    CHECK(c <= 1000.0);
  }
}

TEST_CASE("generator corner cases and errors") {
  const auto p = generate_least_squares(1, 1, 1.0, 1.0, 1.0, 0);
  CHECK(p.size() == 1);
  CHECK(p.costs()[0] == 1.0);
  CHECK_ERROR_CODE(generate_least_squares(10, 2, 1.0, 5.0, 1.0, 0), ErrorCode::kInvalidRange);
  CHECK_ERROR_CODE(generate_least_squares(0, 2, 1.0, 1.0, 2.0, 0), ErrorCode::kInvalidSize);
  CHECK_ERROR_CODE(generate_least_squares(3, 0, 1.0, 1.0, 2.0, 0), ErrorCode::kInvalidSize);
}

TEST_CASE("generator is deterministic per seed") {
  const auto a = generate_least_squares(100, 5, 3.0, 1.0, 10.0, 42);
  const auto b = generate_least_squares(100, 5, 3.0, 1.0, 10.0, 42);
  CHECK(problem_to_json(a) == problem_to_json(b));
  const auto c = generate_least_squares(100, 5, 3.0, 1.0, 10.0, 43);
  CHECK(problem_to_json(a) != problem_to_json(c));
}

TEST_CASE("component gradient") {
  const auto p = two_by_two_problem();
  Vector x(2);
  x << 2, 0;
  const auto r = component_gradient(p, 0, x);
  CHECK(r.gradient[0] == 2.0);
  CHECK(r.gradient[1] == 0.0);
  CHECK(r.incurred_cost == 2.5);
  CHECK_ERROR_CODE(component_gradient(p, 1, x), ErrorCode::kIndex);
  Vector far(2);
  far << 10, 0;
  CHECK_ERROR_CODE(component_gradient(p, 0, far), ErrorCode::kDomain);
}

TEST_CASE("gradient vanishes at the planted point") {
  const auto p = generate_least_squares(50, 4, 2.0, 1.0, 5.0, 3);
  const Vector& x0 = *p.least_squares()->planted();
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(component_gradient(p, i, x0).gradient.norm() == 0.0);
  for (double v : dynamic_gradient_norms(p, x0)) CHECK(v == 0.0);
}

TEST_CASE("gradient matches central differences") {
  const auto p = generate_least_squares(20, 4, 2.0, 1.0, 5.0, 5);
  Engine e = make_engine(5, Stream::kMonteCarlo);
  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    const Vector x = random_in_ball(p.domain(), e) * 0.9;
    const std::size_t i = uniform_below(e, p.size());
    const Vector g = component_gradient(p, i, x).gradient;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      Vector up = x, down = x;
      up[j] += h;
      down[j] -= h;
      const double fd = (p.oracle().value(i, up) - p.oracle().value(i, down)) / (2 * h);
      CHECK(std::abs(fd - g[j]) <= 1e-5 * std::max(1.0, std::abs(g[j])));
    }
  }
}

TEST_CASE("full gradient and objective") {
  RowMatrix a(2, 1);
  a << 1, 2;
  Vector y(2);
  y << 1, 0;
  const auto p = make_least_squares(a, y, {1, 1}, BallDomain{Vector::Zero(1), 4.0});
  Vector x(1);
  x << 1;
  // Component gradients are 0 and 4.
  CHECK(full_gradient(p, x)[0] == Approx(2.0));
  CHECK(objective(p, x) == Approx(0.5 * (0.0 + 4.0) / 2.0));
}

TEST_CASE("true minimizer") {
  const auto planted = generate_least_squares(60, 6, 4.0, 1.0, 10.0, 13);
  const auto m = true_minimizer(planted);
  CHECK((m.point - *planted.least_squares()->planted()).norm() <= 1e-8);
  CHECK(std::abs(m.value) <= 1e-12);
  CHECK(full_gradient(planted, m.point).norm() <= 1e-8);

  RowMatrix a(1, 1);
  a << 1;
  Vector y(1);
  y << 0;
  const auto one = make_least_squares(a, y, {1}, BallDomain{Vector::Zero(1), 2.0});
  const auto m1 = true_minimizer(one);
  CHECK(m1.point[0] == Approx(0.0));
  CHECK(m1.value == Approx(0.0));

  // Active ball constraint; reference from a KKT bisection cross-checked
  // against a conic solver.
  RowMatrix a4(4, 2);
  a4 << 1, 2, 0.5, -1, 2, 0.3, -1, 1.5;
  Vector y4(4);
  y4 << 3, -2, 4, 1;
  const auto ball = make_least_squares(a4, y4, {1, 1, 1, 1}, BallDomain{Vector::Zero(2), 1.0});
  const auto mb = true_minimizer(ball);
  CHECK(mb.point[0] == Approx(0.32804796319881063).epsilon(1e-9));
  CHECK(mb.point[1] == Approx(0.37733875210626305).epsilon(1e-9));
  CHECK(mb.value == Approx(2.2357910950139401).epsilon(1e-12));

  Engine e = make_engine(8, Stream::kMonteCarlo);
  for (int k = 0; k < 1000; ++k) CHECK(mb.value <= objective(ball, random_in_ball(ball.domain(), e)) + 1e-12);
}

TEST_CASE("dynamic gradient norms") {
  RowMatrix a(1, 2);
  a << 3, 4;
  Vector y(1);
  y << 1;
  const auto p = make_least_squares(a, y, {1}, BallDomain{Vector::Zero(2), 2.0});
  Vector x(2);
  x << 0.5, -0.25;
  // |a^T x - y| * ||a|| = |1.5 - 1 - 1| * 5.
  CHECK(dynamic_gradient_norms(p, x)[0] == Approx(2.5));
}

TEST_CASE("Lipschitz bounds hold on random probes") {
  LeastSquaresSpec spec;
  spec.n = 40;
  spec.d = 5;
  spec.norm_bound = 3.0;
  spec.target_noise = 0.2;
  spec.seed = 21;
  const auto p = generate_least_squares(spec);
  const auto g = p.lipschitz_bounds();
  Engine e = make_engine(21, Stream::kMonteCarlo);
  for (int k = 0; k < 1000; ++k) {
    const auto norms = dynamic_gradient_norms(p, random_in_ball(p.domain(), e));
    for (std::size_t i = 0; i < norms.size(); ++i) CHECK(norms[i] <= g[i]);
  }
}

TEST_CASE("instance JSON round trip and errors") {
  const auto p = generate_least_squares(30, 3, 2.0, 1.0, 9.0, 4);
  const std::string text = problem_to_json(p, R"({"note":"x"})");
  const auto back = problem_from_json(text);
  CHECK(problem_to_json(back) == problem_to_json(p));
  CHECK(back.strong_convexity() == p.strong_convexity());
  CHECK_ERROR_CODE(problem_from_json("{not json"), ErrorCode::kParse);
  CHECK_ERROR_CODE(problem_from_json(R"({"n": 2})"), ErrorCode::kParse);
}

TEST_CASE("cost correlation knob reorders costs only") {
  LeastSquaresSpec spec;
  spec.n = 500;
  spec.d = 3;
  spec.cost_correlation = 0.9;
  const auto p = generate_least_squares(spec);
  spec.cost_correlation = 0.0;
  const auto q = generate_least_squares(spec);
  auto cp = p.costs(), cq = q.costs();
  std::sort(cp.begin(), cp.end());
  std::sort(cq.begin(), cq.end());
  CHECK(cp == cq);
}
