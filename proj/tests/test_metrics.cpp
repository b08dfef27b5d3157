#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "incentfed/losses.hpp"
#include "incentfed/metrics.hpp"
#include "incentfed/rng.hpp"

using namespace incentfed;
using losses::LocalProblem;

namespace {

LocalProblem scalar_quadratic(double target) {
  Eigen::MatrixXd unit(1, 1);
  unit << 1.0;
  return LocalProblem(losses::Quadratic{unit, Eigen::VectorXd::Constant(1, target)});
}

}  // namespace

TEST_CASE("consensus error of identical iterates is exactly zero", "[metrics]") {
  const Eigen::Vector3d x(0.1, -2.5, 7.0);
  std::vector<Eigen::VectorXd> iterates{x, x, x};
  const WeightVector p(Eigen::Vector3d(0.2, 0.5, 0.3));
  REQUIRE(metrics::consensus_error(iterates, p) == 0.0);
}

TEST_CASE("consensus error of a scalar pair by hand", "[metrics]") {
  std::vector<Eigen::VectorXd> iterates{Eigen::VectorXd::Constant(1, 0.0),
                                        Eigen::VectorXd::Constant(1, 2.0)};
  const WeightVector p(Eigen::Vector2d(0.5, 0.5));
  // xbar = 1, e = 0.5 * 1 + 0.5 * 1.
  REQUIRE(metrics::consensus_error(iterates, p) == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("consensus error scales quadratically and ignores translations", "[metrics]") {
  rng::Stream stream(3, "consensus");
  std::vector<Eigen::VectorXd> iterates;
  for (int i = 0; i < 4; ++i) {
    Eigen::Vector2d v(stream.normal(), stream.normal());
    iterates.push_back(v);
  }
  const WeightVector p(Eigen::Vector4d(0.1, 0.2, 0.3, 0.4));
  const double base = metrics::consensus_error(iterates, p);

  std::vector<Eigen::VectorXd> scaled, shifted;
  const Eigen::Vector2d shift(5.0, -3.0);
  for (const auto& v : iterates) {
    scaled.push_back(3.0 * v);
    shifted.push_back(v + shift);
  }
  REQUIRE(metrics::consensus_error(scaled, p) == Catch::Approx(9.0 * base).epsilon(1e-12));
  REQUIRE(metrics::consensus_error(shifted, p) == Catch::Approx(base).margin(1e-12));
}

TEST_CASE("global gradient vanishes at the weighted optimum", "[metrics]") {
  std::vector<LocalProblem> problems{scalar_quadratic(1.0), scalar_quadratic(-1.0)};
  const WeightVector p(Eigen::Vector2d(0.75, 0.25));
  const auto opt = losses::global_optimum(problems, p);
  REQUIRE(metrics::global_grad_norm_sq(problems, p, opt.x) <= 1e-16);

  // The hand-solved instance: weights (0.75, 0.25) put the optimum at 0.5.
  REQUIRE(metrics::global_grad_norm_sq(problems, p, Eigen::VectorXd::Constant(1, 0.5)) <=
          1e-16);
}

TEST_CASE("single-client global gradient is the local one", "[metrics]") {
  std::vector<LocalProblem> problems{scalar_quadratic(1.0)};
  const WeightVector p(Eigen::VectorXd::Ones(1));
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 3.0);
  REQUIRE(metrics::global_grad_norm_sq(problems, p, x) ==
          Catch::Approx(losses::grad(problems[0], x).squaredNorm()));
}

TEST_CASE("bregman gap equals the optimality gap at the minimizer", "[metrics]") {
  std::vector<LocalProblem> problems{scalar_quadratic(0.0)};
  const WeightVector p(Eigen::VectorXd::Ones(1));
  const Eigen::VectorXd x_star = Eigen::VectorXd::Zero(1);
  REQUIRE(metrics::bregman_gap(problems, p, x_star, x_star) == Catch::Approx(0.0).margin(1e-15));
  // f = x^2 / 2: D_f(2, 0) = 2.
  REQUIRE(metrics::bregman_gap(problems, p, Eigen::VectorXd::Constant(1, 2.0), x_star) ==
          Catch::Approx(2.0).margin(1e-12));
}

TEST_CASE("bregman gap is nonnegative for convex instances", "[metrics]") {
  rng::Stream stream(9, "bregman");
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd a(3, 2);
    Eigen::VectorXd b(3);
    for (int r = 0; r < 3; ++r) {
      a(r, 0) = stream.normal();
      a(r, 1) = stream.normal();
      b(r) = stream.normal();
    }
    std::vector<LocalProblem> problems{LocalProblem(losses::Quadratic{a, b})};
    const WeightVector p(Eigen::VectorXd::Ones(1));
    const Eigen::Vector2d x(stream.normal(), stream.normal());
    const Eigen::Vector2d y(stream.normal(), stream.normal());
    REQUIRE(metrics::bregman_gap(problems, p, x, y) >= -1e-12);
  }
}

TEST_CASE("bregman gap matches loss difference when the reference is optimal", "[metrics]") {
  std::vector<LocalProblem> problems{scalar_quadratic(1.0), scalar_quadratic(-1.0)};
  const WeightVector p(Eigen::Vector2d(0.6, 0.4));
  const auto opt = losses::global_optimum(problems, p);
  rng::Stream stream(10, "gap-check");
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, stream.normal() * 3.0);
    const double direct = metrics::global_loss(problems, p, x) - opt.value;
    REQUIRE(metrics::bregman_gap(problems, p, x, opt.x) ==
            Catch::Approx(direct).margin(1e-10));
  }
}

TEST_CASE("bregman gap refuses nonconvex families", "[metrics]") {
  Eigen::MatrixXd features(2, 1);
  features << 0.0, 1.0;
  std::vector<LocalProblem> problems{
      LocalProblem(losses::Mlp2{features, {0, 1}, 2, 2})};
  const WeightVector p(Eigen::VectorXd::Ones(1));
  REQUIRE_THROWS_AS(metrics::bregman_gap(problems, p, Eigen::VectorXd::Zero(problems[0].param_dim()),
                                         Eigen::VectorXd::Zero(problems[0].param_dim())),
                    std::invalid_argument);
}

TEST_CASE("rate fit recovers exact geometric decay", "[metrics]") {
  const double rho = 0.8, scale = 3.5;
  std::vector<double> distances;
  for (int r = 0; r < 30; ++r) distances.push_back(scale * std::pow(rho, r));
  const auto fit = metrics::fit_rate(distances);
  REQUIRE(fit.slope == Catch::Approx(std::log(rho)).margin(1e-10));
  REQUIRE(fit.intercept == Catch::Approx(std::log(scale)).margin(1e-9));
  REQUIRE(fit.r_squared == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("rate fit of a constant sequence has zero slope", "[metrics]") {
  const std::vector<double> distances(10, 0.25);
  const auto fit = metrics::fit_rate(distances);
  REQUIRE(fit.slope == Catch::Approx(0.0).margin(1e-14));
  REQUIRE(fit.r_squared == 1.0);
}

TEST_CASE("rate fit needs five points above the floor", "[metrics]") {
  REQUIRE_THROWS_AS(metrics::fit_rate(std::vector<double>{1.0, 0.5, 0.25, 0.125}),
                    std::invalid_argument);
  // Points at the floor are discarded, not fitted.
  const std::vector<double> floored{1.0, 0.5, 1e-14, 1e-15, 0.25, 1e-16};
  REQUIRE_THROWS_AS(metrics::fit_rate(floored), std::invalid_argument);
}

TEST_CASE("identical clients pin the dissimilarity fit at B^2 = 1", "[metrics]") {
  std::vector<LocalProblem> problems{scalar_quadratic(1.0), scalar_quadratic(1.0)};
  const WeightVector p(Eigen::Vector2d(0.5, 0.5));
  std::vector<Eigen::VectorXd> samples;
  rng::Stream stream(11, "bgd-samples");
  for (int s = 0; s < 12; ++s)
    samples.push_back(Eigen::VectorXd::Constant(1, stream.normal() * 2.0));
  const auto fit = metrics::bgd_fit(problems, p, samples);
  REQUIRE(fit.b_sq == 1.0);
  REQUIRE(fit.g_sq == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("heterogeneous clients force a positive dissimilarity floor", "[metrics]") {
  std::vector<LocalProblem> problems{scalar_quadratic(1.0), scalar_quadratic(-1.0)};
  const WeightVector p(Eigen::Vector2d(0.5, 0.5));
  std::vector<Eigen::VectorXd> samples{Eigen::VectorXd::Zero(1)};
  rng::Stream stream(12, "bgd-hetero");
  for (int s = 0; s < 11; ++s)
    samples.push_back(Eigen::VectorXd::Constant(1, stream.normal()));
  const auto fit = metrics::bgd_fit(problems, p, samples);
  // At x = 0 the local gradients are -/+1 while the global gradient vanishes.
  REQUIRE(fit.g_sq >= 1.0 - 1e-12);
  REQUIRE_THROWS_AS(metrics::bgd_fit(problems, p,
                                     std::vector<Eigen::VectorXd>(5, Eigen::VectorXd::Zero(1))),
                    std::invalid_argument);
}

TEST_CASE("rounds_to_target finds the first crossing", "[metrics]") {
  const std::vector<double> losses_per_round{5.0, 3.0, 2.0, 1.5, 1.2};
  REQUIRE(metrics::rounds_to_target(losses_per_round, 2.0) == 2);
  REQUIRE(!metrics::rounds_to_target(losses_per_round, 1.0).has_value());
}
