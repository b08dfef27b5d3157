#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "incentfed/game.hpp"
#include "incentfed/gradcheck.hpp"
#include "incentfed/rng.hpp"

using namespace incentfed;
using game::ClassProfile;
using game::ParticipationGame;
using game::PayoffKind;
using game::PayoffModel;
using game::StrategyProfile;

namespace {

Eigen::MatrixXd rows2(std::initializer_list<double> r0, std::initializer_list<double> r1) {
  Eigen::MatrixXd q(2, static_cast<Eigen::Index>(r0.size()));
  int c = 0;
  for (double v : r0) q(0, c++) = v;
  c = 0;
  for (double v : r1) q(1, c++) = v;
  return q;
}

// Two-class row with a prescribed squared norm: a^2 + (1-a)^2 = v.
Eigen::RowVector2d row_with_norm_sq(double v) {
  const double a = 0.5 * (1.0 + std::sqrt(2.0 * v - 1.0));
  return {a, 1.0 - a};
}

ParticipationGame discovery_game(Eigen::MatrixXd q, Eigen::VectorXd theta,
                                 double lo, double hi, double lambda) {
  const int m = static_cast<int>(q.rows());
  return ParticipationGame(PayoffModel{PayoffKind::Discovery, ClassProfile(std::move(q))},
                           std::move(theta), Eigen::VectorXd::Constant(m, lo),
                           Eigen::VectorXd::Constant(m, hi), lambda);
}

ParticipationGame coverage_game(Eigen::MatrixXd q, Eigen::VectorXd theta,
                                double lo, double hi, double lambda) {
  const int m = static_cast<int>(q.rows());
  return ParticipationGame(PayoffModel{PayoffKind::Coverage, ClassProfile(std::move(q))},
                           std::move(theta), Eigen::VectorXd::Constant(m, lo),
                           Eigen::VectorXd::Constant(m, hi), lambda);
}

}  // namespace

TEST_CASE("class profile validation", "[game]") {
  REQUIRE_THROWS_AS(ClassProfile(rows2({0.5, 0.6}, {0.5, 0.5})), std::invalid_argument);
  REQUIRE_THROWS_AS(ClassProfile(rows2({-0.1, 1.1}, {0.5, 0.5})), std::invalid_argument);
  REQUIRE_THROWS_AS(ClassProfile(Eigen::MatrixXd::Ones(2, 1)), std::invalid_argument);
  const ClassProfile ok(rows2({0.25, 0.75}, {1.0, 0.0}));
  REQUIRE(ok.row_norms_sq()(0) == Catch::Approx(0.625));
  REQUIRE(ok.row_norms_sq()(1) == Catch::Approx(1.0));
}

TEST_CASE("game validation rejects bad bounds and costs", "[game]") {
  Eigen::MatrixXd q = rows2({0.5, 0.5}, {0.5, 0.5});
  REQUIRE_THROWS_AS(discovery_game(q, Eigen::Vector2d(0.1, 0.1), 0.5, 10.0, 1e-3),
                    std::invalid_argument);  // n_min < 1
  REQUIRE_THROWS_AS(discovery_game(q, Eigen::Vector2d(0.1, 0.1), 10.0, 10.0, 1e-3),
                    std::invalid_argument);  // n_min == n_max
  REQUIRE_THROWS_AS(discovery_game(q, Eigen::Vector2d(-0.1, 0.1), 1.0, 10.0, 1e-3),
                    std::invalid_argument);  // negative theta
  REQUIRE_THROWS_AS(discovery_game(q, Eigen::Vector2d(0.1, 0.1), 1.0, 10.0, 0.0),
                    std::invalid_argument);  // lambda_reg = 0
}

TEST_CASE("discovery payoff is W n with W = Q Q^T", "[game]") {
  auto g = discovery_game(rows2({0.5, 0.5}, {0.5, 0.5}), Eigen::Vector2d(0.1, 0.1),
                          1.0, 100.0, 1e-3);
  const Eigen::VectorXd a = game::payoff(g, {Eigen::Vector2d(10.0, 10.0)});
  // W has all entries 0.5, so a_i = 0.5 * 10 + 0.5 * 10.
  REQUIRE(a(0) == Catch::Approx(10.0).margin(1e-12));
  REQUIRE(a(1) == Catch::Approx(10.0).margin(1e-12));

  Eigen::Vector3d bad;
  REQUIRE_THROWS_AS(game::payoff(g, {bad}), std::invalid_argument);
}

TEST_CASE("coverage payoff at zero contribution is one half", "[game]") {
  auto g = coverage_game(rows2({0.3, 0.7}, {0.8, 0.2}), Eigen::Vector2d(0.1, 0.1),
                         1.0, 100.0, 1e-3);
  const Eigen::VectorXd a = game::payoff(g, {Eigen::Vector2d::Zero()});
  REQUIRE(a(0) == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(a(1) == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("coverage payoff with a degenerate class distribution", "[game]") {
  Eigen::MatrixXd q(1, 2);
  q << 1.0, 0.0;
  auto g = coverage_game(q, Eigen::VectorXd::Constant(1, 0.1), 1.0, 100.0, 1e-3);
  for (double n : {1.0, 2.0, 7.0}) {
    const Eigen::VectorXd a = game::payoff(g, {Eigen::VectorXd::Constant(1, n)});
    REQUIRE(a(0) == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("discovery pseudo-gradient by hand", "[game]") {
  Eigen::MatrixXd q(1, 2);
  q << 1.0, 0.0;
  auto g = discovery_game(q, Eigen::VectorXd::Constant(1, 0.3), 1.0, 100.0, 1e-1);
  const Eigen::VectorXd f = game::pseudo_gradient(g, {Eigen::VectorXd::Constant(1, 2.0)});
  REQUIRE(f(0) == Catch::Approx(-0.5).margin(1e-12));  // 0.3 - 1 + 0.1 * 2
}

TEST_CASE("discovery pseudo-gradient vanishes when costs cancel payoffs", "[game]") {
  Eigen::MatrixXd q = rows2({0.5, 0.5}, {0.9, 0.1});
  const Eigen::VectorXd theta = ClassProfile(q).row_norms_sq();
  auto g = discovery_game(q, theta, 1.0, 100.0, 1e-12);
  const Eigen::VectorXd f = game::pseudo_gradient(g, {Eigen::Vector2d(10.0, 20.0)});
  REQUIRE(f.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("coverage pseudo-gradient is finite at singular entries", "[game]") {
  Eigen::MatrixXd q = rows2({1.0, 0.0}, {0.5, 0.5});
  auto g = coverage_game(q, Eigen::Vector2d(0.2, 0.2), 1.0, 100.0, 1e-3);
  for (double n0 : {0.0, 1.0, 5.0}) {
    const Eigen::VectorXd f = game::pseudo_gradient(g, {Eigen::Vector2d(n0, 3.0)});
    REQUIRE(f.allFinite());
  }
}

TEST_CASE("pseudo-gradient matches finite differences of the net utility", "[game]") {
  auto discovery = discovery_game(rows2({0.3, 0.7}, {0.8, 0.2}),
                                  Eigen::Vector2d(0.2, 0.5), 1.0, 200.0, 1e-3);
  REQUIRE(gradcheck::pseudo_gradient_fd_error(discovery, 50, 11) < 1e-7);

  Eigen::MatrixXd q(3, 3);
  q << 0.2, 0.3, 0.5, 0.6, 0.1, 0.3, 0.25, 0.5, 0.25;
  auto coverage = coverage_game(q, Eigen::Vector3d(0.05, 0.1, 0.02), 1.0, 40.0, 1e-3);
  REQUIRE(gradcheck::pseudo_gradient_fd_error(coverage, 50, 12) < 1e-6);
}

TEST_CASE("box projection clamps, is idempotent, and fixes boundary points", "[game]") {
  auto g = discovery_game(rows2({0.5, 0.5}, {0.5, 0.5}), Eigen::Vector2d(0.1, 0.1),
                          1.0, 100.0, 1e-3);
  const StrategyProfile clamped = game::project_box(g, Eigen::Vector2d(-5.0, 250.0));
  REQUIRE(clamped.n(0) == 1.0);
  REQUIRE(clamped.n(1) == 100.0);

  const Eigen::Vector2d inside(3.0, 42.0);
  REQUIRE(game::project_box(g, inside).n == inside);

  rng::Stream stream(7, "projection-prop");
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::Vector2d v(stream.uniform(-500.0, 500.0), stream.uniform(-500.0, 500.0));
    const Eigen::VectorXd once = game::project_box(g, v).n;
    REQUIRE(game::project_box(g, once).n == once);
    REQUIRE((once.array() >= g.n_min().array()).all());
    REQUIRE((once.array() <= g.n_max().array()).all());
  }

  Eigen::MatrixXd q1(1, 2);
  q1 << 0.5, 0.5;
  auto g1 = discovery_game(q1, Eigen::VectorXd::Constant(1, 0.1), 1.0, 10.0, 1e-3);
  REQUIRE(game::project_box(g1, Eigen::VectorXd::Constant(1, 10.0)).n(0) == 10.0);
}

TEST_CASE("the equilibrium is a fixed point of the projected step", "[game]") {
  auto discovery = discovery_game(rows2({0.3, 0.7}, {0.8, 0.2}),
                                  Eigen::Vector2d(0.2, 0.5), 1.0, 200.0, 1e-3);
  Eigen::MatrixXd q(2, 2);
  q << 0.4, 0.6, 0.7, 0.3;
  auto coverage = coverage_game(q, Eigen::Vector2d(0.05, 0.08), 1.0, 60.0, 1e-2);
  for (const auto* g : {&discovery, &coverage}) {
    const StrategyProfile n_star = game::solve_ne(*g, 1e-12);
    const auto est = game::monotonicity_probe(*g, 64, 0x5eed);
    const double gt = est.mu_hat / (est.l_hat * est.l_hat);
    REQUIRE((game::ne_step(*g, n_star, gt).n - n_star.n).norm() <= 1e-9);
  }
}

TEST_CASE("projected steps contract toward the equilibrium", "[game]") {
  auto g = discovery_game(rows2({0.3, 0.7}, {0.8, 0.2}), Eigen::Vector2d(0.2, 0.5),
                          1.0, 10000.0, 1e-3);
  const double mu = g.lambda_reg();
  const double gt = 0.3 / g.lambda_reg();  // below the mu/L^2 bound
  const double factor = 1.0 - 0.5 * mu * gt;
  const StrategyProfile n_star = game::solve_ne(g, 1e-12);
  rng::Stream stream(13, "contraction");
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::Vector2d n(stream.uniform(1.0, 10000.0), stream.uniform(1.0, 10000.0));
    const double before = (n - n_star.n).norm();
    const double after = (game::ne_step(g, {n}, gt).n - n_star.n).norm();
    REQUIRE(after <= factor * before + 1e-9);
  }
}

TEST_CASE("a full step of an affine game lands on the interior equilibrium", "[game]") {
  Eigen::MatrixXd q(1, 2);
  q << 1.0, 0.0;
  auto g = discovery_game(q, Eigen::VectorXd::Constant(1, 0.2), 1.0, 1e6, 1e-5);
  const StrategyProfile next =
      game::ne_step(g, {Eigen::VectorXd::Constant(1, 1.0)}, 1.0 / 1e-5);
  REQUIRE(next.n(0) == Catch::Approx(80000.0).margin(1e-9));
}

TEST_CASE("zero margin drags the equilibrium to the lower bound", "[game]") {
  Eigen::MatrixXd q(3, 3);
  q << 0.2, 0.3, 0.5, 0.6, 0.1, 0.3, 0.25, 0.5, 0.25;
  const Eigen::VectorXd theta = ClassProfile(q).row_norms_sq();
  auto g = ParticipationGame(PayoffModel{PayoffKind::Discovery, ClassProfile(q)}, theta,
                             Eigen::Vector3d(2.0, 3.0, 4.0), Eigen::Vector3d(20.0, 30.0, 40.0),
                             1e-5);
  const StrategyProfile n_star = game::solve_ne(g, 1e-12);
  REQUIRE(n_star.n(0) == Catch::Approx(2.0).margin(1e-8));
  REQUIRE(n_star.n(1) == Catch::Approx(3.0).margin(1e-8));
  REQUIRE(n_star.n(2) == Catch::Approx(4.0).margin(1e-8));
}

TEST_CASE("two-player interior equilibrium by hand", "[game]") {
  Eigen::MatrixXd q(2, 2);
  q.row(0) = row_with_norm_sq(0.6);
  q.row(1) = row_with_norm_sq(0.9);
  auto g = discovery_game(q, Eigen::Vector2d(0.1, 0.4), 1.0, 1e6, 1e-5);
  const StrategyProfile n_star = game::solve_ne(g, 1e-10);
  REQUIRE(n_star.n(0) == Catch::Approx(50000.0).margin(1e-6));
  REQUIRE(n_star.n(1) == Catch::Approx(50000.0).margin(1e-6));
}

TEST_CASE("symmetric coverage games have symmetric equilibria", "[game]") {
  auto g = coverage_game(rows2({0.5, 0.5}, {0.5, 0.5}), Eigen::Vector2d(0.1, 0.1),
                         1.0, 100.0, 1e-2);
  const StrategyProfile n_star = game::solve_ne(g, 1e-12);
  REQUIRE(std::abs(n_star.n(0) - n_star.n(1)) < 1e-8);
}

TEST_CASE("iterative and closed-form discovery equilibria agree", "[game]") {
  rng::Stream stream(17, "random-games");
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 2 + static_cast<int>(stream.uniform_below(9));  // up to 10
    const int t = 3;
    Eigen::MatrixXd q(m, t);
    for (int i = 0; i < m; ++i) {
      Eigen::VectorXd row(t);
      for (int c = 0; c < t; ++c) row(c) = stream.gamma(1.0);
      q.row(i) = row.transpose() / row.sum();
    }
    const Eigen::VectorXd norms = ClassProfile(q).row_norms_sq();
    Eigen::VectorXd theta(m);
    for (int i = 0; i < m; ++i) theta(i) = stream.uniform(0.0, norms(i));
    const double lambda = std::pow(10.0, stream.uniform(-6.0, -2.0));
    auto g = discovery_game(q, theta, 1.0, 1e6, lambda);
    const double tol = 1e-10;
    const StrategyProfile iterative = game::solve_ne(g, tol);
    const StrategyProfile closed = game::discovery_equilibrium(g);
    REQUIRE((iterative.n - closed.n).cwiseAbs().maxCoeff() <= 10.0 * tol);
  }
}

TEST_CASE("monotonicity probe", "[game]") {
  auto discovery = discovery_game(rows2({0.3, 0.7}, {0.8, 0.2}),
                                  Eigen::Vector2d(0.2, 0.5), 1.0, 200.0, 1e-5);
  const auto exact = game::monotonicity_probe(discovery, 16, 1);
  REQUIRE(exact.mu_hat == 1e-5);
  REQUIRE(exact.l_hat == 1e-5);
  REQUIRE(exact.strongly_monotone);

  Eigen::MatrixXd q(2, 2);
  q << 0.4, 0.6, 0.7, 0.3;
  auto coverage = coverage_game(q, Eigen::Vector2d(0.05, 0.08), 1.0, 60.0, 1e-2);
  const auto est = game::monotonicity_probe(coverage, 256, 2);
  REQUIRE(std::isfinite(est.mu_hat));
  REQUIRE(est.l_hat > 0.0);

  REQUIRE_THROWS_AS(game::monotonicity_probe(coverage, 1, 3), std::invalid_argument);
}

TEST_CASE("net utility reports both regularized and plain values", "[game]") {
  auto g = discovery_game(rows2({0.5, 0.5}, {0.5, 0.5}), Eigen::Vector2d(0.1, 0.2),
                          1.0, 100.0, 1e-2);
  const StrategyProfile n{Eigen::Vector2d(10.0, 10.0)};
  const Eigen::VectorXd plain = game::net_utility(g, n, false);
  const Eigen::VectorXd reg = game::net_utility(g, n, true);
  REQUIRE(plain(0) == Catch::Approx(0.1 * 10.0 - 10.0));
  REQUIRE(reg(0) == Catch::Approx(plain(0) + 0.5 * 1e-2 * 100.0));
}
