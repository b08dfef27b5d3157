#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "incentfed/game.hpp"
#include "incentfed/losses.hpp"
#include "incentfed/rng.hpp"

namespace incentfed::gradcheck {

// Hybrid absolute/relative error, flat near zero.
inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max({1.0, std::abs(got), std::abs(want)});
}

// Central difference along coordinate i with a scale-aware step.
template <class F>
double central_diff(F&& f, Eigen::VectorXd x, int i, double base_step = 1e-5) {
  const double h = base_step * std::max(1.0, std::abs(x(i)));
  const double orig = x(i);
  x(i) = orig + h;
  const double f_plus = f(x);
  x(i) = orig - h;
  const double f_minus = f(x);
  return (f_plus - f_minus) / (2.0 * h);
}

// Worst relative error of the pseudo-gradient against central differences of
// the regularized net utility, over random points in the strategy box.
// `corruption` offsets component 0 of the analytic gradient; it exists as a
// negative-control hook and must be 0 in real checks.
inline double pseudo_gradient_fd_error(const game::ParticipationGame& g, int points,
                                       std::uint64_t seed, double corruption = 0.0) {
  rng::Stream stream(seed, "gradcheck-game");
  const int m = g.players();
  double worst = 0.0;
  for (int s = 0; s < points; ++s) {
    Eigen::VectorXd n(m);
    for (int i = 0; i < m; ++i) n(i) = stream.uniform(g.n_min()(i), g.n_max()(i));
    Eigen::VectorXd analytic = game::pseudo_gradient(g, {n});
    analytic(0) += corruption;
    for (int i = 0; i < m; ++i) {
      const double fd = central_diff(
          [&](const Eigen::VectorXd& v) {
            return game::net_utility(g, {v}, /*regularized=*/true)(i);
          },
          n, i);
      worst = std::max(worst, rel_err(analytic(i), fd));
    }
  }
  return worst;
}

// Worst relative error of grad() against central differences of loss(), over
// random parameter vectors.
inline double loss_grad_fd_error(const losses::LocalProblem& p, int points,
                                 std::uint64_t seed, double corruption = 0.0) {
  rng::Stream stream(seed, "gradcheck-loss");
  const int dim = p.param_dim();
  double worst = 0.0;
  for (int s = 0; s < points; ++s) {
    Eigen::VectorXd x(dim);
    for (int i = 0; i < dim; ++i) x(i) = 0.5 * stream.normal();
    Eigen::VectorXd analytic = losses::grad(p, x);
    analytic(0) += corruption;
    for (int i = 0; i < dim; ++i) {
      const double fd =
          central_diff([&](const Eigen::VectorXd& v) { return losses::loss(p, v); }, x, i);
      worst = std::max(worst, rel_err(analytic(i), fd));
    }
  }
  return worst;
}

}  // namespace incentfed::gradcheck
