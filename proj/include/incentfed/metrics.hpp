#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "incentfed/losses.hpp"
#include "incentfed/types.hpp"

namespace incentfed::metrics {

// Weighted consensus error: sum_i p_i ||x_i - xbar||^2 with xbar the weighted
// mean. Computed around the first iterate (d_i = x_i - x_0, spread of d),
// which is the same quantity by translation invariance and returns exactly
// zero when all iterates are bitwise identical.
inline double consensus_error(std::span<const Eigen::VectorXd> x_list,
                              const WeightVector& p) {
  if (static_cast<int>(x_list.size()) != p.size())
    throw std::invalid_argument("consensus_error: weight count mismatch");
  if (x_list.empty()) throw std::invalid_argument("consensus_error: no iterates");
  Eigen::VectorXd mean_dev = Eigen::VectorXd::Zero(x_list[0].size());
  for (std::size_t i = 0; i < x_list.size(); ++i)
    mean_dev += p[static_cast<int>(i)] * (x_list[i] - x_list[0]);
  double acc = 0.0;
  for (std::size_t i = 0; i < x_list.size(); ++i)
    acc += p[static_cast<int>(i)] * (x_list[i] - x_list[0] - mean_dev).squaredNorm();
  return acc;
}

// ||sum_i p*_i grad f_i(x)||^2, the squared gradient of the equilibrium-
// weighted global objective.
inline double global_grad_norm_sq(std::span<const losses::LocalProblem> problems,
                                  const WeightVector& p_star,
                                  const Eigen::VectorXd& x) {
  if (static_cast<int>(problems.size()) != p_star.size())
    throw std::invalid_argument("global_grad_norm_sq: weight count mismatch");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(x.size());
  for (std::size_t i = 0; i < problems.size(); ++i)
    acc += p_star[static_cast<int>(i)] * losses::grad(problems[i], x);
  return acc.squaredNorm();
}

// Weighted global loss f(x) = sum_i p_i f_i(x).
inline double global_loss(std::span<const losses::LocalProblem> problems,
                          const WeightVector& p, const Eigen::VectorXd& x) {
  if (static_cast<int>(problems.size()) != p.size())
    throw std::invalid_argument("global_loss: weight count mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < problems.size(); ++i)
    acc += p[static_cast<int>(i)] * losses::loss(problems[i], x);
  return acc;
}

// Bregman divergence D_f(x, y) = f(x) - f(y) - grad f(y)^T (x - y) of the
// weighted objective; equals f(x) - f* when y is the global minimizer.
inline double bregman_gap(std::span<const losses::LocalProblem> problems,
                          const WeightVector& p_star, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& x_star) {
  for (const auto& prob : problems)
    if (!prob.convex())
      throw std::invalid_argument("bregman_gap: unsupported nonconvex family");
  Eigen::VectorXd grad_at_star = Eigen::VectorXd::Zero(x.size());
  for (std::size_t i = 0; i < problems.size(); ++i)
    grad_at_star += p_star[static_cast<int>(i)] * losses::grad(problems[i], x_star);
  return global_loss(problems, p_star, x) - global_loss(problems, p_star, x_star) -
         grad_at_star.dot(x - x_star);
}

struct RateFit {
  double slope = 0.0;      // per round, natural log
  double intercept = 0.0;
  double r_squared = 0.0;
};

inline constexpr double kRateFitFloor = 1e-13;  // log of FP noise corrupts slopes

// Least-squares line through (r, ln distance_r). Points at or below the
// numerical floor are dropped; fewer than 5 usable points is an error.
inline RateFit fit_rate(std::span<const double> distances) {
  std::vector<double> xs, ys;
  for (std::size_t r = 0; r < distances.size(); ++r) {
    if (distances[r] > kRateFitFloor) {
      xs.push_back(static_cast<double>(r));
      ys.push_back(std::log(distances[r]));
    }
  }
  if (xs.size() < 5)
    throw std::invalid_argument("fit_rate: fewer than 5 points above the 1e-13 floor");

  const double n = static_cast<double>(xs.size());
  double mean_x = 0.0, mean_y = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mean_x += xs[i];
    mean_y += ys[i];
  }
  mean_x /= n;
  mean_y /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mean_x) * (xs[i] - mean_x);
    sxy += (xs[i] - mean_x) * (ys[i] - mean_y);
    syy += (ys[i] - mean_y) * (ys[i] - mean_y);
  }
  RateFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = mean_y - fit.slope * mean_x;
  if (syy <= 0.0) {
    fit.r_squared = 1.0;  // constant sequence: the flat line is exact
  } else {
    double ss_res = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double pred = fit.intercept + fit.slope * xs[i];
      ss_res += (ys[i] - pred) * (ys[i] - pred);
    }
    fit.r_squared = 1.0 - ss_res / syy;
  }
  return fit;
}

struct BgdFit {
  double g_sq = 0.0;
  double b_sq = 1.0;
};

// Smallest (G^2, B^2) on the grid B^2 in {1, 2, 4, 8} such that
// (1/m) sum_i ||grad f_i(x)||^2 <= G^2 + B^2 ||grad f(x)||^2 at every sample.
// Diagnostic only; nothing universal is asserted.
inline BgdFit bgd_fit(std::span<const losses::LocalProblem> problems,
                      const WeightVector& p_star,
                      std::span<const Eigen::VectorXd> x_samples) {
  if (x_samples.size() < 10)
    throw std::invalid_argument("bgd_fit: need >= 10 sample points");
  const int m = static_cast<int>(problems.size());
  std::vector<double> lhs(x_samples.size()), global_sq(x_samples.size());
  for (std::size_t s = 0; s < x_samples.size(); ++s) {
    double acc = 0.0;
    for (const auto& prob : problems)
      acc += losses::grad(prob, x_samples[s]).squaredNorm();
    lhs[s] = acc / m;
    global_sq[s] = global_grad_norm_sq(problems, p_star, x_samples[s]);
  }
  BgdFit best;
  bool have = false;
  for (double b_sq : {1.0, 2.0, 4.0, 8.0}) {
    double g_sq = 0.0;
    for (std::size_t s = 0; s < x_samples.size(); ++s)
      g_sq = std::max(g_sq, lhs[s] - b_sq * global_sq[s]);
    if (!have || g_sq < best.g_sq) {
      best = {g_sq, b_sq};
      have = true;
    }
  }
  return best;
}

// First index with value <= target, or nullopt.
inline std::optional<int> rounds_to_target(std::span<const double> losses_per_round,
                                           double target) {
  for (std::size_t r = 0; r < losses_per_round.size(); ++r)
    if (losses_per_round[r] <= target) return static_cast<int>(r);
  return std::nullopt;
}

}  // namespace incentfed::metrics
