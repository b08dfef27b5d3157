#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "incentfed/rng.hpp"
#include "incentfed/types.hpp"

namespace incentfed::game {

// Per-client class distributions, one row q_i per client over t class labels.
class ClassProfile {
 public:
  explicit ClassProfile(Eigen::MatrixXd q) : q_(std::move(q)) {
    if (q_.rows() < 1 || q_.cols() < 2)
      throw std::invalid_argument("ClassProfile: need >= 1 client and >= 2 classes");
    if ((q_.array() < 0.0).any() || (q_.array() > 1.0).any())
      throw std::invalid_argument("ClassProfile: entries must lie in [0, 1]");
    for (Eigen::Index i = 0; i < q_.rows(); ++i) {
      if (std::abs(q_.row(i).sum() - 1.0) > 1e-12) {
        std::ostringstream msg;
        msg << "ClassProfile: row " << i << " sums to " << q_.row(i).sum();
        throw std::invalid_argument(msg.str());
      }
    }
    norms_sq_ = q_.rowwise().squaredNorm();
  }

  int clients() const noexcept { return static_cast<int>(q_.rows()); }
  int classes() const noexcept { return static_cast<int>(q_.cols()); }
  const Eigen::MatrixXd& rows() const noexcept { return q_; }
  // ||q_i||^2; the diagonal of W = Q Q^T.
  const Eigen::VectorXd& row_norms_sq() const noexcept { return norms_sq_; }

 private:
  Eigen::MatrixXd q_;
  Eigen::VectorXd norms_sq_;
};

enum class PayoffKind {
  Discovery,  // a(N) = Q Q^T N, linear in contributions
  Coverage,   // a_i(N) = 1 - 0.5 sum_c q_ic prod_j (1 - q_jc)^{N_j}
};

struct PayoffModel {
  PayoffKind kind;
  ClassProfile profile;
};

// Participation levels, one real-valued coordinate per client.
struct StrategyProfile {
  Eigen::VectorXd n;
};

// The m-player data-participation game: linear costs theta_i * N_i, a payoff
// model, box strategy sets [n_min_i, n_max_i], and a quadratic regularizer
// (lambda/2) N_i^2 folded into each client's cost so that the pseudo-gradient
// F_i(N) = theta_i - da_i/dN_i + lambda N_i is strongly monotone for the
// Discovery model.
class ParticipationGame {
 public:
  ParticipationGame(PayoffModel payoff, Eigen::VectorXd theta,
                    Eigen::VectorXd n_min, Eigen::VectorXd n_max,
                    double lambda_reg)
      : payoff_(std::move(payoff)),
        theta_(std::move(theta)),
        n_min_(std::move(n_min)),
        n_max_(std::move(n_max)),
        lambda_reg_(lambda_reg) {
    const int m = payoff_.profile.clients();
    if (theta_.size() != m || n_min_.size() != m || n_max_.size() != m)
      throw std::invalid_argument("ParticipationGame: vector sizes must equal player count");
    if ((theta_.array() < 0.0).any())
      throw std::invalid_argument("ParticipationGame: theta must be nonnegative");
    if (!(lambda_reg_ > 0.0))
      throw std::invalid_argument("ParticipationGame: lambda_reg must be positive");
    for (int i = 0; i < m; ++i) {
      if (!(n_min_(i) >= 1.0 && n_min_(i) < n_max_(i)))
        throw std::invalid_argument(
            "ParticipationGame: bounds must satisfy 1 <= n_min_i < n_max_i");
    }
  }

  int players() const noexcept { return payoff_.profile.clients(); }
  const PayoffModel& payoff_model() const noexcept { return payoff_; }
  const ClassProfile& profile() const noexcept { return payoff_.profile; }
  const Eigen::VectorXd& theta() const noexcept { return theta_; }
  const Eigen::VectorXd& n_min() const noexcept { return n_min_; }
  const Eigen::VectorXd& n_max() const noexcept { return n_max_; }
  double lambda_reg() const noexcept { return lambda_reg_; }

 private:
  PayoffModel payoff_;
  Eigen::VectorXd theta_;
  Eigen::VectorXd n_min_;
  Eigen::VectorXd n_max_;
  double lambda_reg_;
};

namespace detail {

inline void check_dims(const ParticipationGame& g, const Eigen::VectorXd& n,
                       const char* op) {
  if (n.size() != g.players()) {
    std::ostringstream msg;
    msg << op << ": profile has " << n.size() << " coordinates, game has "
        << g.players() << " players";
    throw std::invalid_argument(msg.str());
  }
}

// prod_j (1 - q_jc)^{n_j} per class, with the convention 0^0 = 1; exact zero
// whenever some q_jc = 1 meets n_j > 0.
inline Eigen::VectorXd coverage_class_products(const ClassProfile& profile,
                                               const Eigen::VectorXd& n) {
  const Eigen::MatrixXd& q = profile.rows();
  Eigen::VectorXd out(profile.classes());
  for (int c = 0; c < profile.classes(); ++c) {
    double log_sum = 0.0;
    bool zero = false;
    for (int j = 0; j < profile.clients(); ++j) {
      const double qjc = q(j, c);
      if (qjc >= 1.0) {
        if (n(j) > 0.0) {
          zero = true;
          break;
        }
        continue;  // (1 - 1)^0 = 1
      }
      log_sum += n(j) * std::log1p(-qjc);
    }
    out(c) = zero ? 0.0 : std::exp(log_sum);
  }
  return out;
}

}  // namespace detail

// Payoff vector a(N) under the game's model.
inline Eigen::VectorXd payoff(const ParticipationGame& g,
                              const StrategyProfile& n) {
  detail::check_dims(g, n.n, "payoff");
  const Eigen::MatrixXd& q = g.profile().rows();
  if (g.payoff_model().kind == PayoffKind::Discovery)
    return q * (q.transpose() * n.n);
  const Eigen::VectorXd products = detail::coverage_class_products(g.profile(), n.n);
  return Eigen::VectorXd::Ones(g.players()) - 0.5 * (q * products);
}

// Pseudo-gradient F_i(N) = theta_i - da_i/dN_i + lambda N_i.
//
// Discovery: da_i/dN_i = ||q_i||^2, a constant, so F is affine with Jacobian
// exactly lambda * I. Coverage: da_i/dN_i =
// -0.5 sum_c q_ic ln(1 - q_ic) prod_j (1 - q_jc)^{n_j}; classes with some
// q_jc = 1 contribute 0 (the x^n ln x -> 0 limit), keeping F finite on the box.
inline Eigen::VectorXd pseudo_gradient(const ParticipationGame& g,
                                       const StrategyProfile& n) {
  detail::check_dims(g, n.n, "pseudo_gradient");
  const int m = g.players();
  Eigen::VectorXd marginal(m);
  if (g.payoff_model().kind == PayoffKind::Discovery) {
    marginal = g.profile().row_norms_sq();
  } else {
    const Eigen::MatrixXd& q = g.profile().rows();
    const Eigen::VectorXd products = detail::coverage_class_products(g.profile(), n.n);
    for (int i = 0; i < m; ++i) {
      double acc = 0.0;
      for (int c = 0; c < g.profile().classes(); ++c) {
        const double qic = q(i, c);
        if (qic <= 0.0 || qic >= 1.0) continue;
        acc += qic * std::log1p(-qic) * products(c);
      }
      marginal(i) = -0.5 * acc;
    }
  }
  return g.theta() - marginal + g.lambda_reg() * n.n;
}

// Euclidean projection onto the box strategy set; coordinatewise clamp since
// the set is a product of intervals.
inline StrategyProfile project_box(const ParticipationGame& g,
                                   const Eigen::VectorXd& v) {
  detail::check_dims(g, v, "project_box");
  return {v.cwiseMax(g.n_min()).cwiseMin(g.n_max())};
}

// One synchronous projected pseudo-gradient step for all players.
inline StrategyProfile ne_step(const ParticipationGame& g,
                               const StrategyProfile& n, double gamma_tilde) {
  detail::check_dims(g, n.n, "ne_step");
  if (!(gamma_tilde > 0.0))
    throw std::invalid_argument("ne_step: gamma_tilde must be positive");
  return project_box(g, n.n - gamma_tilde * pseudo_gradient(g, n));
}

struct MonotonicityEstimate {
  double mu_hat = 0.0;  // min <F(n)-F(n'), n-n'> / ||n-n'||^2 over sampled pairs
  double l_hat = 0.0;   // max ||F(n)-F(n')|| / ||n-n'|| over sampled pairs
  bool strongly_monotone = false;  // mu_hat > 0
};

// Samples pairs in the box and reports secant estimates of the monotonicity
// and Lipschitz constants of F. For Discovery the Jacobian is lambda * I, so
// (lambda, lambda) is returned analytically. Coverage estimates mix long
// secants between independent points with short secants anchored at the box
// corners, midpoint, and random points; the short ones matter because the
// coverage curvature peaks at the low corner and a long-secant-only estimate
// understates L there, which would make the mu/L^2 step oscillate. A
// nonpositive mu_hat is reported, not thrown; callers that need strong
// monotonicity (the NE oracle) refuse.
inline MonotonicityEstimate monotonicity_probe(const ParticipationGame& g,
                                               int samples,
                                               std::uint64_t rng_seed) {
  if (samples < 2)
    throw std::invalid_argument("monotonicity_probe: need at least 2 samples");
  if (g.payoff_model().kind == PayoffKind::Discovery)
    return {g.lambda_reg(), g.lambda_reg(), true};

  rng::Stream stream(rng_seed, "monotonicity-probe");
  const int m = g.players();
  auto draw_point = [&] {
    Eigen::VectorXd v(m);
    for (int i = 0; i < m; ++i) v(i) = stream.uniform(g.n_min()(i), g.n_max()(i));
    return v;
  };
  auto clamp = [&](const Eigen::VectorXd& v) {
    return v.cwiseMax(g.n_min()).cwiseMin(g.n_max()).eval();
  };

  double mu = std::numeric_limits<double>::infinity();
  double lip = 0.0;
  int used = 0;
  auto use_pair = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double dist_sq = (a - b).squaredNorm();
    if (dist_sq < 1e-24) return;  // coincident pair, ratio undefined
    const Eigen::VectorXd df = pseudo_gradient(g, {a}) - pseudo_gradient(g, {b});
    mu = std::min(mu, df.dot(a - b) / dist_sq);
    lip = std::max(lip, df.norm() / std::sqrt(dist_sq));
    ++used;
  };
  auto short_secant = [&](const Eigen::VectorXd& anchor) {
    Eigen::VectorXd dir(m);
    for (int i = 0; i < m; ++i) dir(i) = stream.normal();
    dir.normalize();
    const double scale = 1e-4 * (g.n_max() - g.n_min()).norm();
    use_pair(anchor, clamp(anchor + scale * dir));
  };

  short_secant(g.n_min());
  short_secant(g.n_max());
  short_secant(0.5 * (g.n_min() + g.n_max()));
  for (int s = 0; s < samples; ++s) {
    const Eigen::VectorXd a = draw_point();
    use_pair(a, draw_point());
    short_secant(a);
  }
  if (used == 0)
    throw std::invalid_argument("monotonicity_probe: all sampled pairs coincided");
  return {mu, lip, mu > 0.0};
}

// Closed-form equilibrium of a Discovery game: F is affine and separable, so
// the KKT system clamps the unconstrained stationary point to the box.
inline StrategyProfile discovery_equilibrium(const ParticipationGame& g) {
  if (g.payoff_model().kind != PayoffKind::Discovery)
    throw std::invalid_argument("discovery_equilibrium: Discovery games only");
  const Eigen::VectorXd interior =
      (g.profile().row_norms_sq() - g.theta()) / g.lambda_reg();
  return project_box(g, interior);
}

inline constexpr long kNeIterationCap = 1'000'000;  // affine games need tens

// Iterates the projected pseudo-gradient map with step mu_hat / l_hat^2 until
// the displacement drops below tol * max(1, ||n||). For Discovery the result
// is cross-checked against the closed form and both must agree within 10*tol.
inline StrategyProfile solve_ne(const ParticipationGame& g, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("solve_ne: tol must be positive");
  const MonotonicityEstimate est = monotonicity_probe(g, 64, 0x5eed);
  if (!est.strongly_monotone) {
    std::ostringstream msg;
    msg << "solve_ne: monotonicity probe reported mu_hat = " << est.mu_hat
        << " <= 0; the projected-gradient oracle requires a strongly monotone game";
    throw AssumptionError(msg.str());
  }
  const double gamma_tilde = est.mu_hat / (est.l_hat * est.l_hat);

  StrategyProfile n = project_box(g, 0.5 * (g.n_min() + g.n_max()));
  for (long it = 0; it < kNeIterationCap; ++it) {
    StrategyProfile next = ne_step(g, n, gamma_tilde);
    const double step = (next.n - n.n).norm();
    n = std::move(next);
    if (step <= tol * std::max(1.0, n.n.norm())) {
      if (g.payoff_model().kind == PayoffKind::Discovery) {
        const StrategyProfile kkt = discovery_equilibrium(g);
        if ((kkt.n - n.n).cwiseAbs().maxCoeff() > 10.0 * tol) {
          std::ostringstream msg;
          msg << "solve_ne: iterative and closed-form equilibria disagree by "
              << (kkt.n - n.n).cwiseAbs().maxCoeff() << " (> 10*tol)";
          throw NumericalError(msg.str(), -1, it);
        }
      }
      return n;
    }
  }
  std::ostringstream msg;
  msg << "solve_ne: no convergence after " << kNeIterationCap
      << " steps (players=" << g.players() << ", payoff="
      << (g.payoff_model().kind == PayoffKind::Discovery ? "discovery" : "coverage")
      << ", lambda_reg=" << g.lambda_reg() << ", gamma_tilde=" << gamma_tilde
      << ", mu_hat=" << est.mu_hat << ", l_hat=" << est.l_hat << ")";
  throw ConvergenceError(msg.str());
}

// Per-client net utility loss l_i(N) = theta_i N_i - a_i(N), optionally with
// the regularizer (lambda/2) N_i^2 that the solved game actually uses.
inline Eigen::VectorXd net_utility(const ParticipationGame& g,
                                   const StrategyProfile& n, bool regularized) {
  detail::check_dims(g, n.n, "net_utility");
  Eigen::VectorXd u =
      g.theta().cwiseProduct(n.n) - payoff(g, n);
  if (regularized) u += 0.5 * g.lambda_reg() * n.n.cwiseProduct(n.n);
  return u;
}

}  // namespace incentfed::game
