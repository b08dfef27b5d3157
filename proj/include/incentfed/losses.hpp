#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

#include "incentfed/types.hpp"

namespace incentfed::losses {

// f(x) = ||A x - b||^2 / (2 J)
struct Quadratic {
  Eigen::MatrixXd a;  // J x n
  Eigen::VectorXd b;  // J

  int sample_count() const noexcept { return static_cast<int>(a.rows()); }
  int param_dim() const noexcept { return static_cast<int>(a.cols()); }

  // Smoothness constant sigma_max(A)^2 / J.
  double lipschitz_const() const {
    const double sigma = a.jacobiSvd().singularValues()(0);
    return sigma * sigma / static_cast<double>(a.rows());
  }
};

// Mean cross-entropy of softmax(W [feat; 1]); the bias is folded into W as a
// constant feature, so the parameter vector packs W as classes x (d+1),
// column-major.
struct SoftmaxLinear {
  Eigen::MatrixXd features;  // J x d
  std::vector<int> labels;   // values in [0, classes)
  int classes = 0;

  int sample_count() const noexcept { return static_cast<int>(features.rows()); }
  int param_dim() const noexcept {
    return classes * (static_cast<int>(features.cols()) + 1);
  }
};

// Two-layer network: tanh hidden layer of size `hidden`, softmax output.
// Parameters pack X1 (hidden x (d+1)) then X2 (classes x (hidden+1)), each
// column-major, biases folded as constant features.
struct Mlp2 {
  Eigen::MatrixXd features;  // J x d
  std::vector<int> labels;
  int hidden = 0;
  int classes = 0;

  int sample_count() const noexcept { return static_cast<int>(features.rows()); }
  int param_dim() const noexcept {
    const int d = static_cast<int>(features.cols());
    return hidden * (d + 1) + classes * (hidden + 1);
  }
};

using LossFamily = std::variant<Quadratic, SoftmaxLinear, Mlp2>;

namespace detail {

inline void validate_labels(const std::vector<int>& labels, int classes,
                            int sample_count, const char* family) {
  if (classes < 2)
    throw std::invalid_argument(std::string(family) + ": need >= 2 classes");
  if (static_cast<int>(labels.size()) != sample_count)
    throw std::invalid_argument(std::string(family) +
                                ": label count must equal sample count");
  for (int y : labels)
    if (y < 0 || y >= classes)
      throw std::invalid_argument(std::string(family) + ": label out of range");
}

}  // namespace detail

// One client's local objective; immutable after construction.
class LocalProblem {
 public:
  explicit LocalProblem(Quadratic q) : family_(std::move(q)) {
    const auto& f = std::get<Quadratic>(family_);
    if (f.a.rows() < 1) throw std::invalid_argument("Quadratic: need >= 1 sample");
    if (f.b.size() != f.a.rows())
      throw std::invalid_argument("Quadratic: rows of A and b must agree");
  }
  explicit LocalProblem(SoftmaxLinear s) : family_(std::move(s)) {
    const auto& f = std::get<SoftmaxLinear>(family_);
    if (f.sample_count() < 1)
      throw std::invalid_argument("SoftmaxLinear: need >= 1 sample");
    detail::validate_labels(f.labels, f.classes, f.sample_count(), "SoftmaxLinear");
  }
  explicit LocalProblem(Mlp2 m) : family_(std::move(m)) {
    const auto& f = std::get<Mlp2>(family_);
    if (f.sample_count() < 1) throw std::invalid_argument("Mlp2: need >= 1 sample");
    if (f.hidden < 1) throw std::invalid_argument("Mlp2: need >= 1 hidden unit");
    detail::validate_labels(f.labels, f.classes, f.sample_count(), "Mlp2");
  }

  const LossFamily& family() const noexcept { return family_; }

  int sample_count() const {
    return std::visit([](const auto& f) { return f.sample_count(); }, family_);
  }
  int param_dim() const {
    return std::visit([](const auto& f) { return f.param_dim(); }, family_);
  }
  bool convex() const noexcept { return !std::holds_alternative<Mlp2>(family_); }

 private:
  LossFamily family_;
};

namespace detail {

inline void check_param_dim(const LocalProblem& p, const Eigen::VectorXd& x,
                            const char* op) {
  if (x.size() != p.param_dim()) {
    std::ostringstream msg;
    msg << op << ": parameter vector has " << x.size() << " entries, problem needs "
        << p.param_dim();
    throw std::invalid_argument(msg.str());
  }
}

inline void check_sample_index(const LocalProblem& p, int j, const char* op) {
  if (j < 0 || j >= p.sample_count()) {
    std::ostringstream msg;
    msg << op << ": sample index " << j << " out of range [0, " << p.sample_count()
        << ")";
    throw std::invalid_argument(msg.str());
  }
}

// Stable softmax cross-entropy; writes p - e_label into dlogits.
inline double softmax_ce(const Eigen::VectorXd& logits, int label,
                         Eigen::VectorXd& dlogits) {
  const double zmax = logits.maxCoeff();
  dlogits = (logits.array() - zmax).exp();
  const double denom = dlogits.sum();
  const double value = std::log(denom) - (logits(label) - zmax);
  dlogits /= denom;
  dlogits(label) -= 1.0;
  return value;
}

struct SoftmaxViews {
  Eigen::Map<const Eigen::MatrixXd> w;
};

inline Eigen::VectorXd with_bias(const Eigen::MatrixXd& features, int j) {
  Eigen::VectorXd phi(features.cols() + 1);
  phi.head(features.cols()) = features.row(j).transpose();
  phi(features.cols()) = 1.0;
  return phi;
}

inline double sample_eval(const Quadratic& f, const Eigen::VectorXd& x, int j,
                          Eigen::VectorXd* g) {
  const double residual = f.a.row(j).dot(x) - f.b(j);
  if (g) *g = residual * f.a.row(j).transpose();
  return 0.5 * residual * residual;
}

inline double sample_eval(const SoftmaxLinear& f, const Eigen::VectorXd& x, int j,
                          Eigen::VectorXd* g) {
  const int d1 = static_cast<int>(f.features.cols()) + 1;
  Eigen::Map<const Eigen::MatrixXd> w(x.data(), f.classes, d1);
  const Eigen::VectorXd phi = with_bias(f.features, j);
  Eigen::VectorXd dlogits;
  const double value = softmax_ce(w * phi, f.labels[static_cast<std::size_t>(j)], dlogits);
  if (g) {
    g->setZero(x.size());
    Eigen::Map<Eigen::MatrixXd>(g->data(), f.classes, d1) = dlogits * phi.transpose();
  }
  return value;
}

inline double sample_eval(const Mlp2& f, const Eigen::VectorXd& x, int j,
                          Eigen::VectorXd* g) {
  const int d1 = static_cast<int>(f.features.cols()) + 1;
  const int n1 = f.hidden * d1;
  Eigen::Map<const Eigen::MatrixXd> x1(x.data(), f.hidden, d1);
  Eigen::Map<const Eigen::MatrixXd> x2(x.data() + n1, f.classes, f.hidden + 1);

  const Eigen::VectorXd phi = with_bias(f.features, j);
  const Eigen::VectorXd h = (x1 * phi).array().tanh();
  Eigen::VectorXd psi(f.hidden + 1);
  psi.head(f.hidden) = h;
  psi(f.hidden) = 1.0;

  Eigen::VectorXd dlogits;
  const double value = softmax_ce(x2 * psi, f.labels[static_cast<std::size_t>(j)], dlogits);
  if (g) {
    g->setZero(x.size());
    Eigen::Map<Eigen::MatrixXd>(g->data(), f.hidden, d1) =
        ((x2.leftCols(f.hidden).transpose() * dlogits).array() *
         (1.0 - h.array().square()))
            .matrix() *
        phi.transpose();
    Eigen::Map<Eigen::MatrixXd>(g->data() + n1, f.classes, f.hidden + 1) =
        dlogits * psi.transpose();
  }
  return value;
}

}  // namespace detail

// Loss of the j-th sample alone.
inline double sample_loss(const LocalProblem& p, const Eigen::VectorXd& x, int j) {
  detail::check_param_dim(p, x, "sample_loss");
  detail::check_sample_index(p, j, "sample_loss");
  return std::visit([&](const auto& f) { return detail::sample_eval(f, x, j, nullptr); },
                    p.family());
}

// Gradient of the j-th per-sample loss; averaging over all j recovers grad().
inline Eigen::VectorXd stochastic_grad(const LocalProblem& p,
                                       const Eigen::VectorXd& x, int j) {
  detail::check_param_dim(p, x, "stochastic_grad");
  detail::check_sample_index(p, j, "stochastic_grad");
  Eigen::VectorXd g;
  std::visit([&](const auto& f) { detail::sample_eval(f, x, j, &g); }, p.family());
  return g;
}

// Empirical mean loss over the problem's samples.
inline double loss(const LocalProblem& p, const Eigen::VectorXd& x) {
  detail::check_param_dim(p, x, "loss");
  if (const auto* q = std::get_if<Quadratic>(&p.family()))
    return (q->a * x - q->b).squaredNorm() / (2.0 * q->sample_count());
  double acc = 0.0;
  std::visit(
      [&](const auto& f) {
        for (int j = 0; j < f.sample_count(); ++j)
          acc += detail::sample_eval(f, x, j, nullptr);
      },
      p.family());
  return acc / p.sample_count();
}

// Exact gradient, the mean of the per-sample gradients. The quadratic family
// uses the matrix identity A^T (A x - b) / J; the softmax families accumulate
// per-sample gradients so the mean matches stochastic_grad bit for bit.
inline Eigen::VectorXd grad(const LocalProblem& p, const Eigen::VectorXd& x) {
  detail::check_param_dim(p, x, "grad");
  if (const auto* q = std::get_if<Quadratic>(&p.family()))
    return q->a.transpose() * (q->a * x - q->b) / q->sample_count();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(x.size());
  Eigen::VectorXd g;
  std::visit(
      [&](const auto& f) {
        for (int j = 0; j < f.sample_count(); ++j) {
          detail::sample_eval(f, x, j, &g);
          acc += g;
        }
      },
      p.family());
  return acc / p.sample_count();
}

struct GlobalOptimum {
  Eigen::VectorXd x;
  double value = 0.0;
};

namespace detail {

inline constexpr double kOptimumGradTol = 1e-9;

inline GlobalOptimum quadratic_optimum(std::span<const LocalProblem> problems,
                                       const WeightVector& weights) {
  const int dim = problems[0].param_dim();
  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
  for (std::size_t i = 0; i < problems.size(); ++i) {
    const auto& q = std::get<Quadratic>(problems[i].family());
    const double scale = weights[static_cast<int>(i)] / q.sample_count();
    normal.noalias() += scale * q.a.transpose() * q.a;
    rhs.noalias() += scale * q.a.transpose() * q.b;
  }
  Eigen::VectorXd x = normal.ldlt().solve(rhs);
  if (!x.allFinite() || (normal * x - rhs).norm() > kOptimumGradTol)
    x = normal.completeOrthogonalDecomposition().solve(rhs);
  return {x, 0.0};
}

}  // namespace detail

// Minimizer and value of f = sum_i p_i f_i. Quadratic-only stacks solve the
// weighted normal equations; otherwise full-gradient descent with Armijo
// backtracking and an expanding trial step runs until ||grad f|| <= 1e-9.
// Requesting a nonconvex family is an error.
inline GlobalOptimum global_optimum(std::span<const LocalProblem> problems,
                                    const WeightVector& weights) {
  if (problems.empty()) throw std::invalid_argument("global_optimum: no problems");
  if (weights.size() != static_cast<int>(problems.size()))
    throw std::invalid_argument("global_optimum: weight count mismatch");
  const int dim = problems[0].param_dim();
  bool all_quadratic = true;
  for (const auto& p : problems) {
    if (!p.convex())
      throw std::invalid_argument("global_optimum: unsupported nonconvex family");
    if (p.param_dim() != dim)
      throw std::invalid_argument("global_optimum: parameter dimensions differ");
    all_quadratic = all_quadratic && std::holds_alternative<Quadratic>(p.family());
  }

  auto objective = [&](const Eigen::VectorXd& x) {
    double acc = 0.0;
    for (std::size_t i = 0; i < problems.size(); ++i)
      acc += weights[static_cast<int>(i)] * loss(problems[i], x);
    return acc;
  };
  auto gradient = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim);
    for (std::size_t i = 0; i < problems.size(); ++i)
      acc += weights[static_cast<int>(i)] * grad(problems[i], x);
    return acc;
  };

  if (all_quadratic) {
    GlobalOptimum opt = detail::quadratic_optimum(problems, weights);
    if (gradient(opt.x).norm() > detail::kOptimumGradTol)
      throw ConvergenceError("global_optimum: normal-equation solve left residual gradient");
    opt.value = objective(opt.x);
    return opt;
  }

  Eigen::VectorXd x = Eigen::VectorXd::Zero(dim);
  double fx = objective(x);
  double step = 1.0;
  constexpr long kMaxIters = 500'000;
  for (long it = 0; it < kMaxIters; ++it) {
    const Eigen::VectorXd g = gradient(x);
    const double g_sq = g.squaredNorm();
    if (std::sqrt(g_sq) <= detail::kOptimumGradTol) return {x, fx};
    step = std::min(step * 2.0, 1e12);
    int halvings = 0;
    for (;; ++halvings) {
      if (halvings > 200)
        throw ConvergenceError("global_optimum: line search failed to make progress");
      const Eigen::VectorXd trial = x - step * g;
      const double f_trial = objective(trial);
      if (f_trial <= fx - 1e-4 * step * g_sq) {
        x = trial;
        fx = f_trial;
        break;
      }
      step *= 0.5;
    }
  }
  throw ConvergenceError("global_optimum: gradient descent hit the iteration cap");
}

// Largest per-sample gradient variance over the probe points: an empirical
// stand-in for the bounded-variance constant nu^2.
inline double max_gradient_variance(const LocalProblem& p,
                                    std::span<const Eigen::VectorXd> probe_points) {
  double worst = 0.0;
  for (const auto& x : probe_points) {
    const Eigen::VectorXd mean = grad(p, x);
    double acc = 0.0;
    for (int j = 0; j < p.sample_count(); ++j)
      acc += (stochastic_grad(p, x, j) - mean).squaredNorm();
    worst = std::max(worst, acc / p.sample_count());
  }
  return worst;
}

}  // namespace incentfed::losses
