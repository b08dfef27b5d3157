#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <utility>

namespace incentfed {

// A run or solver hit non-finite numbers; carries where.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(std::string what, int round, long iteration)
      : std::runtime_error(std::move(what)), round(round), iteration(iteration) {}
  int round;
  long iteration;
};

// A game fails the strong-monotonicity requirement needed by the NE oracle.
class AssumptionError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An iterative solver exhausted its budget.
class ConvergenceError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Point on the probability simplex; the aggregation weights p.
class WeightVector {
 public:
  explicit WeightVector(Eigen::VectorXd p) : p_(std::move(p)) {
    if (p_.size() == 0) throw std::invalid_argument("WeightVector: empty");
    if ((p_.array() < 0.0).any())
      throw std::invalid_argument("WeightVector: negative entry");
    if (std::abs(p_.sum() - 1.0) > 1e-12)
      throw std::invalid_argument("WeightVector: entries must sum to 1");
  }

  const Eigen::VectorXd& coeffs() const noexcept { return p_; }
  int size() const noexcept { return static_cast<int>(p_.size()); }
  double operator[](int i) const { return p_(i); }

 private:
  Eigen::VectorXd p_;
};

}  // namespace incentfed
