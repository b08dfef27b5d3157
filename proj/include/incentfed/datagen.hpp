#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "incentfed/game.hpp"
#include "incentfed/losses.hpp"
#include "incentfed/rng.hpp"

namespace incentfed::datagen {

// Parameters of the synthetic non-iid corpus: per-client class distributions
// are Dirichlet(alpha * 1_t) rows, features are class-conditional Gaussians.
struct DataSpec {
  int clients = 0;
  int classes = 0;
  int feature_dim = 0;
  Eigen::VectorXi full_size;  // local pool size D_i per client
  double dirichlet_alpha = 1.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (clients < 1) throw std::invalid_argument("DataSpec: need >= 1 client");
    if (classes < 2) throw std::invalid_argument("DataSpec: need >= 2 classes");
    if (feature_dim < 1) throw std::invalid_argument("DataSpec: need >= 1 feature");
    if (classes > 2 * feature_dim)
      throw std::invalid_argument(
          "DataSpec: classes must be <= 2 * feature_dim so class means stay distinct");
    if (full_size.size() != clients)
      throw std::invalid_argument("DataSpec: full_size must have one entry per client");
    if ((full_size.array() < 1).any())
      throw std::invalid_argument("DataSpec: full_size entries must be >= 1");
    if (!(dirichlet_alpha > 0.0))
      throw std::invalid_argument("DataSpec: dirichlet_alpha must be > 0");
    if (noise_sigma < 0.0)
      throw std::invalid_argument("DataSpec: noise_sigma must be >= 0");
  }
};

enum class Family { Quadratic, SoftmaxLinear, Mlp2 };

struct FamilySpec {
  Family family = Family::SoftmaxLinear;
  int hidden = 8;  // Mlp2 only
};

inline const char* family_name(Family f) {
  switch (f) {
    case Family::Quadratic: return "quadratic";
    case Family::SoftmaxLinear: return "softmax_linear";
    case Family::Mlp2: return "mlp2";
  }
  return "?";
}

namespace detail {

// Class means cycle through +/- unit vectors: mean_c = s * e_{c mod d} for
// c < d, and -s * e_{c mod d} beyond. The scale floors at 1 so zero-noise
// corpora stay separable, and grows as 3 * sigma so noisy classes keep about
// three standard deviations of separation.
inline Eigen::VectorXd class_mean(int cls, int feature_dim, double noise_sigma) {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(feature_dim);
  const double scale = std::max(1.0, 3.0 * noise_sigma);
  mean(cls % feature_dim) = (cls < feature_dim) ? scale : -scale;
  return mean;
}

inline int draw_label(const Eigen::VectorXd& row, rng::Stream& stream) {
  const double u = stream.uniform();
  double cum = 0.0;
  for (int c = 0; c < row.size(); ++c) {
    cum += row(c);
    if (u < cum) return c;
  }
  return static_cast<int>(row.size()) - 1;  // u landed in rounding slack
}

}  // namespace detail

// One Dirichlet(alpha * 1_t) row per client; pure in (spec.seed, client id).
inline game::ClassProfile sample_profiles(const DataSpec& spec) {
  spec.validate();
  Eigen::MatrixXd q(spec.clients, spec.classes);
  for (int i = 0; i < spec.clients; ++i) {
    rng::Stream stream(spec.seed, "class-profile", static_cast<std::uint64_t>(i));
    Eigen::VectorXd g(spec.classes);
    for (int c = 0; c < spec.classes; ++c) g(c) = stream.gamma(spec.dirichlet_alpha);
    q.row(i) = g.transpose() / g.sum();
  }
  return game::ClassProfile(q);
}

// theta_i uniform on [0, ||q_i||^2].
inline Eigen::VectorXd sample_costs(const game::ClassProfile& profile,
                                    std::uint64_t seed) {
  Eigen::VectorXd theta(profile.clients());
  for (int i = 0; i < profile.clients(); ++i) {
    rng::Stream stream(seed, "cost-theta", static_cast<std::uint64_t>(i));
    theta(i) = stream.uniform(0.0, profile.row_norms_sq()(i));
  }
  return theta;
}

// Dataset of client `client`: full_size_i labels drawn from q_i and features
// from the label's Gaussian. Quadratic problems regress the class index on
// [features | 1]; the softmax families carry features and labels directly.
// A pure function of (spec, profile row, family, client), so generation order
// and concurrency cannot affect the result.
inline losses::LocalProblem make_client_dataset(const DataSpec& spec,
                                                const game::ClassProfile& profile,
                                                const FamilySpec& family, int client) {
  spec.validate();
  if (profile.clients() != spec.clients || profile.classes() != spec.classes)
    throw std::invalid_argument("make_client_dataset: profile shape does not match spec");
  if (client < 0 || client >= spec.clients)
    throw std::invalid_argument("make_client_dataset: client id out of range");
  if (family.family == Family::Mlp2 && family.hidden < 1)
    throw std::invalid_argument("make_client_dataset: Mlp2 needs >= 1 hidden unit");

  const int count = spec.full_size(client);
  rng::Stream label_stream(spec.seed, "labels", static_cast<std::uint64_t>(client));
  rng::Stream feature_stream(spec.seed, "features", static_cast<std::uint64_t>(client));

  std::vector<int> labels(static_cast<std::size_t>(count));
  Eigen::MatrixXd features(count, spec.feature_dim);
  for (int j = 0; j < count; ++j) {
    const int label = detail::draw_label(profile.rows().row(client), label_stream);
    labels[static_cast<std::size_t>(j)] = label;
    Eigen::VectorXd x = detail::class_mean(label, spec.feature_dim, spec.noise_sigma);
    for (int k = 0; k < spec.feature_dim; ++k)
      x(k) += spec.noise_sigma * feature_stream.normal();
    features.row(j) = x.transpose();
  }

  switch (family.family) {
    case Family::Quadratic: {
      Eigen::MatrixXd a(count, spec.feature_dim + 1);
      a.leftCols(spec.feature_dim) = features;
      a.col(spec.feature_dim).setOnes();
      Eigen::VectorXd b(count);
      for (int j = 0; j < count; ++j)
        b(j) = static_cast<double>(labels[static_cast<std::size_t>(j)]);
      return losses::LocalProblem(losses::Quadratic{std::move(a), std::move(b)});
    }
    case Family::SoftmaxLinear:
      return losses::LocalProblem(
          losses::SoftmaxLinear{std::move(features), std::move(labels), spec.classes});
    case Family::Mlp2:
    default:
      return losses::LocalProblem(losses::Mlp2{std::move(features), std::move(labels),
                                               family.hidden, spec.classes});
  }
}

inline std::vector<losses::LocalProblem> make_datasets(const DataSpec& spec,
                                                       const game::ClassProfile& profile,
                                                       const FamilySpec& family) {
  std::vector<losses::LocalProblem> out;
  out.reserve(static_cast<std::size_t>(spec.clients));
  for (int i = 0; i < spec.clients; ++i)
    out.push_back(make_client_dataset(spec, profile, family, i));
  return out;
}

}  // namespace incentfed::datagen
