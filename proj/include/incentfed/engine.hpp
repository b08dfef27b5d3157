#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <future>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "incentfed/datagen.hpp"
#include "incentfed/game.hpp"
#include "incentfed/losses.hpp"
#include "incentfed/metrics.hpp"
#include "incentfed/rng.hpp"
#include "incentfed/types.hpp"

namespace incentfed::engine {

// p_i = N_i / sum_j N_j.
inline WeightVector weights(const game::StrategyProfile& n) {
  if (n.n.size() == 0) throw std::invalid_argument("weights: empty profile");
  if ((n.n.array() <= 0.0).any())
    throw std::invalid_argument("weights: participation levels must be positive");
  return WeightVector(n.n / n.n.sum());
}

// sum_i p_i x_i.
inline Eigen::VectorXd aggregate(std::span<const Eigen::VectorXd> x_list,
                                 const WeightVector& p) {
  if (static_cast<int>(x_list.size()) != p.size())
    throw std::invalid_argument("aggregate: weight count mismatch");
  if (x_list.empty()) throw std::invalid_argument("aggregate: nothing to aggregate");
  for (const auto& x : x_list)
    if (x.size() != x_list[0].size())
      throw std::invalid_argument("aggregate: model dimensions differ");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(x_list[0].size());
  for (std::size_t i = 0; i < x_list.size(); ++i) acc += p[static_cast<int>(i)] * x_list[i];
  return acc;
}

struct LocalRoundCapture {
  std::vector<Eigen::VectorXd> iterates;  // H + 1 entries, start included
  std::vector<Eigen::VectorXd> grads;     // H sampled gradients
};

// H single-sample SGD steps, sampling uniformly with replacement from the
// round's subset.
inline LocalRoundCapture local_round_captured(const losses::LocalProblem& problem,
                                              Eigen::VectorXd x,
                                              std::span<const int> subset,
                                              int local_steps, double gamma,
                                              rng::Stream& stream) {
  if (subset.empty()) throw std::invalid_argument("local_round: empty subset");
  LocalRoundCapture cap;
  cap.iterates.reserve(static_cast<std::size_t>(local_steps) + 1);
  cap.grads.reserve(static_cast<std::size_t>(local_steps));
  cap.iterates.push_back(x);
  for (int h = 0; h < local_steps; ++h) {
    const int j = subset[stream.uniform_below(subset.size())];
    Eigen::VectorXd g = losses::stochastic_grad(problem, x, j);
    x -= gamma * g;
    cap.grads.push_back(std::move(g));
    cap.iterates.push_back(x);
  }
  return cap;
}

inline Eigen::VectorXd local_round(const losses::LocalProblem& problem,
                                   const Eigen::VectorXd& x_start,
                                   std::span<const int> subset, int local_steps,
                                   double gamma, rng::Stream& stream) {
  return local_round_captured(problem, x_start, subset, local_steps, gamma, stream)
      .iterates.back();
}

struct FedConfig {
  game::ParticipationGame game;
  datagen::DataSpec data;
  datagen::FamilySpec family;
  double gamma = 0.0;                       // local SGD step size
  std::optional<double> gamma_tilde;        // NE step size; default mu/L^2
  int local_steps = 1;                      // H
  int rounds = 1;                           // R
  game::StrategyProfile n0;                 // initial participation levels
  std::uint64_t x0_seed = 0;
  std::uint64_t run_seed = 0;
  bool per_iter_trace = false;              // record e_bar_k, f(xbar_k)
  bool record_audit = false;                // record client iterates and gradients
  bool aggregate_with_round_weights = false;  // ablation: aggregate with p_r
  bool parallel_clients = false;
  bool shared_client_streams = false;  // diagnostic: all clients share stream keys
  std::optional<int> avg_start_round;  // track mean of xbar_k from T_{r} onward
};

struct ResolvedGame {
  double mu_hat = 0.0;
  double l_hat = 0.0;
  double gamma_tilde = 0.0;
  double rho = 0.0;     // per-round contraction bound 1 - 0.5 mu gamma_tilde
  double delta0 = 0.0;  // (m-1) ||n0 - N*|| / ||N*||_1
  game::StrategyProfile n_star;
  Eigen::VectorXd p_star;
  std::vector<std::string> warnings;
};

inline constexpr std::uint64_t kProbeSeed = 0x5eed;
inline constexpr int kProbeSamples = 64;
inline constexpr double kOracleTol = 1e-12;

// Derived game quantities: monotonicity estimates, the effective NE step, and
// the equilibrium oracle. Emits (not throws) a warning when a configured
// gamma_tilde exceeds the mu/L^2 bound that guarantees contraction.
inline ResolvedGame resolve(const FedConfig& cfg) {
  ResolvedGame rg;
  const auto est = game::monotonicity_probe(cfg.game, kProbeSamples, kProbeSeed);
  rg.mu_hat = est.mu_hat;
  rg.l_hat = est.l_hat;
  const double bound = est.strongly_monotone ? est.mu_hat / (est.l_hat * est.l_hat) : 0.0;
  rg.gamma_tilde = cfg.gamma_tilde.value_or(bound);
  if (cfg.gamma_tilde && est.strongly_monotone && *cfg.gamma_tilde > bound) {
    std::ostringstream msg;
    msg << "gamma_tilde = " << *cfg.gamma_tilde << " exceeds mu_hat/l_hat^2 = " << bound
        << "; the participation update is not guaranteed to contract";
    rg.warnings.push_back(msg.str());
  }
  rg.n_star = game::solve_ne(cfg.game, kOracleTol);
  rg.p_star = weights(rg.n_star).coeffs();
  rg.rho = 1.0 - 0.5 * rg.mu_hat * rg.gamma_tilde;
  const int m = cfg.game.players();
  rg.delta0 = (m - 1) * (cfg.n0.n - rg.n_star.n).norm() / rg.n_star.n.lpNorm<1>();
  return rg;
}

struct RoundRecord {
  int round = 0;
  long k_end = 0;  // global iteration count H * r
  double loss = 0.0;
  double grad_norm_sq = 0.0;
  double ne_dist = 0.0;
  double weight_err_max = 0.0;
  double e_bar_end = 0.0;  // consensus error at the end of the previous round's
                           // local phase (round-r-1 weights); 0 for round 0
  Eigen::VectorXd n_hat;
  Eigen::VectorXd p;
  Eigen::VectorXd util_unreg;  // theta_i N_i - a_i(N)
  Eigen::VectorXd util_reg;    // + (lambda/2) N_i^2
};

struct IterRecord {
  long k = 0;
  double e_bar = 0.0;
  double loss_xbar = 0.0;
};

struct AuditStep {
  std::vector<Eigen::VectorXd> x;  // x_{i,k} per client, before the step
  std::vector<Eigen::VectorXd> g;  // sampled gradient g_{i,k} per client
};

struct AuditRound {
  int round = 0;
  Eigen::VectorXd p;                // round weights p_r
  std::vector<AuditStep> steps;     // H entries
  std::vector<Eigen::VectorXd> x_end;  // pre-aggregation x_{i, T_{r+1}}
};

struct RunTrace {
  std::vector<RoundRecord> rounds;  // R + 1 entries, round 0 first
  std::vector<IterRecord> iters;    // per-iteration trace when enabled
  std::vector<AuditRound> audit;    // client-level capture when enabled
  Eigen::VectorXd n_star;
  Eigen::VectorXd p_star;
  double mu_hat = 0.0;
  double l_hat = 0.0;
  double gamma_tilde = 0.0;
  double rho = 0.0;
  double delta0 = 0.0;
  Eigen::VectorXd x_final;
  Eigen::VectorXd x_avg;  // mean of xbar_k over [T_{r_hat}, T_R - 1]; empty if untracked
  int avg_start_round = -1;
  std::vector<std::string> warnings;
};

namespace detail {

inline void validate(const FedConfig& cfg,
                     std::span<const losses::LocalProblem> problems) {
  cfg.data.validate();
  const int m = cfg.game.players();
  if (cfg.data.clients != m)
    throw std::invalid_argument("FedConfig: data spec and game disagree on client count");
  if (static_cast<int>(problems.size()) != m)
    throw std::invalid_argument("FedConfig: need one local problem per client");
  const int dim = problems[0].param_dim();
  for (const auto& p : problems)
    if (p.param_dim() != dim)
      throw std::invalid_argument("FedConfig: local problems disagree on parameter dimension");
  if (!(cfg.gamma > 0.0)) throw std::invalid_argument("FedConfig: gamma must be > 0");
  if (cfg.local_steps < 1) throw std::invalid_argument("FedConfig: local_steps must be >= 1");
  if (cfg.rounds < 1) throw std::invalid_argument("FedConfig: rounds must be >= 1");
  if (cfg.gamma_tilde && !(*cfg.gamma_tilde > 0.0))
    throw std::invalid_argument("FedConfig: gamma_tilde must be > 0");
  if (cfg.n0.n.size() != m)
    throw std::invalid_argument("FedConfig: n0 must have one entry per client");
  for (int i = 0; i < m; ++i) {
    if (cfg.n0.n(i) < cfg.game.n_min()(i) || cfg.n0.n(i) > cfg.game.n_max()(i))
      throw std::invalid_argument("FedConfig: n0 must lie inside the strategy box");
    if (static_cast<double>(cfg.data.full_size(i)) < std::ceil(cfg.game.n_max()(i)))
      throw std::invalid_argument(
          "FedConfig: full_size_i must cover ceil(n_max_i) so round subsets exist");
    if (problems[static_cast<std::size_t>(i)].sample_count() != cfg.data.full_size(i))
      throw std::invalid_argument("FedConfig: problem sample counts must match full_size");
  }
  if (cfg.avg_start_round &&
      (*cfg.avg_start_round < 0 || *cfg.avg_start_round >= cfg.rounds))
    throw std::invalid_argument("FedConfig: avg_start_round out of range");
}

inline Eigen::VectorXd initial_model(int dim, std::uint64_t seed) {
  rng::Stream stream(seed, "model-init");
  Eigen::VectorXd x(dim);
  for (int i = 0; i < dim; ++i) x(i) = 0.1 * stream.normal();
  return x;
}

inline RoundRecord round_record(const FedConfig& cfg, const ResolvedGame& rg,
                                std::span<const losses::LocalProblem> problems,
                                int round, const game::StrategyProfile& n_hat,
                                const Eigen::VectorXd& x_hat, double e_bar_end) {
  RoundRecord rec;
  rec.round = round;
  rec.k_end = static_cast<long>(cfg.local_steps) * round;
  const WeightVector p_star(rg.p_star);
  rec.loss = metrics::global_loss(problems, p_star, x_hat);
  rec.grad_norm_sq = metrics::global_grad_norm_sq(problems, p_star, x_hat);
  rec.ne_dist = (n_hat.n - rg.n_star.n).norm();
  rec.n_hat = n_hat.n;
  rec.p = weights(n_hat).coeffs();
  rec.weight_err_max = (rec.p - rg.p_star).cwiseAbs().maxCoeff();
  rec.e_bar_end = e_bar_end;
  rec.util_unreg = game::net_utility(cfg.game, n_hat, false);
  rec.util_reg = game::net_utility(cfg.game, n_hat, true);
  return rec;
}

}  // namespace detail

// One full federated run. Per round r: broadcast x_hat_r and N_hat_r, each
// client resamples a uniform subset of size ceil(N_{i,r}) from its pool and
// takes H single-sample SGD steps; clients step their participation levels by
// the projected pseudo-gradient map; the server reweights with the updated
// levels (the p_r ablation is a flag) and aggregates. All randomness flows
// through streams keyed by (run_seed, purpose, client, round), so the trace is
// a pure function of the config regardless of client scheduling.
inline RunTrace run(const FedConfig& cfg,
                    const std::vector<losses::LocalProblem>& problems) {
  detail::validate(cfg, problems);
  const ResolvedGame rg = resolve(cfg);
  const int m = cfg.game.players();
  const int local_steps = cfg.local_steps;
  const int rounds = cfg.rounds;

  RunTrace trace;
  trace.n_star = rg.n_star.n;
  trace.p_star = rg.p_star;
  trace.mu_hat = rg.mu_hat;
  trace.l_hat = rg.l_hat;
  trace.gamma_tilde = rg.gamma_tilde;
  trace.rho = rg.rho;
  trace.delta0 = rg.delta0;
  trace.warnings = rg.warnings;
  trace.rounds.reserve(static_cast<std::size_t>(rounds) + 1);

  Eigen::VectorXd x_hat = detail::initial_model(problems[0].param_dim(), cfg.x0_seed);
  game::StrategyProfile n_hat = cfg.n0;
  trace.rounds.push_back(detail::round_record(cfg, rg, problems, 0, n_hat, x_hat, 0.0));

  const bool track_avg = cfg.avg_start_round.has_value();
  Eigen::VectorXd avg_sum;
  long avg_count = 0;
  if (track_avg) avg_sum = Eigen::VectorXd::Zero(x_hat.size());
  const bool need_inner = cfg.per_iter_trace || cfg.record_audit || track_avg;
  const WeightVector p_star(rg.p_star);

  for (int r = 0; r < rounds; ++r) {
    const WeightVector p_round = weights(n_hat);
    std::vector<LocalRoundCapture> captures(static_cast<std::size_t>(m));

    auto client_work = [&](int i) {
      const std::uint64_t stream_client =
          cfg.shared_client_streams ? 0 : static_cast<std::uint64_t>(i);
      rng::Stream subset_stream(cfg.run_seed, "round-subset", stream_client,
                                static_cast<std::uint64_t>(r));
      const int take = static_cast<int>(std::ceil(n_hat.n(i)));
      const std::vector<int> subset = rng::sample_without_replacement(
          cfg.data.full_size(i), take, subset_stream);
      rng::Stream sgd_stream(cfg.run_seed, "local-sgd", stream_client,
                             static_cast<std::uint64_t>(r));
      captures[static_cast<std::size_t>(i)] = local_round_captured(
          problems[static_cast<std::size_t>(i)], x_hat, subset, local_steps,
          cfg.gamma, sgd_stream);
    };

    if (cfg.parallel_clients) {
      std::vector<std::future<void>> jobs;
      jobs.reserve(static_cast<std::size_t>(m));
      for (int i = 0; i < m; ++i)
        jobs.push_back(std::async(std::launch::async, client_work, i));
      for (auto& job : jobs) job.get();
    } else {
      for (int i = 0; i < m; ++i) client_work(i);
    }

    for (int i = 0; i < m; ++i) {
      if (!captures[static_cast<std::size_t>(i)].iterates.back().allFinite()) {
        std::ostringstream msg;
        msg << "run: client " << i << " produced non-finite parameters in round " << r;
        throw NumericalError(msg.str(), r, static_cast<long>(r + 1) * local_steps);
      }
    }

    if (need_inner) {
      std::vector<Eigen::VectorXd> x_at_k(static_cast<std::size_t>(m));
      AuditRound audit_round;
      if (cfg.record_audit) {
        audit_round.round = r;
        audit_round.p = p_round.coeffs();
        audit_round.steps.reserve(static_cast<std::size_t>(local_steps));
      }
      for (int h = 0; h < local_steps; ++h) {
        const long k = static_cast<long>(r) * local_steps + h;
        for (int i = 0; i < m; ++i)
          x_at_k[static_cast<std::size_t>(i)] =
              captures[static_cast<std::size_t>(i)].iterates[static_cast<std::size_t>(h)];
        Eigen::VectorXd xbar = aggregate(x_at_k, p_round);
        if (cfg.per_iter_trace) {
          IterRecord it;
          it.k = k;
          it.e_bar = metrics::consensus_error(x_at_k, p_round);
          it.loss_xbar = metrics::global_loss(problems, p_star, xbar);
          trace.iters.push_back(it);
        }
        if (track_avg && r >= *cfg.avg_start_round) {
          avg_sum += xbar;
          ++avg_count;
        }
        if (cfg.record_audit) {
          AuditStep step;
          step.x = x_at_k;
          step.g.reserve(static_cast<std::size_t>(m));
          for (int i = 0; i < m; ++i)
            step.g.push_back(
                captures[static_cast<std::size_t>(i)].grads[static_cast<std::size_t>(h)]);
          audit_round.steps.push_back(std::move(step));
        }
      }
      if (cfg.record_audit) {
        for (int i = 0; i < m; ++i)
          audit_round.x_end.push_back(
              captures[static_cast<std::size_t>(i)].iterates.back());
        trace.audit.push_back(std::move(audit_round));
      }
    }

    const game::StrategyProfile n_next = game::ne_step(cfg.game, n_hat, rg.gamma_tilde);
    const WeightVector p_agg =
        cfg.aggregate_with_round_weights ? p_round : weights(n_next);

    std::vector<Eigen::VectorXd> x_end(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i)
      x_end[static_cast<std::size_t>(i)] =
          captures[static_cast<std::size_t>(i)].iterates.back();
    const double e_bar_end = metrics::consensus_error(x_end, p_round);
    x_hat = aggregate(x_end, p_agg);
    if (!x_hat.allFinite())
      throw NumericalError("run: aggregated model is non-finite", r,
                           static_cast<long>(r + 1) * local_steps);
    n_hat = n_next;
    trace.rounds.push_back(
        detail::round_record(cfg, rg, problems, r + 1, n_hat, x_hat, e_bar_end));
  }

  trace.x_final = x_hat;
  if (track_avg && avg_count > 0) {
    trace.x_avg = avg_sum / static_cast<double>(avg_count);
    trace.avg_start_round = *cfg.avg_start_round;
  }
  return trace;
}

// Convenience entry: generates the synthetic datasets named by the config.
inline RunTrace run(const FedConfig& cfg) {
  const auto problems =
      datagen::make_datasets(cfg.data, cfg.game.profile(), cfg.family);
  return run(cfg, problems);
}

}  // namespace incentfed::engine
