#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "incentfed/engine.hpp"

namespace incentfed::trace_io {

namespace detail {

// %.17g round-trips doubles and always formats the same bytes for the same
// value, which the byte-identical-trace contract relies on.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

}  // namespace detail

// Column order: r, k_end, loss, grad_norm_sq, ne_dist, weight_err_max,
// e_bar_end, N_1..N_m, p_1..p_m. One row per round state, round 0 included.
inline std::string to_csv(const engine::RunTrace& trace) {
  std::ostringstream out;
  const int m = static_cast<int>(trace.n_star.size());
  out << "r,k_end,loss,grad_norm_sq,ne_dist,weight_err_max,e_bar_end";
  for (int i = 1; i <= m; ++i) out << ",N_" << i;
  for (int i = 1; i <= m; ++i) out << ",p_" << i;
  out << "\n";
  for (const auto& rec : trace.rounds) {
    out << rec.round << ',' << rec.k_end << ',' << detail::fmt(rec.loss) << ','
        << detail::fmt(rec.grad_norm_sq) << ',' << detail::fmt(rec.ne_dist) << ','
        << detail::fmt(rec.weight_err_max) << ',' << detail::fmt(rec.e_bar_end);
    for (int i = 0; i < m; ++i) out << ',' << detail::fmt(rec.n_hat(i));
    for (int i = 0; i < m; ++i) out << ',' << detail::fmt(rec.p(i));
    out << "\n";
  }
  return out.str();
}

// Full-fidelity trace: every per-round quantity, the per-iteration records
// when present, the oracle, and an echo of the resolved configuration.
inline nlohmann::json to_json(const engine::RunTrace& trace,
                              const nlohmann::json& config_echo) {
  nlohmann::json j;
  j["config"] = config_echo;
  j["oracle"] = {{"n_star", detail::to_std(trace.n_star)},
                 {"p_star", detail::to_std(trace.p_star)},
                 {"mu_hat", trace.mu_hat},
                 {"l_hat", trace.l_hat},
                 {"gamma_tilde", trace.gamma_tilde},
                 {"rho", trace.rho},
                 {"delta0", trace.delta0}};
  j["warnings"] = trace.warnings;

  auto& rounds = j["rounds"] = nlohmann::json::array();
  for (const auto& rec : trace.rounds) {
    rounds.push_back({{"r", rec.round},
                      {"k_end", rec.k_end},
                      {"loss", rec.loss},
                      {"grad_norm_sq", rec.grad_norm_sq},
                      {"ne_dist", rec.ne_dist},
                      {"weight_err_max", rec.weight_err_max},
                      {"e_bar_end", rec.e_bar_end},
                      {"n_hat", detail::to_std(rec.n_hat)},
                      {"p", detail::to_std(rec.p)},
                      {"net_utility", detail::to_std(rec.util_unreg)},
                      {"net_utility_regularized", detail::to_std(rec.util_reg)}});
  }
  if (!trace.iters.empty()) {
    auto& iters = j["iterations"] = nlohmann::json::array();
    for (const auto& it : trace.iters)
      iters.push_back({{"k", it.k}, {"e_bar", it.e_bar}, {"loss_xbar", it.loss_xbar}});
  }
  if (trace.avg_start_round >= 0) {
    j["x_avg"] = detail::to_std(trace.x_avg);
    j["avg_start_round"] = trace.avg_start_round;
  }
  j["x_final"] = detail::to_std(trace.x_final);
  return j;
}

inline void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << contents;
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace incentfed::trace_io
