#pragma once

#include <cstdlib>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "incentfed/engine.hpp"

namespace incentfed::cli {

// Any structural problem with a configuration document: parse failure,
// unknown keys, wrong types, or out-of-range values.
class ConfigError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct LoadedConfig {
  engine::FedConfig fed;
  nlohmann::json resolved;  // explicit-value echo; itself a loadable config
};

namespace detail {

using nlohmann::json;

struct Ctx {
  std::vector<std::string> errors;

  void fail(const std::string& path, const std::string& what) {
    errors.push_back(path + ": " + what);
  }
  void throw_if_failed() const {
    if (errors.empty()) return;
    std::ostringstream msg;
    msg << "invalid configuration:";
    for (const auto& e : errors) msg << "\n  " << e;
    throw ConfigError(msg.str());
  }
};

inline void check_keys(const json& obj, const std::string& path,
                       const std::set<std::string>& allowed, Ctx& ctx) {
  for (const auto& item : obj.items())
    if (!allowed.count(item.key())) ctx.fail(path + "." + item.key(), "unknown key");
}

inline const json* expect_object(const json& doc, const std::string& key, Ctx& ctx) {
  if (!doc.contains(key)) {
    ctx.fail(key, "missing required section");
    return nullptr;
  }
  if (!doc.at(key).is_object()) {
    ctx.fail(key, "must be an object");
    return nullptr;
  }
  return &doc.at(key);
}

template <class T>
std::optional<T> get_as(const json& obj, const std::string& path,
                        const std::string& key, Ctx& ctx, bool required) {
  if (!obj.contains(key)) {
    if (required) ctx.fail(path + "." + key, "missing required key");
    return std::nullopt;
  }
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    ctx.fail(path + "." + key, "wrong type");
    return std::nullopt;
  }
}

// Scalar-or-array fields broadcast a scalar across all m clients.
inline std::optional<Eigen::VectorXd> get_broadcast(const json& obj,
                                                    const std::string& path,
                                                    const std::string& key, int m,
                                                    Ctx& ctx) {
  if (!obj.contains(key)) {
    ctx.fail(path + "." + key, "missing required key");
    return std::nullopt;
  }
  const json& v = obj.at(key);
  if (v.is_number()) return Eigen::VectorXd::Constant(m, v.get<double>());
  if (v.is_array()) {
    if (static_cast<int>(v.size()) != m) {
      ctx.fail(path + "." + key, "array must have one entry per client");
      return std::nullopt;
    }
    Eigen::VectorXd out(m);
    for (int i = 0; i < m; ++i) {
      if (!v[static_cast<std::size_t>(i)].is_number()) {
        ctx.fail(path + "." + key, "array entries must be numbers");
        return std::nullopt;
      }
      out(i) = v[static_cast<std::size_t>(i)].get<double>();
    }
    return out;
  }
  ctx.fail(path + "." + key, "must be a number or an array of numbers");
  return std::nullopt;
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

}  // namespace detail

inline const char* kRunSeedEnvVar = "INCENTFED_RUN_SEED";

// Parses, schema-validates, and resolves a configuration document. Unknown
// keys are rejected; sampled quantities (class profile, costs, n0) are made
// explicit in `resolved` so a run can be reproduced from its echo. The
// `derived` section of an echoed config is accepted and ignored.
inline LoadedConfig parse_config(const nlohmann::json& doc) {
  using detail::get_as;
  using nlohmann::json;
  detail::Ctx ctx;

  if (!doc.is_object()) throw ConfigError("invalid configuration: root must be an object");
  detail::check_keys(doc, "", {"game", "data", "loss", "fed", "derived"}, ctx);
  const json* game_obj = detail::expect_object(doc, "game", ctx);
  const json* data_obj = detail::expect_object(doc, "data", ctx);
  const json* loss_obj = detail::expect_object(doc, "loss", ctx);
  const json* fed_obj = detail::expect_object(doc, "fed", ctx);
  ctx.throw_if_failed();

  detail::check_keys(*game_obj, "game",
                     {"payoff", "lambda_reg", "n_min", "n_max", "theta", "cost_seed"},
                     ctx);
  detail::check_keys(*data_obj, "data",
                     {"clients", "classes", "features", "full_size", "dirichlet_alpha",
                      "noise_sigma", "seed", "profile"},
                     ctx);
  detail::check_keys(*loss_obj, "loss", {"family", "hidden"}, ctx);
  detail::check_keys(*fed_obj, "fed",
                     {"gamma", "gamma_tilde", "local_steps", "rounds", "n0", "x0_seed",
                      "run_seed", "per_iter_trace", "aggregate_with_round_weights",
                      "parallel_clients", "avg_start_round"},
                     ctx);
  ctx.throw_if_failed();

  datagen::DataSpec spec;
  spec.clients = get_as<int>(*data_obj, "data", "clients", ctx, true).value_or(0);
  spec.classes = get_as<int>(*data_obj, "data", "classes", ctx, true).value_or(0);
  spec.feature_dim = get_as<int>(*data_obj, "data", "features", ctx, true).value_or(0);
  spec.dirichlet_alpha =
      get_as<double>(*data_obj, "data", "dirichlet_alpha", ctx, true).value_or(0.0);
  spec.noise_sigma =
      get_as<double>(*data_obj, "data", "noise_sigma", ctx, true).value_or(0.0);
  spec.seed = get_as<std::uint64_t>(*data_obj, "data", "seed", ctx, true).value_or(0);
  ctx.throw_if_failed();
  const int m = spec.clients;
  if (m < 1) throw ConfigError("invalid configuration:\n  data.clients: must be >= 1");
  if (auto fs = detail::get_broadcast(*data_obj, "data", "full_size", m, ctx))
    spec.full_size = fs->cast<int>();
  ctx.throw_if_failed();
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid configuration:\n  data: ") + e.what());
  }

  // Class profile: explicit rows or Dirichlet-sampled from the data seed.
  std::optional<game::ClassProfile> profile;
  if (data_obj->contains("profile")) {
    const json& rows = data_obj->at("profile");
    if (!rows.is_array() || static_cast<int>(rows.size()) != m) {
      ctx.fail("data.profile", "must be an array with one row per client");
    } else {
      Eigen::MatrixXd q(m, spec.classes);
      bool ok = true;
      for (int i = 0; i < m && ok; ++i) {
        const json& row = rows[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<int>(row.size()) != spec.classes) {
          ctx.fail("data.profile", "each row needs one entry per class");
          ok = false;
          break;
        }
        for (int c = 0; c < spec.classes; ++c)
          q(i, c) = row[static_cast<std::size_t>(c)].get<double>();
      }
      if (ok) {
        try {
          profile.emplace(q);
        } catch (const std::invalid_argument& e) {
          ctx.fail("data.profile", e.what());
        }
      }
    }
    ctx.throw_if_failed();
  } else {
    profile.emplace(datagen::sample_profiles(spec));
  }

  const std::string payoff_name =
      get_as<std::string>(*game_obj, "game", "payoff", ctx, true).value_or("");
  const double lambda_reg =
      get_as<double>(*game_obj, "game", "lambda_reg", ctx, true).value_or(0.0);
  auto n_min = detail::get_broadcast(*game_obj, "game", "n_min", m, ctx);
  auto n_max = detail::get_broadcast(*game_obj, "game", "n_max", m, ctx);
  ctx.throw_if_failed();
  game::PayoffKind kind;
  if (payoff_name == "discovery") {
    kind = game::PayoffKind::Discovery;
  } else if (payoff_name == "coverage") {
    kind = game::PayoffKind::Coverage;
  } else {
    throw ConfigError("invalid configuration:\n  game.payoff: must be \"discovery\" or \"coverage\"");
  }

  const std::uint64_t cost_seed =
      get_as<std::uint64_t>(*game_obj, "game", "cost_seed", ctx, false).value_or(spec.seed);
  Eigen::VectorXd theta;
  if (game_obj->contains("theta")) {
    auto t = detail::get_broadcast(*game_obj, "game", "theta", m, ctx);
    ctx.throw_if_failed();
    theta = *t;
  } else {
    theta = datagen::sample_costs(*profile, cost_seed);
  }

  std::optional<game::ParticipationGame> participation;
  try {
    participation.emplace(game::PayoffModel{kind, *profile}, theta, *n_min, *n_max,
                          lambda_reg);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid configuration:\n  game: ") + e.what());
  }

  datagen::FamilySpec family;
  const std::string family_name =
      get_as<std::string>(*loss_obj, "loss", "family", ctx, true).value_or("");
  family.hidden = get_as<int>(*loss_obj, "loss", "hidden", ctx, false).value_or(8);
  if (family_name == "quadratic") {
    family.family = datagen::Family::Quadratic;
  } else if (family_name == "softmax_linear") {
    family.family = datagen::Family::SoftmaxLinear;
  } else if (family_name == "mlp2") {
    family.family = datagen::Family::Mlp2;
  } else {
    throw ConfigError(
        "invalid configuration:\n  loss.family: must be \"quadratic\", \"softmax_linear\", or \"mlp2\"");
  }

  // n0: explicit levels, or the box minimum / midpoint by name.
  Eigen::VectorXd n0;
  const json& n0_val = fed_obj->contains("n0") ? fed_obj->at("n0") : json();
  if (!fed_obj->contains("n0")) {
    ctx.fail("fed.n0", "missing required key");
  } else if (n0_val.is_string()) {
    const std::string name = n0_val.get<std::string>();
    if (name == "min")
      n0 = participation->n_min();
    else if (name == "midpoint")
      n0 = 0.5 * (participation->n_min() + participation->n_max());
    else
      ctx.fail("fed.n0", "string form must be \"min\" or \"midpoint\"");
  } else {
    if (auto v = detail::get_broadcast(*fed_obj, "fed", "n0", m, ctx)) n0 = *v;
  }
  ctx.throw_if_failed();

  engine::FedConfig cfg{
      .game = std::move(*participation),
      .data = spec,
      .family = family,
      .gamma = get_as<double>(*fed_obj, "fed", "gamma", ctx, true).value_or(0.0),
      .gamma_tilde = get_as<double>(*fed_obj, "fed", "gamma_tilde", ctx, false),
      .local_steps = get_as<int>(*fed_obj, "fed", "local_steps", ctx, true).value_or(0),
      .rounds = get_as<int>(*fed_obj, "fed", "rounds", ctx, true).value_or(0),
      .n0 = {n0},
      .x0_seed = get_as<std::uint64_t>(*fed_obj, "fed", "x0_seed", ctx, true).value_or(0),
      .run_seed = get_as<std::uint64_t>(*fed_obj, "fed", "run_seed", ctx, true).value_or(0),
      .per_iter_trace =
          get_as<bool>(*fed_obj, "fed", "per_iter_trace", ctx, false).value_or(false),
      .aggregate_with_round_weights =
          get_as<bool>(*fed_obj, "fed", "aggregate_with_round_weights", ctx, false)
              .value_or(false),
      .parallel_clients =
          get_as<bool>(*fed_obj, "fed", "parallel_clients", ctx, false).value_or(false),
      .avg_start_round = get_as<int>(*fed_obj, "fed", "avg_start_round", ctx, false),
  };
  ctx.throw_if_failed();

  if (const char* env = std::getenv(kRunSeedEnvVar); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0')
      throw ConfigError(std::string("invalid configuration:\n  ") + kRunSeedEnvVar +
                        ": environment override is not an unsigned integer");
    cfg.run_seed = v;
  }

  // Explicit-value echo; reloading it reproduces this exact configuration.
  json resolved;
  resolved["game"] = {{"payoff", payoff_name},
                      {"lambda_reg", lambda_reg},
                      {"n_min", detail::to_std(cfg.game.n_min())},
                      {"n_max", detail::to_std(cfg.game.n_max())},
                      {"theta", detail::to_std(cfg.game.theta())},
                      {"cost_seed", cost_seed}};
  json profile_rows = json::array();
  for (int i = 0; i < m; ++i) {
    json row = json::array();
    for (int c = 0; c < spec.classes; ++c) row.push_back(cfg.game.profile().rows()(i, c));
    profile_rows.push_back(row);
  }
  resolved["data"] = {{"clients", spec.clients},
                      {"classes", spec.classes},
                      {"features", spec.feature_dim},
                      {"full_size", std::vector<int>(spec.full_size.data(),
                                                     spec.full_size.data() + m)},
                      {"dirichlet_alpha", spec.dirichlet_alpha},
                      {"noise_sigma", spec.noise_sigma},
                      {"seed", spec.seed},
                      {"profile", profile_rows}};
  resolved["loss"] = {{"family", family_name}, {"hidden", family.hidden}};
  resolved["fed"] = {{"gamma", cfg.gamma},
                     {"local_steps", cfg.local_steps},
                     {"rounds", cfg.rounds},
                     {"n0", detail::to_std(cfg.n0.n)},
                     {"x0_seed", cfg.x0_seed},
                     {"run_seed", cfg.run_seed},
                     {"per_iter_trace", cfg.per_iter_trace},
                     {"aggregate_with_round_weights", cfg.aggregate_with_round_weights},
                     {"parallel_clients", cfg.parallel_clients}};
  if (cfg.gamma_tilde) resolved["fed"]["gamma_tilde"] = *cfg.gamma_tilde;
  if (cfg.avg_start_round) resolved["fed"]["avg_start_round"] = *cfg.avg_start_round;

  return {std::move(cfg), std::move(resolved)};
}

inline LoadedConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return parse_config(doc);
}

// Attaches the derived game quantities to a resolved-config echo, and pins the
// effective gamma_tilde so reruns of the echo use the identical step.
inline void attach_derived(nlohmann::json& resolved, const engine::ResolvedGame& rg) {
  resolved["fed"]["gamma_tilde"] = rg.gamma_tilde;
  resolved["derived"] = {{"mu_hat", rg.mu_hat},
                         {"l_hat", rg.l_hat},
                         {"gamma_tilde", rg.gamma_tilde},
                         {"rho", rg.rho},
                         {"delta0", rg.delta0},
                         {"n_star", detail::to_std(rg.n_star.n)},
                         {"p_star", detail::to_std(rg.p_star)},
                         {"warnings", rg.warnings}};
}

}  // namespace incentfed::cli
