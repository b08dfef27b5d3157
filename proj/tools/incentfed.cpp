// Command-line front end: configuration loading, run orchestration, oracle
// solving, gradient checking, and H-sweeps. All numeric results come from the
// library; this file only wires configs to operations and files.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <future>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "incentfed/config.hpp"
#include "incentfed/engine.hpp"
#include "incentfed/gradcheck.hpp"
#include "incentfed/metrics.hpp"
#include "incentfed/trace_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace incentfed;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitAssumption = 4;
constexpr int kExitGradCheck = 5;

struct RunOutputs {
  engine::RunTrace trace;
  json resolved;
};

RunOutputs execute(cli::LoadedConfig lc) {
  const auto problems =
      datagen::make_datasets(lc.fed.data, lc.fed.game.profile(), lc.fed.family);
  const engine::ResolvedGame rg = engine::resolve(lc.fed);
  cli::attach_derived(lc.resolved, rg);
  engine::RunTrace trace = engine::run(lc.fed, problems);
  return {std::move(trace), std::move(lc.resolved)};
}

void write_run_outputs(const RunOutputs& out, const fs::path& dir) {
  fs::create_directories(dir);
  trace_io::write_file((dir / "trace.csv").string(), trace_io::to_csv(out.trace));
  trace_io::write_file((dir / "trace.json").string(),
                       trace_io::to_json(out.trace, out.resolved).dump(2) + "\n");
  trace_io::write_file((dir / "resolved_config.json").string(),
                       out.resolved.dump(2) + "\n");
}

int cmd_run(const std::string& config_path, const std::string& out_dir,
            bool per_iter_trace) {
  cli::LoadedConfig lc = cli::load_config(config_path);
  if (per_iter_trace) {
    lc.fed.per_iter_trace = true;
    lc.resolved["fed"]["per_iter_trace"] = true;
  }
  RunOutputs out = execute(std::move(lc));
  write_run_outputs(out, out_dir);
  for (const auto& w : out.trace.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "wrote " << (fs::path(out_dir) / "trace.csv").string() << " ("
            << out.trace.rounds.size() << " rows)\n";
  return kExitOk;
}

int cmd_solve_ne(const std::string& config_path) {
  const cli::LoadedConfig lc = cli::load_config(config_path);
  const engine::ResolvedGame rg = engine::resolve(lc.fed);
  json out = {{"n_star", std::vector<double>(rg.n_star.n.data(),
                                             rg.n_star.n.data() + rg.n_star.n.size())},
              {"p_star", std::vector<double>(rg.p_star.data(),
                                             rg.p_star.data() + rg.p_star.size())},
              {"mu_hat", rg.mu_hat},
              {"l_hat", rg.l_hat},
              {"gamma_tilde", rg.gamma_tilde},
              {"delta0", rg.delta0}};
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

int cmd_check_grads(const std::string& config_path, bool corrupt) {
  const cli::LoadedConfig lc = cli::load_config(config_path);
  const double corruption = corrupt ? 1e-3 : 0.0;
  constexpr int kPoints = 50;

  const bool payoff_affine =
      lc.fed.game.payoff_model().kind == game::PayoffKind::Discovery;
  const double payoff_tol = payoff_affine ? 1e-7 : 1e-6;
  const double payoff_err =
      gradcheck::pseudo_gradient_fd_error(lc.fed.game, kPoints, 101, corruption);
  std::printf("payoff %-14s worst relative error %.3e (tolerance %.0e)\n",
              payoff_affine ? "discovery" : "coverage", payoff_err, payoff_tol);

  const auto problems =
      datagen::make_datasets(lc.fed.data, lc.fed.game.profile(), lc.fed.family);
  const bool loss_affine = lc.fed.family.family == datagen::Family::Quadratic;
  const double loss_tol = loss_affine ? 1e-7 : 1e-6;
  double loss_err = 0.0;
  for (std::size_t i = 0; i < problems.size(); ++i)
    loss_err = std::max(loss_err, gradcheck::loss_grad_fd_error(
                                      problems[i], kPoints, 202 + i, corruption));
  std::printf("loss   %-14s worst relative error %.3e (tolerance %.0e)\n",
              datagen::family_name(lc.fed.family.family), loss_err, loss_tol);

  if (payoff_err > payoff_tol || loss_err > loss_tol) {
    std::cerr << "gradient check failed\n";
    return kExitGradCheck;
  }
  return kExitOk;
}

std::vector<int> parse_h_list(const std::string& spec) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const std::size_t comma = std::min(spec.find(',', pos), spec.size());
    const std::string item = spec.substr(pos, comma - pos);
    if (!item.empty()) {
      std::size_t used = 0;
      int h = 0;
      try {
        h = std::stoi(item, &used);
      } catch (const std::exception&) {
        throw cli::ConfigError("sweep-h: '" + item + "' is not an integer");
      }
      if (used != item.size() || h < 1)
        throw cli::ConfigError("sweep-h: local step counts must be integers >= 1");
      out.push_back(h);
    }
    pos = comma + 1;
  }
  return out;
}

int cmd_sweep_h(const std::string& config_path, const std::string& h_spec,
                const std::string& out_dir) {
  const std::vector<int> h_list = parse_h_list(h_spec);
  if (h_list.empty()) throw cli::ConfigError("sweep-h: empty H list");

  const cli::LoadedConfig base = cli::load_config(config_path);
  fs::create_directories(out_dir);

  // Runs are independent and deterministic per config, so they may execute
  // concurrently.
  std::vector<std::future<RunOutputs>> jobs;
  jobs.reserve(h_list.size());
  for (int h : h_list) {
    jobs.push_back(std::async(std::launch::async, [&, h] {
      cli::LoadedConfig lc = cli::load_config(config_path);
      lc.fed.local_steps = h;
      lc.resolved["fed"]["local_steps"] = h;
      return execute(std::move(lc));
    }));
  }
  std::vector<RunOutputs> runs;
  runs.reserve(h_list.size());
  for (auto& job : jobs) runs.push_back(job.get());

  std::string combined = "H," + trace_io::to_csv(runs[0].trace);
  combined.resize(combined.find('\n') + 1);  // keep prefixed header line only
  for (std::size_t idx = 0; idx < runs.size(); ++idx) {
    const std::string csv = trace_io::to_csv(runs[idx].trace);
    std::size_t pos = csv.find('\n') + 1;  // skip that run's header
    while (pos < csv.size()) {
      const std::size_t end = csv.find('\n', pos);
      combined += std::to_string(h_list[idx]) + "," + csv.substr(pos, end - pos + 1);
      pos = end + 1;
    }
    write_run_outputs(runs[idx], fs::path(out_dir) / ("h" + std::to_string(h_list[idx])));
  }
  trace_io::write_file((fs::path(out_dir) / "sweep.csv").string(), combined);

  // Target loss: optimum plus a tenth of the initial gap. Convex families use
  // the solved optimum; otherwise the best loss observed across the sweep
  // stands in for it.
  const auto problems =
      datagen::make_datasets(base.fed.data, base.fed.game.profile(), base.fed.family);
  double f_star;
  if (base.fed.family.family == datagen::Family::Mlp2) {
    f_star = std::numeric_limits<double>::infinity();
    for (const auto& run : runs)
      for (const auto& rec : run.trace.rounds) f_star = std::min(f_star, rec.loss);
  } else {
    f_star = losses::global_optimum(problems, WeightVector(runs[0].trace.p_star)).value;
  }
  const double initial_loss = runs[0].trace.rounds.front().loss;
  const double target = f_star + 0.1 * (initial_loss - f_star);

  json summary;
  summary["target_loss"] = target;
  summary["f_star"] = f_star;
  summary["initial_loss"] = initial_loss;
  auto& entries = summary["runs"] = json::array();
  for (std::size_t idx = 0; idx < runs.size(); ++idx) {
    std::vector<double> losses_per_round;
    for (const auto& rec : runs[idx].trace.rounds) losses_per_round.push_back(rec.loss);
    const auto reached = metrics::rounds_to_target(losses_per_round, target);
    json entry = {{"local_steps", h_list[idx]}};
    if (reached)
      entry["rounds_to_target"] = *reached;
    else
      entry["rounds_to_target"] = "not_reached";
    entries.push_back(entry);
  }
  trace_io::write_file((fs::path(out_dir) / "summary.json").string(),
                       summary.dump(2) + "\n");
  std::cout << "wrote " << (fs::path(out_dir) / "sweep.csv").string() << " and summary\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Incentive-aware federated averaging simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  bool per_iter = false;
  bool corrupt = false;
  std::string h_spec = "1,5,10,20";

  auto* run = app.add_subcommand("run", "Execute a federated run and write traces");
  run->add_option("--config", config_path, "Configuration JSON")->required();
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_flag("--per-iter-trace", per_iter, "Record per-iteration consensus error");

  auto* solve = app.add_subcommand("solve-ne", "Solve the participation game");
  solve->add_option("--config", config_path, "Configuration JSON")->required();

  auto* check = app.add_subcommand("check-grads", "Finite-difference gradient checks");
  check->add_option("--config", config_path, "Configuration JSON")->required();
  check->add_flag("--corrupt", corrupt, "Negative-control hook: corrupt gradients")
      ->group("");

  auto* sweep = app.add_subcommand("sweep-h", "Run the config across local-step counts");
  sweep->set_help_flag("--help", "Print this help message and exit");  // frees -h for --h
  sweep->add_option("--config", config_path, "Configuration JSON")->required();
  sweep->add_option("--h", h_spec, "Comma-separated local step counts");
  sweep->add_option("--out", out_dir, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, out_dir, per_iter);
    if (solve->parsed()) return cmd_solve_ne(config_path);
    if (check->parsed()) return cmd_check_grads(config_path, corrupt);
    if (sweep->parsed()) return cmd_sweep_h(config_path, h_spec, out_dir);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << " (round " << e.round
              << ", iteration " << e.iteration << ")\n";
    return kExitNumerical;
  } catch (const AssumptionError& e) {
    std::cerr << "game assumption violated: " << e.what() << "\n";
    return kExitAssumption;
  } catch (const ConvergenceError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
