#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "epi/config.hpp"
#include "epi/runner.hpp"

namespace {

epi::RunConfig load_config(const std::string& path,
                           const std::vector<std::string>& overrides,
                           const std::string& out_dir) {
  auto cfg = epi::RunConfig::load(path, overrides);
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual-learning lab: evolving parameter isolation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* opt = cmd->add_option("--config", config_path, "JSON config file");
    if (needs_config) opt->required();
    cmd->add_option("--out", out_dir, "output directory (overrides config)");
    cmd->add_option("--override", overrides,
                    "dotted-path config override, e.g. epi.p=0.02");
    cmd->add_option("--seed", seed, "single seed (otherwise all config seeds)");
  };

  auto* run_cmd = app.add_subcommand("run", "execute one training run");
  add_common(run_cmd, true);

  auto* sweep_cmd =
      app.add_subcommand("sweep", "run a hyperparameter sweep over one axis");
  add_common(sweep_cmd, true);
  std::string axis;
  std::vector<double> values;
  sweep_cmd->add_option("--axis", axis, "p, H, or beta")->required();
  sweep_cmd->add_option("--values", values, "axis values")->required();

  auto* analyze_cmd =
      app.add_subcommand("analyze", "mask drift report from snapshots");
  std::string snapshot_dir;
  analyze_cmd->add_option("--dir", snapshot_dir, "run or snapshot directory")
      ->required();

  auto* diag_cmd =
      app.add_subcommand("diagnose", "perturbation-vs-sensitivity correlation");
  add_common(diag_cmd, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      auto cfg = load_config(config_path, overrides, out_dir);
      const auto seeds =
          seed ? std::vector<std::uint64_t>{*seed} : cfg.seeds;
      for (auto s : seeds) {
        const auto summary = epi::train_run(cfg, s);
        std::cout << "seed " << s << ": mean perf "
                  << summary.mean_final_perf() << ", mean FR "
                  << summary.mean_forgetting() << "%\n";
      }
    } else if (sweep_cmd->parsed()) {
      auto cfg = load_config(config_path, overrides, out_dir);
      if (seed) cfg.seeds = {*seed};
      const auto table = epi::sweep(cfg, axis, values);
      std::cout << table.dump(2) << '\n';
    } else if (analyze_cmd->parsed()) {
      const auto report = epi::analyze_snapshots(snapshot_dir);
      std::cout << report.to_json().dump(2) << '\n';
    } else if (diag_cmd->parsed()) {
      auto cfg = load_config(config_path, overrides, out_dir);
      const auto s = seed ? *seed : cfg.seeds.front();
      const auto report = epi::diagnose(cfg, s);
      std::cout << report.to_json().dump(2) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
