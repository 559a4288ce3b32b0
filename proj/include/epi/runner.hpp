#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "epi/config.hpp"
#include "epi/mask_policy.hpp"
#include "epi/metrics.hpp"
#include "epi/model.hpp"
#include "epi/sensitivity.hpp"
#include "epi/tasks.hpp"

namespace epi {

struct RunSummary {
  std::map<int, double> final_perf;          // per task
  std::map<int, double> forgetting;          // per task, percent
  double avg_tgc = 0.0;                      // over configured conflict pairs
  std::vector<double> jaccard_vs_initial;    // at 25/50/75/100% progress
  std::map<std::string, double> flip_rates;  // per layer-quartile bucket, %
  double wall_seconds = 0.0;
  nlohmann::json config_echo;

  double mean_final_perf() const;
  double mean_forgetting() const;
  nlohmann::json to_json() const;
};

// Observation points for diagnostics; called after the update at each listed
// global step.
struct TrainHooks {
  std::vector<std::uint64_t> checkpoint_steps;
  std::function<void(std::uint64_t step, const ParamStore& store,
                     const SensitivityState& sens, const TaskStream& stream)>
      on_checkpoint;
};

// One seeded training run. Writes metrics.csv, summary.json, partition.json
// and mask snapshots under <config.output_dir>/seed-<seed>/.
RunSummary train_run(const RunConfig& config, std::uint64_t seed,
                     const TrainHooks* hooks = nullptr);

struct DriftReport {
  std::vector<std::uint64_t> steps;
  std::vector<std::size_t> popcounts;
  std::vector<double> jaccard_vs_initial;
  std::vector<std::size_t> consecutive_hamming;
  std::vector<std::size_t> locked_counts, freed_counts;
  std::map<std::string, double> flip_rates;
  nlohmann::json to_json() const;
};

// Reads every *.epim snapshot under `dir` (or dir/snapshots) and reports the
// mask drift series. Throws on corrupt snapshots or fewer than two files.
DriftReport analyze_snapshots(const std::string& dir);

struct DiagnoseRow {
  std::string label;  // early / middle / late
  std::uint64_t step = 0;
  double pearson = 0.0;
  double spearman = 0.0;
  double pearson_normalized = 0.0;
  double spearman_normalized = 0.0;
};

struct DiagnoseReport {
  std::vector<DiagnoseRow> rows;
  nlohmann::json to_json() const;
};

// Trains a run, then at {25%, 50%, 100%} checkpoints perturbs a stratified
// parameter sample and correlates the induced loss change on the first
// task's held-out batch with the online sensitivity.
DiagnoseReport diagnose(const RunConfig& config, std::uint64_t seed,
                        std::size_t trials = 100,
                        std::size_t samples_per_group = 64);

// One train_run per (axis value, seed); means over seeds per value. Axis is
// one of "p", "H", "beta". Writes sweep.json under config.output_dir.
nlohmann::json sweep(const RunConfig& config, const std::string& axis,
                     const std::vector<double>& values);

}  // namespace epi
