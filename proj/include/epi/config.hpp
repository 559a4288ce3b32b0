#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "epi/model.hpp"
#include "epi/optim.hpp"
#include "epi/tasks.hpp"

namespace epi {

enum class Method {
  kFullSft,
  kMultistageRandom,
  kMultistageHeuristic,
  kStatic,
  kEpi,
  kPerLayerBudget,
  kGlobalRaw,
  kRandomMask,
};

const char* to_string(Method m);
Method method_from_string(const std::string& s);

// Whether the method maintains a dynamic mask refreshed every H steps.
bool is_dynamic_mask_method(Method m);

struct RunConfig {
  Method method = Method::kEpi;

  ModelSpec model;
  double init_scale = 0.1;

  // Task suite (dims come from the model spec).
  std::size_t task_count = 4;
  TaskKind task_kind = TaskKind::kLinearRegression;
  std::vector<std::pair<int, int>> conflict_pairs{{0, 1}};
  double task_noise_std = 0.05;
  double orth_noise = 0.1;

  // Stream.
  Ordering ordering = Ordering::kPaperSequence;
  std::size_t steps_per_stage = 2000;
  std::size_t batch_size = 64;
  std::size_t eval_size = 512;

  // Isolation.
  double p = 0.01;
  double beta = 0.99;
  std::uint64_t refresh_interval = 500;
  bool layer_norm = true;
  bool reset_sensitivity_on_stage = false;

  // Optimizer and schedule.
  AdamWConfig optimizer;
  double warmup_fraction = 0.03;
  ScheduleShape schedule = ScheduleShape::kCosine;

  // Static-isolation probe.
  std::size_t probe_steps = 200;

  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string output_dir = "out";
  std::uint64_t snapshot_cadence = 500;

  // Strict parse: unknown keys are an error. Throws std::runtime_error with
  // the offending key path.
  static RunConfig from_json(const nlohmann::json& doc);

  // Load from file and apply `key.path=value` overrides before parsing.
  static RunConfig load(const std::string& path,
                        const std::vector<std::string>& overrides = {});

  nlohmann::json to_json() const;

  void validate() const;
};

// Applies a dotted-path override (e.g. "epi.p=0.02") to a JSON document.
// Values parse as JSON literals, falling back to strings.
void apply_override(nlohmann::json& doc, const std::string& key_eq_value);

}  // namespace epi
