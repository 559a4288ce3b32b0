#pragma once

#include <cstdint>
#include <vector>

#include "epi/bitmask.hpp"
#include "epi/model.hpp"
#include "epi/optim.hpp"
#include "epi/param_store.hpp"
#include "epi/rng.hpp"
#include "epi/sensitivity.hpp"
#include "epi/tasks.hpp"

namespace epi {

// Coordinates newly protected / newly released at a mask refresh.
struct MaskTransition {
  std::vector<std::size_t> locked;
  std::vector<std::size_t> freed;
  std::uint64_t step = 0;
};

// Top-k selection over the given scores, k = round(p * d), ties broken by
// lower index. Strategy selects the budget rule:
//   epi / static / global-raw: global top-k (caller passes normalized scores
//     for epi/static, raw sensitivities for global-raw)
//   per-layer-budget: top round(p * |group|) within each group
//   random: k uniform coordinates from rng (must be non-null)
// Throws if k rounds to zero.
IsolationMask generate_mask(const std::vector<double>& scores, double p,
                            MaskStrategy strategy,
                            const std::vector<Group>& partition,
                            Rng* rng = nullptr, std::uint64_t step = 0);

// Refresh exactly when step is a positive multiple of the interval.
bool should_refresh(std::uint64_t step, std::uint64_t interval);

MaskTransition diff_masks(const IsolationMask& prev, const IsolationMask& next);

struct ProbeConfig {
  std::size_t steps_per_task = 200;  // one probe "epoch" per task
  std::size_t batch_size = 64;
  double beta = 0.99;
  AdamWConfig optimizer;
};

// Union of the given index sets truncated to at most k coordinates by
// highest score, ties broken by lower index.
PackedBits truncate_union(const std::vector<PackedBits>& sets,
                          const std::vector<double>& scores, std::size_t k);

// Static-isolation probe: fine-tune a copy of the shared init on each task,
// accumulate per-task sensitivity, take each task's top-p% set, and truncate
// the union back to k coordinates by highest max-over-tasks normalized score.
IsolationMask probe_static_mask(const ModelSpec& spec,
                                const ParamStore& init_store,
                                const std::vector<TaskSpec>& tasks,
                                const ProbeConfig& probe, double p, Rng& rng);

}  // namespace epi
