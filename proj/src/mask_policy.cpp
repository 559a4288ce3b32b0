#include "epi/mask_policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace epi {
namespace {

std::size_t round_count(double p, std::size_t n) {
  return static_cast<std::size_t>(std::llround(p * static_cast<double>(n)));
}

// Indices of the k largest scores in [offset, offset+length); ties broken by
// lower index.
void select_top_k(const std::vector<double>& scores, std::size_t offset,
                  std::size_t length, std::size_t k, PackedBits& bits) {
  std::vector<std::size_t> order(length);
  std::iota(order.begin(), order.end(), offset);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                    order.end(), [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  for (std::size_t i = 0; i < k; ++i) bits.set(order[i]);
}

}  // namespace

IsolationMask generate_mask(const std::vector<double>& scores, double p,
                            MaskStrategy strategy,
                            const std::vector<Group>& partition, Rng* rng,
                            std::uint64_t step) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("isolation ratio p must be in (0, 1)");
  }
  const std::size_t d = scores.size();
  const std::size_t k = round_count(p, d);
  if (k == 0) {
    throw std::invalid_argument("p too small: isolation budget rounds to zero");
  }

  IsolationMask mask;
  mask.bits = PackedBits(d);
  mask.generated_at_step = step;
  mask.ratio = p;
  mask.strategy = strategy;

  switch (strategy) {
    case MaskStrategy::kEpi:
    case MaskStrategy::kStatic:
    case MaskStrategy::kGlobalRaw:
      select_top_k(scores, 0, d, k, mask.bits);
      break;
    case MaskStrategy::kPerLayerBudget:
      for (const auto& g : partition) {
        const std::size_t kl = round_count(p, g.length);
        if (kl > 0) select_top_k(scores, g.offset, g.length, kl, mask.bits);
      }
      break;
    case MaskStrategy::kRandom: {
      if (rng == nullptr) {
        throw std::invalid_argument("random strategy needs an rng");
      }
      // Floyd's algorithm for k distinct indices.
      for (std::size_t j = d - k; j < d; ++j) {
        const std::size_t t = rng->uniform_index(j + 1);
        if (mask.bits.test(t)) {
          mask.bits.set(j);
        } else {
          mask.bits.set(t);
        }
      }
      break;
    }
  }
  return mask;
}

bool should_refresh(std::uint64_t step, std::uint64_t interval) {
  if (interval == 0) throw std::invalid_argument("refresh interval must be >= 1");
  return step > 0 && step % interval == 0;
}

MaskTransition diff_masks(const IsolationMask& prev,
                          const IsolationMask& next) {
  if (prev.bits.size() != next.bits.size()) {
    throw std::invalid_argument("mask length mismatch");
  }
  MaskTransition t;
  t.step = next.generated_at_step;
  for (std::size_t i = 0; i < next.bits.size(); ++i) {
    const bool was = prev.bits.test(i), now = next.bits.test(i);
    if (now && !was) t.locked.push_back(i);
    if (was && !now) t.freed.push_back(i);
  }
  return t;
}

PackedBits truncate_union(const std::vector<PackedBits>& sets,
                          const std::vector<double>& scores, std::size_t k) {
  if (sets.empty()) throw std::invalid_argument("no sets to merge");
  const std::size_t d = sets.front().size();
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < d; ++i) {
    for (const auto& s : sets) {
      if (s.size() != d) throw std::invalid_argument("set length mismatch");
      if (s.test(i)) {
        pool.push_back(i);
        break;
      }
    }
  }
  std::sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  PackedBits out(d);
  for (std::size_t i = 0; i < std::min(k, pool.size()); ++i) out.set(pool[i]);
  return out;
}

IsolationMask probe_static_mask(const ModelSpec& spec,
                                const ParamStore& init_store,
                                const std::vector<TaskSpec>& tasks,
                                const ProbeConfig& probe, double p, Rng& rng) {
  if (tasks.empty()) throw std::invalid_argument("empty task list");
  const std::size_t d = init_store.dim();
  const std::size_t k = round_count(p, d);
  if (k == 0) {
    throw std::invalid_argument("p too small: isolation budget rounds to zero");
  }

  // Max-over-tasks normalized score per coordinate, plus the per-task top
  // sets whose union forms the candidate pool.
  std::vector<double> max_score(d, 0.0);
  std::vector<PackedBits> task_sets;
  for (const auto& task : tasks) {
    ParamStore store = init_store;  // each probe restarts from the shared init
    SensitivityState sens(d, probe.beta);
    AdamW opt(d, probe.optimizer);
    Rng task_rng = rng.substream("probe-task-" + std::to_string(task.id));
    for (std::size_t step = 0; step < probe.steps_per_task; ++step) {
      Batch batch = sample_batch(task, task_rng, probe.batch_size);
      ForwardCache cache;
      forward_loss(spec, store, batch, cache);
      const auto grad = backward(spec, store, cache);
      accumulate(sens, grad);
      const auto delta =
          opt.delta(grad, store.values(), probe.optimizer.base_lr);
      for (std::size_t i = 0; i < d; ++i) store.values()[i] += delta[i];
    }
    const auto normalized = normalize_layerwise(sens.s, init_store.partition());
    const auto task_mask = generate_mask(normalized, p, MaskStrategy::kStatic,
                                         init_store.partition());
    task_sets.push_back(task_mask.bits);
    for (std::size_t i = 0; i < d; ++i) {
      max_score[i] = std::max(max_score[i], normalized[i]);
    }
  }

  IsolationMask mask;
  mask.bits = truncate_union(task_sets, max_score, k);
  mask.ratio = p;
  mask.strategy = MaskStrategy::kStatic;
  return mask;
}

}  // namespace epi
