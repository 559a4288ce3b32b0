#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "epi/bitmask.hpp"
#include "epi/model.hpp"
#include "epi/param_store.hpp"
#include "epi/rng.hpp"

namespace epi {

struct MetricRecord {
  std::uint64_t step = 0;
  int stage = 0;
  std::optional<int> task_id;
  std::string name;
  double value = 0.0;
};

// Per-task performance bookkeeping for the forgetting ratio: the initial
// performance is recorded exactly once, at the end of the task's own stage.
class PerfLedger {
 public:
  void record_initial(int task_id, double perf);
  void record_latest(int task_id, double perf);
  bool has_initial(int task_id) const;
  double initial(int task_id) const;
  double latest(int task_id) const;

  // (initial - latest) / initial * 100; negative means backward transfer.
  double forgetting_ratio(int task_id) const;

  std::vector<int> task_ids() const;

 private:
  std::map<int, std::pair<double, double>> perf_;  // initial, latest
};

// Cosine of the angle between two gradient vectors; throws on zero vectors.
double cosine_interference(const std::vector<double>& gi,
                           const std::vector<double>& gj);

// max(0, -cosine): positive iff the gradients conflict.
double tgc(const std::vector<double>& gi, const std::vector<double>& gj);

std::size_t hamming(const PackedBits& a, const PackedBits& b);

// |A n B| / |A u B|; throws when both masks are empty.
double jaccard(const PackedBits& a, const PackedBits& b);

// Mean over consecutive mask pairs of the fraction of bits in the given
// ranges that change, in percent.
double flip_rate(const std::vector<PackedBits>& series,
                 const std::vector<Group>& ranges);

// Per-index sigma for the perturbation diagnostic: 1e-3 x RMS of the
// parameter's group values, floored at 1e-6.
std::vector<double> perturbation_sigmas(const ParamStore& store);

// Mean induced loss change on `batch` when coordinate j is perturbed by
// N(0, sigma_j^2), averaged over `trials` draws. The store is restored
// bit-exactly after every trial.
std::vector<double> perturbation_sensitivity(
    const ModelSpec& spec, ParamStore& store, const Batch& batch,
    const std::vector<std::size_t>& indices, const std::vector<double>& sigmas,
    Rng& rng, std::size_t trials);

// Sample Pearson r and Spearman rho (average ranks on ties). Throws when
// fewer than 3 pairs or either side has zero variance.
std::pair<double, double> correlate(const std::vector<double>& xs,
                                    const std::vector<double>& ys);

}  // namespace epi
