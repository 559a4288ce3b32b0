#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "epi/model.hpp"
#include "epi/rng.hpp"

namespace epi {

enum class TaskKind { kLinearRegression, kRotatedClassification };

// Synthetic teacher task. For a designated conflicting pair the teachers are
// near-antiparallel, so their gradients collide at a shared initialization.
struct TaskSpec {
  int id = 0;
  TaskKind kind = TaskKind::kLinearRegression;
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::vector<double> teacher;  // output_dim x input_dim, row-major
  // Per-feature input standard deviations, shared by every task in a suite
  // (a property of the data domain, like token-frequency effects). Empty
  // means unit scales.
  std::vector<double> input_scales;
  double noise_std = 0.0;
  std::optional<int> conflict_group;
};

// Cosine between the flattened teachers of two tasks.
double teacher_cosine(const TaskSpec& a, const TaskSpec& b);

// n independent teacher tasks; for each requested pair (i, j), teacher_j is
// -teacher_i plus orthogonal noise scaled so the cosine stays <= -0.9.
std::vector<TaskSpec> make_conflict_suite(
    Rng& rng, std::size_t n_tasks, std::size_t input_dim,
    std::size_t output_dim, const std::vector<std::pair<int, int>>& pairs,
    TaskKind kind = TaskKind::kLinearRegression, double noise_std = 0.0,
    double orth_noise = 0.1);

// x_i ~ N(0, input_scales[i]^2) (standard normal when scales are empty);
// regression y = teacher x + noise, classification y = argmax(teacher x).
Batch sample_batch(const TaskSpec& task, Rng& rng, std::size_t batch_size);

enum class Ordering { kPaperSequence, kRandom, kHeuristic, kFullMix };

const char* to_string(Ordering o);
Ordering ordering_from_string(const std::string& s);

struct Stage {
  int id = 0;
  std::vector<int> task_ids;
  std::size_t step_budget = 0;
};

struct TaskStream {
  std::vector<Stage> stages;
  Ordering ordering = Ordering::kPaperSequence;
  std::map<int, Batch> eval_sets;  // held-out, drawn from their own substream

  std::size_t total_steps() const;
};

// paper-sequence: one task per stage in id order. random: shuffled stage
// assignment. heuristic: conflict-group members share a stage. full-mix: a
// single stage over all tasks.
TaskStream build_stream(const std::vector<TaskSpec>& tasks, Ordering ordering,
                        Rng& rng, std::size_t budget_per_stage,
                        std::size_t eval_size = 512);

}  // namespace epi
