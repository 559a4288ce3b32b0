#include "epi/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace epi {
namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace

double teacher_cosine(const TaskSpec& a, const TaskSpec& b) {
  return dot(a.teacher, b.teacher) / (norm(a.teacher) * norm(b.teacher));
}

std::vector<TaskSpec> make_conflict_suite(
    Rng& rng, std::size_t n_tasks, std::size_t input_dim,
    std::size_t output_dim, const std::vector<std::pair<int, int>>& pairs,
    TaskKind kind, double noise_std, double orth_noise) {
  if (n_tasks < 2) throw std::invalid_argument("need at least two tasks");
  for (const auto& [i, j] : pairs) {
    if (i == j) throw std::invalid_argument("conflict pair with i == j");
    if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= n_tasks ||
        static_cast<std::size_t>(j) >= n_tasks) {
      throw std::invalid_argument("conflict pair references unknown task");
    }
  }
  // Cap the orthogonal component so cosine stays <= -0.9.
  const double eta = std::min(orth_noise, 0.48);

  std::vector<TaskSpec> tasks(n_tasks);
  const std::size_t n = input_dim * output_dim;
  // Unit average output variance so targets sit in a range a
  // bounded-activation model can actually fit.
  const double scale = 1.0 / std::sqrt(static_cast<double>(input_dim));
  // Geometrically decaying row scales, permuted per task: importance is
  // heavy-tailed (as in real data) and each task emphasizes different
  // outputs, which is what makes isolation masks task-dependent.
  constexpr double kRowDecay = 0.7;
  std::vector<double> row_scale(output_dim);
  double ss = 0.0;
  for (std::size_t o = 0; o < output_dim; ++o) {
    row_scale[o] = std::pow(kRowDecay, static_cast<double>(o));
    ss += row_scale[o] * row_scale[o];
  }
  const double row_norm =
      std::sqrt(static_cast<double>(output_dim) / ss);
  for (auto& r : row_scale) r *= row_norm;

  // Fixed heavy-tailed input-feature scales shared by every task, mimicking
  // frequency effects in real data. Normalized to unit mean square so the
  // overall target variance is unchanged.
  constexpr double kFeatureRatio = 100.0;  // largest / smallest scale
  std::vector<double> input_scales(input_dim, 1.0);
  if (input_dim > 1) {
    const double r =
        std::pow(kFeatureRatio, -1.0 / static_cast<double>(input_dim - 1));
    double fs = 0.0;
    for (std::size_t i = 0; i < input_dim; ++i) {
      input_scales[i] = std::pow(r, static_cast<double>(i));
      fs += input_scales[i] * input_scales[i];
    }
    const double fnorm = std::sqrt(static_cast<double>(input_dim) / fs);
    for (auto& s : input_scales) s *= fnorm;
  }

  for (std::size_t t = 0; t < n_tasks; ++t) {
    tasks[t].id = static_cast<int>(t);
    tasks[t].kind = kind;
    tasks[t].input_dim = input_dim;
    tasks[t].output_dim = output_dim;
    tasks[t].noise_std = noise_std;
    tasks[t].input_scales = input_scales;
    tasks[t].teacher.resize(n);
    std::vector<double> perm = row_scale;
    for (std::size_t i = perm.size(); i > 1; --i) {
      std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
    }
    for (std::size_t o = 0; o < output_dim; ++o) {
      for (std::size_t i = 0; i < input_dim; ++i) {
        tasks[t].teacher[o * input_dim + i] = perm[o] * scale * rng.normal();
      }
    }
  }
  int group = 0;
  for (const auto& [i, j] : pairs) {
    const auto& base = tasks[i].teacher;
    std::vector<double> noise(n);
    for (auto& w : noise) w = rng.normal();
    // Strip the component along the base teacher, then scale relative to it.
    const double proj = dot(noise, base) / dot(base, base);
    for (std::size_t c = 0; c < n; ++c) noise[c] -= proj * base[c];
    const double nn = norm(noise);
    const double target = eta * norm(base);
    for (std::size_t c = 0; c < n; ++c) {
      tasks[j].teacher[c] =
          -base[c] + (nn > 0.0 ? noise[c] * target / nn : 0.0);
    }
    tasks[i].conflict_group = group;
    tasks[j].conflict_group = group;
    ++group;
  }
  return tasks;
}

Batch sample_batch(const TaskSpec& task, Rng& rng, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  Batch batch;
  batch.rows = batch_size;
  batch.task_id = task.id;
  batch.inputs.resize(batch_size * task.input_dim);
  if (task.input_scales.empty()) {
    for (auto& x : batch.inputs) x = rng.normal();
  } else {
    for (std::size_t c = 0; c < batch.inputs.size(); ++c) {
      batch.inputs[c] = task.input_scales[c % task.input_dim] * rng.normal();
    }
  }

  const std::size_t in = task.input_dim, out = task.output_dim;
  std::vector<double> y(out);
  for (std::size_t r = 0; r < batch_size; ++r) {
    const double* x = batch.inputs.data() + r * in;
    for (std::size_t o = 0; o < out; ++o) {
      double s = 0.0;
      for (std::size_t i = 0; i < in; ++i) s += task.teacher[o * in + i] * x[i];
      y[o] = s;
    }
    if (task.kind == TaskKind::kLinearRegression) {
      for (std::size_t o = 0; o < out; ++o) {
        batch.targets.push_back(y[o] + task.noise_std * rng.normal());
      }
    } else {
      batch.labels.push_back(static_cast<int>(
          std::max_element(y.begin(), y.end()) - y.begin()));
    }
  }
  return batch;
}

const char* to_string(Ordering o) {
  switch (o) {
    case Ordering::kPaperSequence: return "paper-sequence";
    case Ordering::kRandom: return "random";
    case Ordering::kHeuristic: return "heuristic";
    case Ordering::kFullMix: return "full-mix";
  }
  return "unknown";
}

Ordering ordering_from_string(const std::string& s) {
  if (s == "paper-sequence") return Ordering::kPaperSequence;
  if (s == "random") return Ordering::kRandom;
  if (s == "heuristic") return Ordering::kHeuristic;
  if (s == "full-mix") return Ordering::kFullMix;
  throw std::invalid_argument("unknown ordering: " + s);
}

std::size_t TaskStream::total_steps() const {
  std::size_t n = 0;
  for (const auto& s : stages) n += s.step_budget;
  return n;
}

TaskStream build_stream(const std::vector<TaskSpec>& tasks, Ordering ordering,
                        Rng& rng, std::size_t budget_per_stage,
                        std::size_t eval_size) {
  if (tasks.empty()) throw std::invalid_argument("empty task list");
  if (budget_per_stage == 0) {
    throw std::invalid_argument("step budget must be >= 1");
  }
  TaskStream stream;
  stream.ordering = ordering;

  std::vector<int> ids;
  for (const auto& t : tasks) ids.push_back(t.id);

  switch (ordering) {
    case Ordering::kPaperSequence:
      for (int id : ids) {
        stream.stages.push_back(
            {static_cast<int>(stream.stages.size()), {id}, budget_per_stage});
      }
      break;
    case Ordering::kRandom: {
      auto shuffled = ids;
      for (std::size_t i = shuffled.size(); i > 1; --i) {
        std::swap(shuffled[i - 1], shuffled[rng.uniform_index(i)]);
      }
      for (int id : shuffled) {
        stream.stages.push_back(
            {static_cast<int>(stream.stages.size()), {id}, budget_per_stage});
      }
      break;
    }
    case Ordering::kHeuristic: {
      // Conflict-group members share a stage; ungrouped tasks get their own.
      std::vector<bool> placed(tasks.size(), false);
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (placed[i]) continue;
        Stage stage{static_cast<int>(stream.stages.size()), {tasks[i].id},
                    budget_per_stage};
        placed[i] = true;
        if (tasks[i].conflict_group) {
          for (std::size_t j = i + 1; j < tasks.size(); ++j) {
            if (!placed[j] &&
                tasks[j].conflict_group == tasks[i].conflict_group) {
              stage.task_ids.push_back(tasks[j].id);
              placed[j] = true;
            }
          }
        }
        stream.stages.push_back(std::move(stage));
      }
      break;
    }
    case Ordering::kFullMix:
      // One stage, total budget matched to the sequential orderings.
      stream.stages.push_back({0, ids, budget_per_stage * tasks.size()});
      break;
  }

  // Eval sets draw from per-task substreams keyed by id only, so they are
  // identical across orderings and never advance during training.
  for (const auto& t : tasks) {
    Rng eval_rng = rng.substream("eval-task-" + std::to_string(t.id));
    stream.eval_sets[t.id] = sample_batch(t, eval_rng, eval_size);
  }
  return stream;
}

}  // namespace epi
