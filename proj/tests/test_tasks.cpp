#include <algorithm>
#include <cmath>
#include <set>

#include <doctest.h>

#include "epi/metrics.hpp"
#include "epi/tasks.hpp"

using namespace epi;

TEST_CASE("antiparallel pair with zero orthogonal noise has cosine -1") {
  Rng rng(1);
  auto tasks = make_conflict_suite(rng, 2, 16, 4, {{0, 1}},
                                   TaskKind::kLinearRegression, 0.0, 0.0);
  CHECK(teacher_cosine(tasks[0], tasks[1]) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(tasks[0].conflict_group.has_value());
  CHECK(tasks[0].conflict_group == tasks[1].conflict_group);
}

TEST_CASE("default orthogonal noise keeps the pair strongly conflicting") {
  Rng rng(2);
  auto tasks = make_conflict_suite(rng, 4, 64, 8, {{0, 1}});
  CHECK(teacher_cosine(tasks[0], tasks[1]) <= -0.9);
  double dot = 0.0;
  for (std::size_t i = 0; i < tasks[0].teacher.size(); ++i) {
    dot += tasks[0].teacher[i] * tasks[1].teacher[i];
  }
  CHECK(dot < 0.0);
}

TEST_CASE("degenerate pairs are rejected") {
  Rng rng(3);
  CHECK_THROWS(make_conflict_suite(rng, 2, 8, 2, {{0, 0}}));
  CHECK_THROWS(make_conflict_suite(rng, 1, 8, 2, {}));
  CHECK_THROWS(make_conflict_suite(rng, 2, 8, 2, {{0, 5}}));
}

TEST_CASE("independent teachers concentrate near orthogonal") {
  // At input dim 64 random unit teachers have |cosine| <= 0.5 with
  // overwhelming probability; check the empirical concentration bound.
  Rng rng(4);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto tasks = make_conflict_suite(rng, 4, 64, 8, {{0, 1}});
    if (std::fabs(teacher_cosine(tasks[0], tasks[2])) > 0.5) ++violations;
    if (std::fabs(teacher_cosine(tasks[0], tasks[3])) > 0.5) ++violations;
  }
  CHECK(violations <= 10);  // <= 1% of 2000 comparisons, with slack
}

TEST_CASE("regression batch with zero noise matches the teacher exactly") {
  Rng rng(5);
  auto tasks = make_conflict_suite(rng, 2, 6, 3, {});
  Rng data(6);
  auto batch = sample_batch(tasks[0], data, 32);
  CHECK(batch.rows == 32);
  CHECK(batch.task_id == tasks[0].id);
  for (std::size_t r = 0; r < batch.rows; ++r) {
    for (std::size_t o = 0; o < 3; ++o) {
      double y = 0.0;
      for (std::size_t i = 0; i < 6; ++i) {
        y += tasks[0].teacher[o * 6 + i] * batch.inputs[r * 6 + i];
      }
      CHECK(batch.targets[r * 3 + o] == y);
    }
  }
}

TEST_CASE("classification labels cover every class") {
  Rng rng(7);
  auto tasks = make_conflict_suite(rng, 2, 8, 4, {},
                                   TaskKind::kRotatedClassification);
  Rng data(8);
  std::set<int> seen;
  for (int draw = 0; draw < 100; ++draw) {
    auto batch = sample_batch(tasks[0], data, 100);
    for (int label : batch.labels) {
      CHECK(label >= 0);
      CHECK(label < 4);
      seen.insert(label);
    }
  }
  CHECK(seen.size() == 4);
}

TEST_CASE("same seed reproduces the batch") {
  Rng rng(9);
  auto tasks = make_conflict_suite(rng, 2, 10, 4, {{0, 1}},
                                   TaskKind::kLinearRegression, 0.05);
  Rng a(10), b(10);
  auto ba = sample_batch(tasks[0], a, 16);
  auto bb = sample_batch(tasks[0], b, 16);
  CHECK(ba.inputs == bb.inputs);
  CHECK(ba.targets == bb.targets);
  CHECK_THROWS(sample_batch(tasks[0], a, 0));
}

TEST_CASE("paper-sequence builds one stage per task in id order") {
  Rng rng(11);
  auto tasks = make_conflict_suite(rng, 4, 8, 2, {{0, 1}});
  auto stream = build_stream(tasks, Ordering::kPaperSequence, rng, 100);
  REQUIRE(stream.stages.size() == 4);
  for (int s = 0; s < 4; ++s) {
    CHECK(stream.stages[s].task_ids == std::vector<int>{s});
    CHECK(stream.stages[s].step_budget == 100);
  }
  CHECK(stream.total_steps() == 400);
  CHECK(stream.eval_sets.size() == 4);
  CHECK_THROWS(build_stream({}, Ordering::kPaperSequence, rng, 100));
}

TEST_CASE("heuristic ordering co-locates conflict groups") {
  Rng rng(12);
  auto tasks = make_conflict_suite(rng, 4, 8, 2, {{0, 1}});
  auto stream = build_stream(tasks, Ordering::kHeuristic, rng, 100);
  bool together = false;
  std::set<int> covered;
  for (const auto& stage : stream.stages) {
    covered.insert(stage.task_ids.begin(), stage.task_ids.end());
    const bool has0 = std::count(stage.task_ids.begin(), stage.task_ids.end(), 0);
    const bool has1 = std::count(stage.task_ids.begin(), stage.task_ids.end(), 1);
    if (has0 && has1) together = true;
    CHECK(has0 == has1);
  }
  CHECK(together);
  CHECK(covered.size() == 4);
}

TEST_CASE("random ordering covers every task") {
  Rng rng(13);
  auto tasks = make_conflict_suite(rng, 6, 8, 2, {{0, 1}});
  auto stream = build_stream(tasks, Ordering::kRandom, rng, 50);
  std::set<int> covered;
  for (const auto& stage : stream.stages) {
    covered.insert(stage.task_ids.begin(), stage.task_ids.end());
  }
  CHECK(covered.size() == 6);
  CHECK(stream.total_steps() == 6 * 50);
}

TEST_CASE("full-mix is one stage with uniform task draws") {
  Rng rng(14);
  auto tasks = make_conflict_suite(rng, 4, 8, 2, {{0, 1}});
  auto stream = build_stream(tasks, Ordering::kFullMix, rng, 100);
  REQUIRE(stream.stages.size() == 1);
  CHECK(stream.stages[0].task_ids.size() == 4);
  CHECK(stream.stages[0].step_budget == 400);  // budget scales with task count

  // The training loop picks uniformly from the stage's task list; the
  // multinomial bound says 4e4 draws land within 0.25 +- 0.02 per task.
  Rng pick(15);
  std::vector<int> counts(4, 0);
  const int draws = 40000;
  for (int i = 0; i < draws; ++i) {
    ++counts[stream.stages[0].task_ids[pick.uniform_index(4)]];
  }
  for (int c : counts) {
    const double freq = static_cast<double>(c) / draws;
    CHECK(freq > 0.23);
    CHECK(freq < 0.27);
  }
}

TEST_CASE("eval sets do not depend on stream ordering") {
  Rng rng(16);
  auto tasks = make_conflict_suite(rng, 4, 8, 2, {{0, 1}});
  Rng r1(17), r2(17);
  auto a = build_stream(tasks, Ordering::kPaperSequence, r1, 100);
  auto b = build_stream(tasks, Ordering::kRandom, r2, 100);
  for (const auto& [id, batch] : a.eval_sets) {
    CHECK(batch.inputs == b.eval_sets.at(id).inputs);
    CHECK(batch.targets == b.eval_sets.at(id).targets);
  }

  // Advancing a training substream leaves eval draws unchanged.
  Rng seed(18);
  Rng eval_before = seed.substream("eval-task-0");
  Rng train = seed.substream("data");
  for (int i = 0; i < 1000; ++i) train.uniform();
  Rng eval_after = seed.substream("eval-task-0");
  CHECK(eval_before.uniform() == eval_after.uniform());
}

TEST_CASE("conflict certificate: antiparallel gradients collide at init") {
  Rng rng(19);
  auto tasks = make_conflict_suite(rng, 2, 16, 4, {{0, 1}});
  ModelSpec spec{Arch::kMlp, {12}, Activation::kTanh, 16, 4,
                 LossKind::kMeanSquaredError};
  auto store = ParamStore::build(spec.layout());
  store.gaussian_init(rng, 0.1);

  auto grad_for = [&](const TaskSpec& task) {
    Rng data = rng.substream("cert-task-" + std::to_string(task.id));
    auto batch = sample_batch(task, data, 512);
    ForwardCache cache;
    forward_loss(spec, store, batch, cache);
    return backward(spec, store, cache);
  };
  const auto g0 = grad_for(tasks[0]);
  const auto g1 = grad_for(tasks[1]);
  CHECK(cosine_interference(g0, g1) < 0.0);
  CHECK(tgc(g0, g1) > 0.0);
}
