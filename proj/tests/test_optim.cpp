#include <cmath>

#include <doctest.h>

#include "epi/optim.hpp"
#include "epi/rng.hpp"

using namespace epi;

namespace {

// Scalar re-implementation used as an independent oracle for single steps.
double adamw_scalar_step(double g, double m, double v, std::uint64_t step,
                         double theta, double lr, double beta1, double beta2,
                         double eps, double decay) {
  m = beta1 * m + (1.0 - beta1) * g;
  v = beta2 * v + (1.0 - beta2) * g * g;
  const double m_hat = m / (1.0 - std::pow(beta1, static_cast<double>(step)));
  const double v_hat = v / (1.0 - std::pow(beta2, static_cast<double>(step)));
  return -lr * (m_hat / (std::sqrt(v_hat) + eps) + decay * theta);
}

}  // namespace

TEST_CASE("zero gradient and zero decay give zero delta") {
  AdamW opt(4, {1e-3, 0.9, 0.999, 1e-8, 0.0});
  const auto d = opt.delta(std::vector<double>(4, 0.0),
                           std::vector<double>(4, 1.0), 1e-3);
  for (double x : d) CHECK(x == 0.0);
}

TEST_CASE("single unit-gradient step matches the precomputed value") {
  AdamW opt(3, {1e-3, 0.9, 0.999, 1e-8, 0.0});
  const auto d = opt.delta(std::vector<double>(3, 1.0),
                           std::vector<double>(3, 0.0), 1e-3);
  // Bias-corrected moments are exactly 1 after one unit-gradient step.
  const double expected = -1e-3 / (1.0 + 1e-8);
  for (double x : d) CHECK(x == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("decoupled decay acts alone on zero gradient") {
  AdamW opt(2, {1e-3, 0.9, 0.999, 1e-8, 0.05});
  const std::vector<double> theta = {2.0, -3.0};
  const auto d = opt.delta({0.0, 0.0}, theta, 0.01);
  CHECK(d[0] == doctest::Approx(-0.01 * 0.05 * 2.0).epsilon(1e-14));
  CHECK(d[1] == doctest::Approx(-0.01 * 0.05 * -3.0).epsilon(1e-14));
}

TEST_CASE("delta matches the scalar oracle on random cases") {
  Rng rng(77);
  for (int trial = 0; trial < 5; ++trial) {
    AdamWConfig cfg;
    cfg.beta1 = 0.8 + 0.1 * rng.uniform();
    cfg.beta2 = 0.99 + 0.009 * rng.uniform();
    cfg.weight_decay = rng.uniform() * 0.1;
    AdamW opt(8, cfg);
    std::vector<double> theta(8), g(8);
    for (auto& t : theta) t = rng.normal();
    // Warm up a few steps so moments and bias correction are nontrivial.
    const int steps = 1 + trial;
    std::vector<double> m(8, 0.0), v(8, 0.0);
    for (int s = 0; s < steps; ++s) {
      for (auto& x : g) x = rng.normal();
      const double lr = 1e-3 * (1.0 + rng.uniform());
      const auto d = opt.delta(g, theta, lr);
      for (std::size_t j = 0; j < 8; ++j) {
        const double expected =
            adamw_scalar_step(g[j], m[j], v[j], s + 1, theta[j], lr, cfg.beta1,
                              cfg.beta2, cfg.eps, cfg.weight_decay);
        CHECK(std::fabs(d[j] - expected) < 1e-12);
        m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
        v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      }
    }
  }
}

TEST_CASE("non-finite gradients are rejected") {
  AdamW opt(2, {});
  CHECK_THROWS(opt.delta({1.0, INFINITY}, {0.0, 0.0}, 1e-3));
}

TEST_CASE("schedule ramps then decays to zero") {
  const LrSchedule sched{1e-3, 0.03, 1000, ScheduleShape::kCosine};
  CHECK(sched.at(0) == 0.0);
  CHECK(sched.at(30) == doctest::Approx(1e-3).epsilon(1e-12));  // warm-up end
  CHECK(sched.at(1000) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(sched.at(5000) == 0.0);  // clamped past the end
  for (std::uint64_t t = 0; t <= 1000; t += 10) CHECK(sched.at(t) >= 0.0);

  const LrSchedule flat{5e-4, 0.0, 100, ScheduleShape::kConstant};
  CHECK(flat.at(0) == 5e-4);
  CHECK(flat.at(100) == 5e-4);
}

TEST_CASE("masked update leaves protected coordinates bit-identical") {
  auto store = ParamStore::build({{"w", 3}});
  store.values() = {0.0, 0.0, 0.0};
  PackedBits mask(3);
  mask.set(2);
  apply_masked_update(store, {1.0, 1.0, 1.0}, mask);
  CHECK(store.values() == std::vector<double>{1.0, 1.0, 0.0});

  PackedBits all(3);
  all.set(0);
  all.set(1);
  all.set(2);
  auto before = store.values();
  apply_masked_update(store, {9.0, 9.0, 9.0}, all);
  CHECK(store.values() == before);

  PackedBits none(3);
  apply_masked_update(store, {1.0, 1.0, 1.0}, none);
  CHECK(store.values() == std::vector<double>{2.0, 2.0, 1.0});

  CHECK_THROWS(apply_masked_update(store, {1.0}, none));
}

TEST_CASE("protected coordinates survive weight decay, moments still move") {
  auto store = ParamStore::build({{"w", 4}});
  Rng rng(9);
  store.gaussian_init(rng, 1.0);
  const double protected_value = store.values()[1];

  AdamW opt(4, {1e-3, 0.9, 0.999, 1e-8, 0.01});
  PackedBits mask(4);
  mask.set(1);
  double prev_v = 0.0;
  for (int s = 0; s < 50; ++s) {
    std::vector<double> g = {0.1, 0.5, -0.2, 0.3};
    const auto d = opt.delta(g, store.values(), 1e-3);
    apply_masked_update(store, d, mask);
    CHECK(opt.second_moment()[1] > prev_v);  // moments keep evolving
    prev_v = opt.second_moment()[1];
  }
  CHECK(store.values()[1] == protected_value);
}
