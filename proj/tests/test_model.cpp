#include <cmath>

#include <doctest.h>

#include "epi/model.hpp"
#include "test_util.hpp"

using namespace epi;
using namespace epi::testutil;

TEST_CASE("mse loss is zero at exact interpolation") {
  ModelSpec spec{Arch::kMlp, {4}, Activation::kTanh, 3, 2,
                 LossKind::kMeanSquaredError};
  auto store = ParamStore::build(spec.layout());
  Batch batch;
  batch.rows = 2;
  batch.inputs = {1, 2, 3, -1, 0, 1};
  batch.targets = {0, 0, 0, 0};
  ForwardCache cache;
  CHECK(forward_loss(spec, store, batch, cache) == 0.0);
  const auto grad = backward(spec, store, cache);
  for (double g : grad) CHECK(g == 0.0);
}

TEST_CASE("uniform logits give ln C cross entropy") {
  ModelSpec spec{Arch::kMlp, {}, Activation::kTanh, 5, 4,
                 LossKind::kSoftmaxCrossEntropy};
  auto store = ParamStore::build(spec.layout());  // zero weights
  Rng rng(11);
  auto batch = random_batch(spec, rng, 8);
  ForwardCache cache;
  CHECK(forward_loss(spec, store, batch, cache) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("mlp forward matches a straight-line re-implementation") {
  ModelSpec spec{Arch::kMlp, {5, 3}, Activation::kTanh, 4, 2,
                 LossKind::kMeanSquaredError};
  auto store = ParamStore::build(spec.layout());
  Rng rng(3);
  store.gaussian_init(rng, 0.5);
  auto batch = random_batch(spec, rng, 3);

  ForwardCache cache;
  const double loss = forward_loss(spec, store, batch, cache);

  // Independent duplicate arithmetic, scalar by scalar.
  const auto& v = store.values();
  const std::size_t dims[] = {4, 5, 3, 2};
  double expected = 0.0;
  for (std::size_t r = 0; r < batch.rows; ++r) {
    std::vector<double> a(batch.inputs.begin() + r * 4,
                          batch.inputs.begin() + (r + 1) * 4);
    std::size_t cursor = 0;
    for (int l = 0; l < 3; ++l) {
      const std::size_t in = dims[l], out = dims[l + 1];
      const std::size_t w_off = cursor;
      const std::size_t b_off = cursor + in * out;
      cursor = b_off + out;
      std::vector<double> z(out);
      for (std::size_t o = 0; o < out; ++o) {
        z[o] = v[b_off + o];
        for (std::size_t i = 0; i < in; ++i) {
          z[o] += v[w_off + o * in + i] * a[i];
        }
        if (l < 2) z[o] = std::tanh(z[o]);
      }
      a = z;
    }
    for (std::size_t o = 0; o < 2; ++o) {
      const double e = a[o] - batch.targets[r * 2 + o];
      expected += e * e;
    }
  }
  expected /= 3.0 * 2.0;
  CHECK(loss == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("analytic gradients match finite differences") {
  Rng rng(21);
  for (auto arch : {Arch::kMlp, Arch::kToyAttention}) {
    for (auto act : {Activation::kTanh, Activation::kRelu}) {
      for (auto loss :
           {LossKind::kMeanSquaredError, LossKind::kSoftmaxCrossEntropy}) {
        ModelSpec spec{arch, {6}, act, 12, 3, loss, 3};
        auto store = ParamStore::build(spec.layout());
        store.gaussian_init(rng, 0.4);
        auto batch = random_batch(spec, rng, 4);
        CAPTURE(static_cast<int>(arch));
        CAPTURE(static_cast<int>(act));
        CAPTURE(static_cast<int>(loss));
        CHECK(gradient_check(spec, store, batch) < 1e-5);
      }
    }
  }
}

TEST_CASE("duplicating rows leaves the mean gradient unchanged") {
  ModelSpec spec{Arch::kMlp, {6}, Activation::kTanh, 5, 3,
                 LossKind::kMeanSquaredError};
  auto store = ParamStore::build(spec.layout());
  Rng rng(8);
  store.gaussian_init(rng, 0.5);
  auto batch = random_batch(spec, rng, 4);

  Batch doubled = batch;
  doubled.rows = 8;
  doubled.inputs.insert(doubled.inputs.end(), batch.inputs.begin(),
                        batch.inputs.end());
  doubled.targets.insert(doubled.targets.end(), batch.targets.begin(),
                         batch.targets.end());

  ForwardCache c1, c2;
  forward_loss(spec, store, batch, c1);
  forward_loss(spec, store, doubled, c2);
  const auto g1 = backward(spec, store, c1);
  const auto g2 = backward(spec, store, c2);
  for (std::size_t j = 0; j < g1.size(); ++j) {
    CHECK(g1[j] == doctest::Approx(g2[j]).epsilon(1e-12));
  }
}

TEST_CASE("forward is deterministic") {
  ModelSpec spec{Arch::kToyAttention, {8}, Activation::kTanh, 12, 4,
                 LossKind::kSoftmaxCrossEntropy, 3};
  auto store = ParamStore::build(spec.layout());
  Rng rng(6);
  store.gaussian_init(rng, 0.3);
  auto batch = random_batch(spec, rng, 5);
  ForwardCache c1, c2;
  CHECK(forward_loss(spec, store, batch, c1) ==
        forward_loss(spec, store, batch, c2));
}

TEST_CASE("stale cache is rejected") {
  ModelSpec spec{Arch::kMlp, {}, Activation::kTanh, 3, 2,
                 LossKind::kMeanSquaredError};
  auto store = ParamStore::build(spec.layout());
  Rng rng(2);
  auto batch = random_batch(spec, rng, 2);
  ForwardCache cache;
  forward_loss(spec, store, batch, cache);
  backward(spec, store, cache);
  CHECK_THROWS(backward(spec, store, cache));  // consumed
}

TEST_CASE("evaluate classification accuracy") {
  // A linear model whose weights equal the labeling teacher is perfect.
  ModelSpec spec{Arch::kMlp, {}, Activation::kTanh, 6, 3,
                 LossKind::kSoftmaxCrossEntropy};
  auto store = ParamStore::build(spec.layout());
  Rng rng(31);
  auto& v = store.values();
  const auto& w = store.group_view("w0");
  for (std::size_t i = 0; i < w.length; ++i) v[w.offset + i] = rng.normal();

  Batch eval;
  eval.rows = 200;
  eval.inputs.resize(eval.rows * 6);
  for (auto& x : eval.inputs) x = rng.normal();
  for (std::size_t r = 0; r < eval.rows; ++r) {
    double best = -1e300;
    int arg = 0;
    for (int o = 0; o < 3; ++o) {
      double z = 0.0;
      for (int i = 0; i < 6; ++i) {
        z += v[w.offset + o * 6 + i] * eval.inputs[r * 6 + i];
      }
      if (z > best) {
        best = z;
        arg = o;
      }
    }
    eval.labels.push_back(arg);
  }
  CHECK(evaluate(spec, store, eval) == 1.0);

  // Random labels on a 2-class problem sit near chance.
  ModelSpec two{Arch::kMlp, {}, Activation::kTanh, 6, 2,
                LossKind::kSoftmaxCrossEntropy};
  auto store2 = ParamStore::build(two.layout());
  store2.gaussian_init(rng, 0.5);
  Batch noisy;
  noisy.rows = 5000;
  noisy.inputs.resize(noisy.rows * 6);
  for (auto& x : noisy.inputs) x = rng.normal();
  for (std::size_t r = 0; r < noisy.rows; ++r) {
    noisy.labels.push_back(static_cast<int>(rng.uniform_index(2)));
  }
  const double acc = evaluate(two, store2, noisy);
  CHECK(acc > 0.45);
  CHECK(acc < 0.55);
}

TEST_CASE("evaluate regression score") {
  ModelSpec spec{Arch::kMlp, {}, Activation::kTanh, 3, 2,
                 LossKind::kMeanSquaredError};
  auto store = ParamStore::build(spec.layout());
  Batch eval;
  eval.rows = 4;
  eval.inputs.assign(12, 0.5);
  eval.targets.assign(8, 0.0);  // zero weights produce exactly zero output
  CHECK(evaluate(spec, store, eval) == 1.0);
  CHECK_THROWS(evaluate(spec, store, Batch{}));
}

TEST_CASE("shape mismatches are rejected") {
  ModelSpec spec{Arch::kMlp, {}, Activation::kTanh, 3, 2,
                 LossKind::kMeanSquaredError};
  auto store = ParamStore::build(spec.layout());
  Batch bad;
  bad.rows = 2;
  bad.inputs = {1, 2, 3};  // one row short
  bad.targets = {0, 0, 0, 0};
  ForwardCache cache;
  CHECK_THROWS(forward_loss(spec, store, bad, cache));
}
