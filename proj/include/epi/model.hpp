#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "epi/param_store.hpp"

namespace epi {

enum class Arch { kMlp, kToyAttention };
enum class Activation { kTanh, kRelu };
enum class LossKind { kSoftmaxCrossEntropy, kMeanSquaredError };

// Small differentiable model. For kToyAttention the input vector is read as
// seq_len tokens of dimension input_dim/seq_len, run through one
// single-head self-attention layer, mean-pooled, then through the MLP head.
struct ModelSpec {
  Arch arch = Arch::kMlp;
  std::vector<std::size_t> hidden;
  Activation activation = Activation::kTanh;
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  LossKind loss = LossKind::kMeanSquaredError;
  std::size_t seq_len = 4;  // toy-attention only

  // Parameter tensors in layout order, matching a ParamStore partition.
  std::vector<std::pair<std::string, std::size_t>> layout() const;
  std::size_t param_count() const;
};

struct Batch {
  std::size_t rows = 0;
  std::vector<double> inputs;   // rows x input_dim, row-major
  std::vector<double> targets;  // rows x output_dim (regression)
  std::vector<int> labels;      // rows (classification)
  int task_id = -1;
};

// Opaque forward state consumed by backward(). Valid only for the
// (spec, store, batch) triple it was produced from.
struct ForwardCache {
  bool valid = false;
  std::size_t rows = 0;
  std::vector<double> inputs;
  std::vector<double> targets;
  std::vector<int> labels;
  // Post-activation values per MLP layer, a[0] = head input.
  std::vector<std::vector<double>> act;
  std::vector<double> logits;  // rows x output_dim
  // Attention intermediates (empty for plain MLP), each rows x seq x embed
  // except attn which is rows x seq x seq.
  std::vector<double> q, k, v, attn;
};

// Mean-reduced loss over the batch. Throws on shape mismatch or non-finite
// activations.
double forward_loss(const ModelSpec& spec, const ParamStore& store,
                    const Batch& batch, ForwardCache& cache);

// Gradient of forward_loss wrt all parameters, aligned with the store
// layout. Invalidates the cache.
std::vector<double> backward(const ModelSpec& spec, const ParamStore& store,
                             ForwardCache& cache);

// Classification: accuracy in [0,1]. Regression: 1/(1+MSE) in (0,1].
double evaluate(const ModelSpec& spec, const ParamStore& store,
                const Batch& eval_set);

}  // namespace epi
