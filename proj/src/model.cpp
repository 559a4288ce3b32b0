#include "epi/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace epi {
namespace {

// Widths of the dense head, input first.
std::vector<std::size_t> head_dims(const ModelSpec& spec) {
  std::vector<std::size_t> dims;
  if (spec.arch == Arch::kMlp) {
    dims.push_back(spec.input_dim);
  } else {
    dims.push_back(spec.input_dim / spec.seq_len);
  }
  dims.insert(dims.end(), spec.hidden.begin(), spec.hidden.end());
  dims.push_back(spec.output_dim);
  return dims;
}

std::size_t embed_dim(const ModelSpec& spec) {
  if (spec.seq_len == 0 || spec.input_dim % spec.seq_len != 0) {
    throw std::invalid_argument("input_dim must be divisible by seq_len");
  }
  return spec.input_dim / spec.seq_len;
}

double activate(Activation act, double z) {
  return act == Activation::kTanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
}

// Derivative expressed through the post-activation value.
double activate_grad(Activation act, double a) {
  return act == Activation::kTanh ? 1.0 - a * a : (a > 0.0 ? 1.0 : 0.0);
}

void check_batch(const ModelSpec& spec, const Batch& batch) {
  if (batch.rows == 0) throw std::invalid_argument("empty batch");
  if (batch.inputs.size() != batch.rows * spec.input_dim) {
    throw std::invalid_argument("batch input shape mismatch");
  }
  if (spec.loss == LossKind::kMeanSquaredError) {
    if (batch.targets.size() != batch.rows * spec.output_dim) {
      throw std::invalid_argument("batch target shape mismatch");
    }
  } else if (batch.labels.size() != batch.rows) {
    throw std::invalid_argument("batch label count mismatch");
  }
  for (double x : batch.inputs) {
    if (!std::isfinite(x)) throw std::invalid_argument("non-finite input");
  }
}

// Pooled attention output per row; fills cache.q/k/v/attn.
void attention_forward(const ModelSpec& spec, const ParamStore& store,
                       const Batch& batch, ForwardCache& cache,
                       std::vector<double>& pooled) {
  const std::size_t T = spec.seq_len;
  const std::size_t D = embed_dim(spec);
  const double* wq = store.values().data() + store.group_view("wq").offset;
  const double* wk = store.values().data() + store.group_view("wk").offset;
  const double* wv = store.values().data() + store.group_view("wv").offset;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(D));

  cache.q.assign(batch.rows * T * D, 0.0);
  cache.k.assign(batch.rows * T * D, 0.0);
  cache.v.assign(batch.rows * T * D, 0.0);
  cache.attn.assign(batch.rows * T * T, 0.0);
  pooled.assign(batch.rows * D, 0.0);

  std::vector<double> scores(T);
  for (std::size_t r = 0; r < batch.rows; ++r) {
    const double* x = batch.inputs.data() + r * T * D;  // T x D tokens
    double* q = cache.q.data() + r * T * D;
    double* k = cache.k.data() + r * T * D;
    double* v = cache.v.data() + r * T * D;
    double* a = cache.attn.data() + r * T * T;
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t j = 0; j < D; ++j) {
        double sq = 0.0, sk = 0.0, sv = 0.0;
        for (std::size_t c = 0; c < D; ++c) {
          const double xc = x[t * D + c];
          sq += xc * wq[c * D + j];
          sk += xc * wk[c * D + j];
          sv += xc * wv[c * D + j];
        }
        q[t * D + j] = sq;
        k[t * D + j] = sk;
        v[t * D + j] = sv;
      }
    }
    for (std::size_t i = 0; i < T; ++i) {
      double maxs = -INFINITY;
      for (std::size_t j = 0; j < T; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < D; ++c) s += q[i * D + c] * k[j * D + c];
        scores[j] = s * inv_sqrt_d;
        maxs = std::max(maxs, scores[j]);
      }
      double denom = 0.0;
      for (std::size_t j = 0; j < T; ++j) {
        a[i * T + j] = std::exp(scores[j] - maxs);
        denom += a[i * T + j];
      }
      for (std::size_t j = 0; j < T; ++j) a[i * T + j] /= denom;
    }
    // H = A V, mean-pooled over rows.
    for (std::size_t j = 0; j < D; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < T; ++i) {
        for (std::size_t t = 0; t < T; ++t) s += a[i * T + t] * v[t * D + j];
      }
      pooled[r * D + j] = s / static_cast<double>(T);
    }
  }
}

// Backprop through attention given d(pooled); accumulates into grad.
void attention_backward(const ModelSpec& spec, const ParamStore& store,
                        const ForwardCache& cache,
                        const std::vector<double>& d_pooled,
                        std::vector<double>& grad) {
  const std::size_t T = spec.seq_len;
  const std::size_t D = embed_dim(spec);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(D));
  const auto& gq = store.group_view("wq");
  const auto& gk = store.group_view("wk");
  const auto& gv = store.group_view("wv");

  std::vector<double> dh(T * D), da(T * T), ds(T * T), dq(T * D), dk(T * D),
      dv(T * D);
  for (std::size_t r = 0; r < cache.rows; ++r) {
    const double* x = cache.inputs.data() + r * T * D;
    const double* q = cache.q.data() + r * T * D;
    const double* k = cache.k.data() + r * T * D;
    const double* v = cache.v.data() + r * T * D;
    const double* a = cache.attn.data() + r * T * T;
    const double* dp = d_pooled.data() + r * D;

    // Mean pool: every attention output row receives dp / T.
    for (std::size_t i = 0; i < T; ++i) {
      for (std::size_t j = 0; j < D; ++j) {
        dh[i * D + j] = dp[j] / static_cast<double>(T);
      }
    }
    // dA = dH V^T, dV = A^T dH
    std::fill(dv.begin(), dv.end(), 0.0);
    for (std::size_t i = 0; i < T; ++i) {
      for (std::size_t t = 0; t < T; ++t) {
        double s = 0.0;
        for (std::size_t j = 0; j < D; ++j) s += dh[i * D + j] * v[t * D + j];
        da[i * T + t] = s;
        for (std::size_t j = 0; j < D; ++j) {
          dv[t * D + j] += a[i * T + t] * dh[i * D + j];
        }
      }
    }
    // Row-wise softmax backward.
    for (std::size_t i = 0; i < T; ++i) {
      double dot = 0.0;
      for (std::size_t t = 0; t < T; ++t) dot += da[i * T + t] * a[i * T + t];
      for (std::size_t t = 0; t < T; ++t) {
        ds[i * T + t] = a[i * T + t] * (da[i * T + t] - dot);
      }
    }
    // dQ = dS K / sqrt(D), dK = dS^T Q / sqrt(D)
    for (std::size_t i = 0; i < T; ++i) {
      for (std::size_t c = 0; c < D; ++c) {
        double sdq = 0.0, sdk = 0.0;
        for (std::size_t j = 0; j < T; ++j) {
          sdq += ds[i * T + j] * k[j * D + c];
          sdk += ds[j * T + i] * q[j * D + c];
        }
        dq[i * D + c] = sdq * inv_sqrt_d;
        dk[i * D + c] = sdk * inv_sqrt_d;
      }
    }
    // Projection weights: dW = X^T dY for each of q/k/v.
    for (std::size_t c = 0; c < D; ++c) {
      for (std::size_t j = 0; j < D; ++j) {
        double swq = 0.0, swk = 0.0, swv = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
          const double xc = x[t * D + c];
          swq += xc * dq[t * D + j];
          swk += xc * dk[t * D + j];
          swv += xc * dv[t * D + j];
        }
        grad[gq.offset + c * D + j] += swq;
        grad[gk.offset + c * D + j] += swk;
        grad[gv.offset + c * D + j] += swv;
      }
    }
  }
}

}  // namespace

std::vector<std::pair<std::string, std::size_t>> ModelSpec::layout() const {
  std::vector<std::pair<std::string, std::size_t>> groups;
  if (arch == Arch::kToyAttention) {
    const std::size_t d = embed_dim(*this);
    groups.emplace_back("wq", d * d);
    groups.emplace_back("wk", d * d);
    groups.emplace_back("wv", d * d);
  }
  const auto dims = head_dims(*this);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    groups.emplace_back("w" + std::to_string(l), dims[l + 1] * dims[l]);
    groups.emplace_back("b" + std::to_string(l), dims[l + 1]);
  }
  return groups;
}

std::size_t ModelSpec::param_count() const {
  std::size_t n = 0;
  for (const auto& [name, count] : layout()) n += count;
  return n;
}

double forward_loss(const ModelSpec& spec, const ParamStore& store,
                    const Batch& batch, ForwardCache& cache) {
  check_batch(spec, batch);
  if (store.dim() != spec.param_count()) {
    throw std::invalid_argument("store does not match model layout");
  }
  cache = ForwardCache{};
  cache.rows = batch.rows;
  cache.inputs = batch.inputs;
  cache.targets = batch.targets;
  cache.labels = batch.labels;

  const auto dims = head_dims(spec);
  const std::size_t layers = dims.size() - 1;
  cache.act.resize(layers + 1);
  if (spec.arch == Arch::kMlp) {
    cache.act[0] = batch.inputs;
  } else {
    attention_forward(spec, store, batch, cache, cache.act[0]);
  }

  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = dims[l], out = dims[l + 1];
    const double* w =
        store.values().data() +
        store.group_view("w" + std::to_string(l)).offset;
    const double* b =
        store.values().data() +
        store.group_view("b" + std::to_string(l)).offset;
    const auto& prev = cache.act[l];
    auto& next = cache.act[l + 1];
    next.assign(batch.rows * out, 0.0);
    const bool last = (l + 1 == layers);
    for (std::size_t r = 0; r < batch.rows; ++r) {
      for (std::size_t o = 0; o < out; ++o) {
        double z = b[o];
        for (std::size_t i = 0; i < in; ++i) {
          z += w[o * in + i] * prev[r * in + i];
        }
        next[r * out + o] = last ? z : activate(spec.activation, z);
      }
    }
  }
  cache.logits = cache.act[layers];

  const std::size_t out_dim = spec.output_dim;
  double loss = 0.0;
  if (spec.loss == LossKind::kMeanSquaredError) {
    for (std::size_t i = 0; i < cache.logits.size(); ++i) {
      const double e = cache.logits[i] - batch.targets[i];
      loss += e * e;
    }
    loss /= static_cast<double>(batch.rows * out_dim);
  } else {
    for (std::size_t r = 0; r < batch.rows; ++r) {
      const double* row = cache.logits.data() + r * out_dim;
      const double maxv = *std::max_element(row, row + out_dim);
      double denom = 0.0;
      for (std::size_t o = 0; o < out_dim; ++o) denom += std::exp(row[o] - maxv);
      const int y = batch.labels[r];
      if (y < 0 || static_cast<std::size_t>(y) >= out_dim) {
        throw std::invalid_argument("label out of range");
      }
      loss += std::log(denom) - (row[y] - maxv);
    }
    loss /= static_cast<double>(batch.rows);
  }
  if (!std::isfinite(loss)) {
    throw std::runtime_error("non-finite loss");
  }
  cache.valid = true;
  return loss;
}

std::vector<double> backward(const ModelSpec& spec, const ParamStore& store,
                             ForwardCache& cache) {
  if (!cache.valid) throw std::invalid_argument("stale forward cache");
  if (store.dim() != spec.param_count()) {
    throw std::invalid_argument("store does not match model layout");
  }
  const auto dims = head_dims(spec);
  const std::size_t layers = dims.size() - 1;
  const std::size_t out_dim = spec.output_dim;
  const std::size_t rows = cache.rows;

  std::vector<double> grad(store.dim(), 0.0);
  std::vector<double> delta(rows * out_dim, 0.0);
  if (spec.loss == LossKind::kMeanSquaredError) {
    const double scale = 2.0 / static_cast<double>(rows * out_dim);
    for (std::size_t i = 0; i < delta.size(); ++i) {
      delta[i] = scale * (cache.logits[i] - cache.targets[i]);
    }
  } else {
    const double scale = 1.0 / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* row = cache.logits.data() + r * out_dim;
      const double maxv = *std::max_element(row, row + out_dim);
      double denom = 0.0;
      for (std::size_t o = 0; o < out_dim; ++o) denom += std::exp(row[o] - maxv);
      for (std::size_t o = 0; o < out_dim; ++o) {
        double p = std::exp(row[o] - maxv) / denom;
        if (static_cast<int>(o) == cache.labels[r]) p -= 1.0;
        delta[r * out_dim + o] = scale * p;
      }
    }
  }

  // Dense head, last layer first.
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = dims[l], out = dims[l + 1];
    const auto& gw = store.group_view("w" + std::to_string(l));
    const auto& gb = store.group_view("b" + std::to_string(l));
    const double* w = store.values().data() + gw.offset;
    const auto& prev = cache.act[l];
    std::vector<double> d_prev(rows * in, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t o = 0; o < out; ++o) {
        const double dz = delta[r * out + o];
        grad[gb.offset + o] += dz;
        for (std::size_t i = 0; i < in; ++i) {
          grad[gw.offset + o * in + i] += dz * prev[r * in + i];
          d_prev[r * in + i] += w[o * in + i] * dz;
        }
      }
    }
    if (l > 0) {
      for (std::size_t i = 0; i < d_prev.size(); ++i) {
        d_prev[i] *= activate_grad(spec.activation, prev[i]);
      }
    }
    delta = std::move(d_prev);
  }

  if (spec.arch == Arch::kToyAttention) {
    attention_backward(spec, store, cache, delta, grad);
  }
  cache.valid = false;
  return grad;
}

double evaluate(const ModelSpec& spec, const ParamStore& store,
                const Batch& eval_set) {
  if (eval_set.rows == 0) throw std::invalid_argument("empty eval set");
  ForwardCache cache;
  if (spec.loss == LossKind::kSoftmaxCrossEntropy) {
    forward_loss(spec, store, eval_set, cache);
    const std::size_t out = spec.output_dim;
    std::size_t correct = 0;
    for (std::size_t r = 0; r < eval_set.rows; ++r) {
      const double* row = cache.logits.data() + r * out;
      const std::size_t pred =
          std::max_element(row, row + out) - row;
      if (static_cast<int>(pred) == eval_set.labels[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(eval_set.rows);
  }
  const double mse = forward_loss(spec, store, eval_set, cache);
  return 1.0 / (1.0 + mse);
}

}  // namespace epi
