#include "epi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace epi {
namespace {

std::vector<double> average_ranks(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw std::invalid_argument("zero variance in correlation input");
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

void PerfLedger::record_initial(int task_id, double perf) {
  if (perf_.count(task_id)) {
    throw std::invalid_argument("initial perf already recorded for task");
  }
  perf_[task_id] = {perf, perf};
}

void PerfLedger::record_latest(int task_id, double perf) {
  auto it = perf_.find(task_id);
  if (it == perf_.end()) {
    throw std::invalid_argument("no initial perf recorded for task");
  }
  it->second.second = perf;
}

bool PerfLedger::has_initial(int task_id) const {
  return perf_.count(task_id) > 0;
}

double PerfLedger::initial(int task_id) const { return perf_.at(task_id).first; }
double PerfLedger::latest(int task_id) const { return perf_.at(task_id).second; }

double PerfLedger::forgetting_ratio(int task_id) const {
  auto it = perf_.find(task_id);
  if (it == perf_.end()) {
    throw std::invalid_argument("no initial perf recorded for task");
  }
  const auto [initial, latest] = it->second;
  if (!(initial > 0.0)) {
    throw std::invalid_argument("initial perf must be positive");
  }
  return (initial - latest) / initial * 100.0;
}

std::vector<int> PerfLedger::task_ids() const {
  std::vector<int> ids;
  for (const auto& [id, _] : perf_) ids.push_back(id);
  return ids;
}

double cosine_interference(const std::vector<double>& gi,
                           const std::vector<double>& gj) {
  if (gi.size() != gj.size()) {
    throw std::invalid_argument("gradient length mismatch");
  }
  double dot = 0.0, ni = 0.0, nj = 0.0;
  for (std::size_t i = 0; i < gi.size(); ++i) {
    dot += gi[i] * gj[i];
    ni += gi[i] * gi[i];
    nj += gj[i] * gj[i];
  }
  if (ni == 0.0 || nj == 0.0) {
    throw std::invalid_argument("cosine of zero vector is undefined");
  }
  return dot / std::sqrt(ni * nj);
}

double tgc(const std::vector<double>& gi, const std::vector<double>& gj) {
  return std::max(0.0, -cosine_interference(gi, gj));
}

std::size_t hamming(const PackedBits& a, const PackedBits& b) {
  return PackedBits::xor_count(a, b);
}

double jaccard(const PackedBits& a, const PackedBits& b) {
  const std::size_t uni = PackedBits::or_count(a, b);
  if (uni == 0) throw std::invalid_argument("jaccard of two empty masks");
  return static_cast<double>(PackedBits::and_count(a, b)) /
         static_cast<double>(uni);
}

double flip_rate(const std::vector<PackedBits>& series,
                 const std::vector<Group>& ranges) {
  if (series.size() < 2) {
    throw std::invalid_argument("flip rate needs at least two masks");
  }
  std::size_t group_size = 0;
  for (const auto& g : ranges) group_size += g.length;
  if (group_size == 0) throw std::invalid_argument("empty flip-rate group");

  double sum = 0.0;
  for (std::size_t s = 1; s < series.size(); ++s) {
    std::size_t flips = 0;
    for (const auto& g : ranges) {
      for (std::size_t j = g.offset; j < g.offset + g.length; ++j) {
        if (series[s - 1].test(j) != series[s].test(j)) ++flips;
      }
    }
    sum += static_cast<double>(flips) / static_cast<double>(group_size);
  }
  return sum / static_cast<double>(series.size() - 1) * 100.0;
}

std::vector<double> perturbation_sigmas(const ParamStore& store) {
  std::vector<double> sigmas(store.dim(), 1e-6);
  for (const auto& g : store.partition()) {
    double ss = 0.0;
    for (std::size_t j = g.offset; j < g.offset + g.length; ++j) {
      ss += store.values()[j] * store.values()[j];
    }
    const double rms = std::sqrt(ss / static_cast<double>(g.length));
    const double sigma = std::max(1e-3 * rms, 1e-6);
    for (std::size_t j = g.offset; j < g.offset + g.length; ++j) {
      sigmas[j] = sigma;
    }
  }
  return sigmas;
}

std::vector<double> perturbation_sensitivity(
    const ModelSpec& spec, ParamStore& store, const Batch& batch,
    const std::vector<std::size_t>& indices, const std::vector<double>& sigmas,
    Rng& rng, std::size_t trials) {
  if (trials == 0) throw std::invalid_argument("trials must be >= 1");
  if (sigmas.size() != store.dim()) {
    throw std::invalid_argument("sigma vector length mismatch");
  }
  ForwardCache cache;
  const double base_loss = forward_loss(spec, store, batch, cache);

  std::vector<double> delta_loss(indices.size(), 0.0);
  for (std::size_t n = 0; n < indices.size(); ++n) {
    const std::size_t j = indices[n];
    if (j >= store.dim()) throw std::invalid_argument("index out of range");
    const double original = store.values()[j];
    double sum = 0.0;
    double draw = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      // Antithetic pairs: odd trials reuse the negated previous draw, which
      // cancels the first-order term away from exact minima without changing
      // the estimator's expectation.
      draw = (t % 2 == 0) ? rng.normal(0.0, sigmas[j]) : -draw;
      store.values()[j] = original + draw;
      sum += forward_loss(spec, store, batch, cache) - base_loss;
      store.values()[j] = original;  // bit-exact restore after each trial
    }
    delta_loss[n] = sum / static_cast<double>(trials);
  }
  return delta_loss;
}

std::pair<double, double> correlate(const std::vector<double>& xs,
                                    const std::vector<double>& ys) {
  if (xs.size() != ys.size()) {
    throw std::invalid_argument("correlation input length mismatch");
  }
  if (xs.size() < 3) {
    throw std::invalid_argument("correlation needs at least 3 pairs");
  }
  const double r = pearson(xs, ys);
  const double rho = pearson(average_ranks(xs), average_ranks(ys));
  return {r, rho};
}

}  // namespace epi
