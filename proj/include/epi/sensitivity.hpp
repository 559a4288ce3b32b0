#pragma once

#include <cstdint>
#include <vector>

#include "epi/param_store.hpp"

namespace epi {

// Running sensitivity vector: exponential moving average of elementwise
// squared gradients, a diagonal empirical-Fisher proxy for curvature.
struct SensitivityState {
  std::vector<double> s;
  double beta = 0.99;
  std::uint64_t steps_absorbed = 0;

  SensitivityState() = default;
  SensitivityState(std::size_t dim, double beta);
};

// S <- beta * S + (1 - beta) * g (.) g. Throws on non-finite gradients.
void accumulate(SensitivityState& state, const std::vector<double>& grad);

// Per-group min-max rescaling to [0,1]: (S - min_l) / (max_l - min_l + eps).
// Constant groups come out all-zero. Within-group ranking is preserved.
std::vector<double> normalize_layerwise(const std::vector<double>& s,
                                        const std::vector<Group>& partition,
                                        double eps = 1e-12);

}  // namespace epi
