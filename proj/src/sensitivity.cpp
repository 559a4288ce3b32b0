#include "epi/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace epi {

SensitivityState::SensitivityState(std::size_t dim, double beta)
    : s(dim, 0.0), beta(beta) {
  if (beta < 0.0 || beta >= 1.0) {
    throw std::invalid_argument("beta must be in [0, 1)");
  }
}

void accumulate(SensitivityState& state, const std::vector<double>& grad) {
  if (grad.size() != state.s.size()) {
    throw std::invalid_argument("gradient length mismatch");
  }
  for (double g : grad) {
    if (!std::isfinite(g)) {
      throw std::invalid_argument("non-finite gradient entry");
    }
  }
  const double b = state.beta;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    state.s[i] = b * state.s[i] + (1.0 - b) * grad[i] * grad[i];
  }
  ++state.steps_absorbed;
}

std::vector<double> normalize_layerwise(const std::vector<double>& s,
                                        const std::vector<Group>& partition,
                                        double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  std::size_t covered = 0;
  for (const auto& g : partition) covered += g.length;
  if (covered != s.size()) {
    throw std::invalid_argument("partition does not cover score vector");
  }
  std::vector<double> out(s.size(), 0.0);
  for (const auto& g : partition) {
    const auto begin = s.begin() + static_cast<std::ptrdiff_t>(g.offset);
    const auto end = begin + static_cast<std::ptrdiff_t>(g.length);
    const auto [mn, mx] = std::minmax_element(begin, end);
    const double denom = *mx - *mn + eps;
    for (std::size_t j = g.offset; j < g.offset + g.length; ++j) {
      out[j] = (s[j] - *mn) / denom;
    }
  }
  return out;
}

}  // namespace epi
