#include "epi/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace epi {

AdamW::AdamW(std::size_t dim, AdamWConfig config)
    : config_(config), m_(dim, 0.0), v_(dim, 0.0) {}

std::vector<double> AdamW::delta(const std::vector<double>& grad,
                                 const std::vector<double>& theta,
                                 double lr) {
  if (grad.size() != m_.size() || theta.size() != m_.size()) {
    throw std::invalid_argument("optimizer buffer length mismatch");
  }
  if (lr < 0.0) throw std::invalid_argument("negative learning rate");
  for (double g : grad) {
    if (!std::isfinite(g)) {
      throw std::invalid_argument("non-finite gradient entry");
    }
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  std::vector<double> delta(m_.size());
  for (std::size_t i = 0; i < m_.size(); ++i) {
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grad[i];
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    delta[i] = -lr * (m_hat / (std::sqrt(v_hat) + config_.eps) +
                      config_.weight_decay * theta[i]);
  }
  return delta;
}

double LrSchedule::at(std::uint64_t step) const {
  if (total_steps == 0) throw std::invalid_argument("total_steps must be >= 1");
  if (shape == ScheduleShape::kConstant) return base_lr;
  const auto warmup =
      static_cast<std::uint64_t>(std::llround(warmup_fraction *
                                              static_cast<double>(total_steps)));
  if (step > total_steps) return 0.0;
  if (warmup > 0 && step < warmup) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  }
  const double span = static_cast<double>(total_steps - warmup);
  if (span <= 0.0) return base_lr;
  const double progress = static_cast<double>(step - warmup) / span;
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void apply_masked_update(ParamStore& store, const std::vector<double>& delta,
                         const PackedBits& mask) {
  auto& theta = store.values();
  if (delta.size() != theta.size() || mask.size() != theta.size()) {
    throw std::invalid_argument("masked update length mismatch");
  }
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (!mask.test(i)) theta[i] += delta[i];
  }
}

}  // namespace epi
