#pragma once

#include <cstdint>
#include <vector>

#include "epi/bitmask.hpp"
#include "epi/param_store.hpp"

namespace epi {

struct AdamWConfig {
  double base_lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled-weight-decay Adam. Moments update for every coordinate; masking
// happens on the returned delta, never inside the moment buffers.
class AdamW {
 public:
  AdamW(std::size_t dim, AdamWConfig config);

  const AdamWConfig& config() const { return config_; }
  std::uint64_t step() const { return step_; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }

  // Full signed update for one step at learning rate lr, including the
  // decoupled decay term -lr * wd * theta. Mutates moments and the step
  // counter. Throws on non-finite gradient entries.
  std::vector<double> delta(const std::vector<double>& grad,
                            const std::vector<double>& theta, double lr);

 private:
  AdamWConfig config_;
  std::vector<double> m_, v_;
  std::uint64_t step_ = 0;
};

enum class ScheduleShape { kCosine, kConstant };

// Linear warm-up to base_lr, then cosine decay to zero at total_steps.
struct LrSchedule {
  double base_lr = 1e-3;
  double warmup_fraction = 0.03;
  std::uint64_t total_steps = 1;
  ScheduleShape shape = ScheduleShape::kCosine;

  double at(std::uint64_t step) const;
};

// theta += delta wherever the mask bit is clear; protected coordinates stay
// bit-identical.
void apply_masked_update(ParamStore& store, const std::vector<double>& delta,
                         const PackedBits& mask);

}  // namespace epi
