// SPDX-License-Identifier: Apache-2.0
//
// AdamW with decoupled weight decay and the one-cycle learning-rate schedule.
#pragma once

#include <vector>

#include "gibbsnet/autodiff.hpp"
#include "gibbsnet/lipschitz.hpp"

namespace gibbsnet::optim {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

class AdamW {
 public:
  AdamW(std::vector<ParamSlot> slots, AdamWConfig config);

  /// One update; `grads[k]` holds slots[k].size values in the slot's storage
  /// order. Decay only touches slots flagged `decay`.
  void step(const std::vector<ad::Matrix>& grads, double lr);

  long steps() const { return t_; }
  const AdamWConfig& config() const { return config_; }

 private:
  std::vector<ParamSlot> slots_;
  AdamWConfig config_;
  std::vector<ad::Vector> m_;
  std::vector<ad::Vector> v_;
  long t_ = 0;
};

struct OneCycle {
  double max_lr = 0.01;
  double warmup_fraction = 0.3;
  double initial_div = 25.0;
  double final_div = 1e4;

  /// Step at which the rate peaks: round(warmup_fraction * (total - 1)).
  long peak_step(long total_steps) const;
  /// Cosine rise from max_lr/initial_div to max_lr, then cosine decay to
  /// max_lr/final_div at the last step. Throws UsageError outside [0, total).
  double lr(long step, long total_steps) const;
};

}  // namespace gibbsnet::optim
