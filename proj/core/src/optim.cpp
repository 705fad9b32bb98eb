// SPDX-License-Identifier: Apache-2.0
#include "gibbsnet/optim.hpp"

#include <cmath>
#include <numbers>

#include "gibbsnet/error.hpp"

namespace gibbsnet::optim {

AdamW::AdamW(std::vector<ParamSlot> slots, AdamWConfig config) : slots_(std::move(slots)), config_(config) {
  for (const auto& s : slots_) {
    m_.push_back(ad::Vector::Zero(s.size));
    v_.push_back(ad::Vector::Zero(s.size));
  }
}

void AdamW::step(const std::vector<ad::Matrix>& grads, double lr) {
  if (grads.size() != slots_.size()) throw UsageError("AdamW: gradient count does not match parameter slots");
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < slots_.size(); ++k) {
    const auto& s = slots_[k];
    if (grads[k].size() != s.size) throw UsageError("AdamW: gradient size mismatch");
    Eigen::Map<ad::Vector> p(s.data, s.size);
    Eigen::Map<const ad::Vector> g(grads[k].data(), s.size);
    if (s.decay && config_.weight_decay != 0.0) p *= 1.0 - lr * config_.weight_decay;
    m_[k] = b1 * m_[k] + (1.0 - b1) * g;
    v_[k] = b2 * v_[k] + (1.0 - b2) * g.cwiseProduct(g);
    p.array() -= lr * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + config_.eps);
  }
}

long OneCycle::peak_step(long total_steps) const {
  return std::lround(warmup_fraction * static_cast<double>(total_steps - 1));
}

double OneCycle::lr(long step, long total_steps) const {
  if (total_steps < 1 || step < 0 || step >= total_steps) throw UsageError("one-cycle step out of range");
  const long peak = peak_step(total_steps);
  const double lo = max_lr / initial_div, hi = max_lr, end = max_lr / final_div;
  auto cosine = [](double from, double to, double t) {
    return to + (from - to) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
  };
  if (step <= peak) return peak == 0 ? hi : cosine(lo, hi, static_cast<double>(step) / static_cast<double>(peak));
  const long last = total_steps - 1;
  return cosine(hi, end, static_cast<double>(step - peak) / static_cast<double>(last - peak));
}

}  // namespace gibbsnet::optim
