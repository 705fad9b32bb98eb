// SPDX-License-Identifier: Apache-2.0
//
// Linear layers with a learnable Lipschitz bound: the raw weight is divided
// by a power-iteration estimate of its largest singular value and scaled by
// softplus(c*).
#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "gibbsnet/autodiff.hpp"

namespace gibbsnet {

/// Parameter block exposed to optimizers: a contiguous array plus whether
/// decoupled weight decay applies to it.
struct ParamSlot {
  double* data = nullptr;
  Eigen::Index size = 0;
  bool decay = false;
};

struct LipschitzLinear {
  ad::Matrix W_raw;  ///< out x in
  ad::Matrix bias;   ///< 1 x out
  ad::Matrix c_star = ad::Matrix::Constant(1, 1, 0.0);
  ad::Vector u;  ///< persistent left singular vector estimate, length out

  Eigen::Index in() const { return W_raw.cols(); }
  Eigen::Index out() const { return W_raw.rows(); }
  double lipschitz_bound() const { return ad::softplus_value(c_star(0, 0)); }

  /// Uniform(+-1/sqrt(in)) weights and biases, softplus(c*) = 1, and u
  /// warmed up by 15 power iterations.
  static LipschitzLinear init(Eigen::Index in, Eigen::Index out, std::mt19937_64& rng);
};

inline constexpr int kPowerIterations = 2;
inline constexpr int kWarmupIterations = 15;
/// c* with softplus(c*) = 1.
inline const double kUnitCStar = std::log(std::exp(1.0) - 1.0);

struct PowerIterate {
  ad::Vector u;
  ad::Vector v;
  double sigma = 0.0;
};

/// `iterations` rounds of v = W^T u / |W^T u|, u = W v / |W v| starting from
/// `u`; sigma = u^T W v.
PowerIterate power_iteration(const ad::Matrix& W, const ad::Vector& u, int iterations);

/// Largest singular value by an SVD; test oracle and diagnostics.
double spectral_norm_exact(const ad::Matrix& W);

/// W_raw / sigma * softplus(c*) as a value (u is not touched).
ad::Matrix scaled_weight(const LipschitzLinear& layer);

/// y = x W_scaled^T + bias for a batch of row inputs (value only).
ad::Matrix lipschitz_forward(const LipschitzLinear& layer, const ad::Matrix& x);

/// Layer bound to a tape. `Wt` is W_scaled^T (in x out) so batches of row
/// vectors multiply on the right.
struct BoundLayer {
  ad::Var W_raw;
  ad::Var bias;
  ad::Var c_star;
  ad::Var W_scaled;  ///< out x in
  ad::Var Wt;        ///< in x out
  ad::Vector next_u;  ///< power-iteration vector after this pass
};

/// Puts the layer on `tape`; with `trainable` the raw parameters are leaves,
/// otherwise constants. The persistent vector is not modified: training
/// copies `next_u` back after the step, inference discards it.
BoundLayer bind(ad::Tape& tape, const LipschitzLinear& layer, bool trainable);

/// Three slots in the order W_raw, bias, c_star.
void append_slots(LipschitzLinear& layer, std::vector<ParamSlot>& slots);

}  // namespace gibbsnet
