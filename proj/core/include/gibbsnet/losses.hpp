// SPDX-License-Identifier: Apache-2.0
//
// Training objective: smooth-L1 data terms for VLE, ACI and LLE (the latter
// through the frozen surrogate, masked by the stability criterion), the
// Gibbs hinge on the minimum curvature, and the Lipschitz product.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gibbsnet/dataset.hpp"
#include "gibbsnet/hanna.hpp"
#include "gibbsnet/surrogate.hpp"

namespace gibbsnet::train {

struct LossConfig {
  double w_LLE = 1.0;
  double w_Gibbs = 0.1;
  double w_Lips = 0.01;
  double beta_VLE = 1.0;
  double beta_ACI = 2.0;
  double beta_LLE = 0.35;
  int batch_size = 512;
  int epochs = 200;
  double max_lr = 0.01;
  int min_best_epoch = 50;
  int ensemble_size = 10;
  /// Decoupled decay on W_raw and biases.
  double weight_decay = 0.01;

  /// Throws UsageError on negative weights or non-positive betas and sizes.
  void validate() const;
};

/// Per element: e^2 / (2 beta) below beta, |e| - beta / 2 above.
double smooth_l1(double e, double beta);
/// Elementwise on the tape.
ad::Var smooth_l1(ad::Var e, double beta);

/// One data point in model coordinates: component rows of the embedding
/// matrix and the regression target.
struct Example {
  data::Kind kind = data::Kind::VLE;
  std::string system_id;
  std::vector<int> comps;
  std::vector<double> x;       ///< VLE / ACI composition
  double T = 0.0;
  std::vector<double> target;  ///< VLE ln gamma_i, ACI {ln gamma_inf}, LLE {x1', x1''}
  int solute = -1;             ///< ACI position in comps
};

/// Converts points (VLE targets via the extended Raoult's law).
std::vector<Example> make_examples(std::span<const data::DataPoint> points, const EmbeddingTable& embeddings,
                                   const data::AntoineTable& antoine);

struct LossTerms {
  ad::Var vle;    ///< sum over VLE points
  ad::Var aci;    ///< half the sum over ACI points
  ad::Var lle;    ///< masked sum over LLE points
  ad::Var gibbs;  ///< sum of max(0, min S)
  ad::Var lips;   ///< product of softplus(c*)
  ad::Var total;  ///< weighted sum over the configured batch size
  std::vector<double> min_S;  ///< per LLE point, batch order
  std::vector<bool> mask;     ///< per LLE point: min S < 0
};

/// All terms for one batch. Every term is a 1x1 node on the evaluator's tape
/// (zero when the batch holds no point of that kind).
LossTerms batch_loss(hanna::Evaluator& evaluator, const surrogate::Network& surrogate,
                     std::span<const Example* const> batch, const LossConfig& config);

/// Data part used for model selection: vle + aci + w_LLE lle.
double data_loss(const LossTerms& terms, const LossConfig& config);

}  // namespace gibbsnet::train
