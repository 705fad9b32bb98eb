// SPDX-License-Identifier: Apache-2.0
//
// Surrogate LLE solver: a small ReLU network mapping a 101-point dg_mix/RT
// curve to the two coexisting compositions (x1', x1''). The forward pass
// averages the raw prediction with the mirrored prediction on the reversed
// curve, which makes the result exactly equivariant under component swap.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gibbsnet/autodiff.hpp"
#include "gibbsnet/cem.hpp"
#include "gibbsnet/lipschitz.hpp"
#include "gibbsnet/optim.hpp"

namespace gibbsnet::surrogate {

inline constexpr int kHidden = 64;
inline constexpr int kLayers = 4;
inline constexpr std::uint32_t kSurrogateVersion = 1;

struct DenseLayer {
  ad::Matrix W;  ///< out x in
  ad::Matrix b;  ///< 1 x out
};

/// 101 -> 64 -> 64 -> 64 (ReLU) -> 2 (sigmoid).
struct SurrogateParams {
  std::array<DenseLayer, kLayers> layers;

  static SurrogateParams init(std::uint64_t seed);
  /// (W, b) per layer; all decay-eligible.
  std::vector<ParamSlot> slots();
};

/// Rows of `curves` (B x 101) to B x 2 sorted (x1', x1'') on the tape.
/// Parameters enter as leaves with `trainable`, otherwise as constants;
/// gradients always flow into `curves`.
class Network {
 public:
  Network(ad::Tape& tape, const SurrogateParams& params, bool trainable);
  ad::Var forward(ad::Var curves) const;
  /// Raw sigmoid outputs without averaging or ordering.
  ad::Var raw(ad::Var curves) const;
  const std::vector<ad::Var>& leaves() const { return leaves_; }

 private:
  ad::Tape* tape_;
  std::array<ad::Var, kLayers> Wt_;
  std::array<ad::Var, kLayers> b_;
  std::vector<ad::Var> leaves_;
};

/// Value-only batch prediction, B x 2.
ad::Matrix predict(const SurrogateParams& params, const ad::Matrix& curves);
cem::BinaryPhaseSplit predict(const SurrogateParams& params, const thermo::DGmixCurve& curve);

ad::Matrix curves_matrix(std::span<const thermo::DGmixCurve> curves);

struct Sample {
  thermo::DGmixCurve curve;
  cem::BinaryPhaseSplit label;
  std::string system_id;
};

struct LabelRequest {
  std::string system_id;
  cem::BinaryModel model;
  double T = 298.15;
};

struct LabelResult {
  std::vector<Sample> samples;
  std::size_t dropped_no_gap = 0;
  std::size_t dropped_unrefined = 0;
};

/// CEM labels from oracle curves. Points without a gap, or whose refinement
/// fails, are dropped and counted. Multi-gap curves keep the outermost pair.
LabelResult generate_labels(std::span<const LabelRequest> requests);

struct TrainConfig {
  int epochs = 200;
  int batch_size = 512;
  optim::OneCycle schedule{};
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

struct TrainResult {
  SurrogateParams params;
  int best_epoch = -1;
  std::vector<double> train_mse;
  std::vector<double> val_mse;
};

/// Minimizes the mean squared error on (x1', x1''), keeps the epoch with the
/// lowest validation error. Throws DataError on an empty training set.
TrainResult train_surrogate(std::span<const Sample> train, std::span<const Sample> val, const TrainConfig& config);

double mean_squared_error(const SurrogateParams& params, std::span<const Sample> samples);
/// Mean absolute error over both compositions.
double mean_absolute_error(const SurrogateParams& params, std::span<const Sample> samples);

/// Container shared with the model checkpoint: magic "SLLE", u32 version,
/// u32 layer count, (out, in) per layer, W (row-major) and b per layer, CRC32.
void save_surrogate(const SurrogateParams& params, const std::filesystem::path& path);
SurrogateParams load_surrogate(const std::filesystem::path& path);

}  // namespace gibbsnet::surrogate
