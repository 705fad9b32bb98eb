// SPDX-License-Identifier: Apache-2.0
//
// Mini-batch training of the excess Gibbs model with AdamW and a one-cycle
// schedule, best-epoch selection on the validation data loss, and ensembles.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gibbsnet/losses.hpp"

namespace gibbsnet::train {

struct TrainingData {
  ad::Matrix embeddings;  ///< one raw embedding per component row
  std::vector<Example> train;
  std::vector<Example> val;
  data::Scalers scalers;
};

/// Examples for the train and val systems of `sets`; scalers from train only.
TrainingData prepare_training_data(const data::Dataset& dataset, const data::SplitSets& sets,
                                   const EmbeddingTable& embeddings, const data::AntoineTable& antoine);

struct EpochLog {
  int epoch = 0;  ///< 1-based
  double lr = 0.0;
  double train_loss = 0.0;  ///< mean total loss per batch
  double vle = 0.0;         ///< epoch sums of the raw terms
  double aci = 0.0;
  double lle = 0.0;
  double gibbs = 0.0;
  double val_loss = 0.0;  ///< data loss per validation point
  double lipschitz_product = 0.0;
  std::size_t masked_lle = 0;
};

struct TrainResult {
  hanna::ModelParams best;
  hanna::ModelParams last;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  std::vector<EpochLog> history;
};

using ProgressFn = std::function<void(const EpochLog&)>;

/// 1-based epoch with the lowest val_loss among epochs >= min(min_best_epoch,
/// history size); the earliest wins ties. 0 for an empty history.
int select_best_epoch(std::span<const EpochLog> history, int min_best_epoch);

/// Deterministic in (data, surrogate, config, seed). The kept model is the
/// epoch with the lowest validation data loss among epochs >= min_best_epoch
/// (all epochs when fewer are run). Throws NumericalError naming the batch
/// and the loss term when a loss becomes non-finite.
TrainResult train_model(const TrainingData& data, const surrogate::SurrogateParams& surrogate,
                        const LossConfig& config, std::uint64_t seed, const ProgressFn& progress = {});

/// Validation data loss (vle + aci + w_LLE lle) per point; 0 for no points.
double validation_loss(const hanna::ModelParams& params, const ad::Matrix& embeddings, std::span<const Example> examples,
                       const surrogate::SurrogateParams& surrogate, const LossConfig& config);

struct EnsembleMember {
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint;
  int best_epoch = 0;
  double val_loss = 0.0;
};

struct EnsembleManifest {
  std::vector<EnsembleMember> members;
  bool complete = false;
};

/// Trains members with seeds 0..size-1 into `dir` (member_<seed>.hcnn) and
/// keeps manifest.json current after every member; a failure leaves a partial
/// manifest with complete = false and rethrows.
EnsembleManifest train_ensemble(const TrainingData& data, const surrogate::SurrogateParams& surrogate,
                                const LossConfig& config, const std::filesystem::path& dir,
                                const ProgressFn& progress = {});

void save_manifest(const EnsembleManifest& manifest, const std::filesystem::path& path);
/// Checkpoint paths are resolved relative to the manifest's directory.
EnsembleManifest load_manifest(const std::filesystem::path& path);
std::vector<hanna::ModelParams> load_members(const EnsembleManifest& manifest, std::optional<int> expected_D = {});

/// Mean of the members' ln gamma and g^E/RT. Throws DataError without members
/// or on an embedding dimension mismatch.
hanna::Prediction ensemble_predict(std::span<const hanna::ModelParams> members, const ad::Matrix& embeddings,
                                   std::span<const double> x, double T);

struct TrainingConfigFile {
  LossConfig loss;
  std::filesystem::path dataset;
  std::filesystem::path folds;
  std::filesystem::path embeddings;
  std::filesystem::path antoine;
  std::filesystem::path surrogate;
  int fold = 0;  ///< -1 for the full split
  std::uint64_t seed = 0;
};

/// JSON with the LossConfig fields plus paths (relative to the file), fold
/// and seed; missing fields keep their defaults.
TrainingConfigFile load_training_config(const std::filesystem::path& path);
void save_training_config(const TrainingConfigFile& config, const std::filesystem::path& path);

}  // namespace gibbsnet::train
