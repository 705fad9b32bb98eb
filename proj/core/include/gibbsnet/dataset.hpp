// SPDX-License-Identifier: Apache-2.0
//
// Synthetic VLE / ACI / LLE data points, their JSON-lines files, system-wise
// fold splits and training-set scalers.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gibbsnet/embeddings.hpp"
#include "gibbsnet/hanna.hpp"
#include "gibbsnet/surrogate.hpp"
#include "gibbsnet/world.hpp"

namespace gibbsnet::data {

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr int kFolds = 10;

enum class Kind { VLE, ACI, LLE };

std::string_view kind_name(Kind kind);
/// Throws DataError for anything but "VLE", "ACI" or "LLE".
Kind parse_kind(std::string_view name);

struct DataPoint {
  Kind kind = Kind::VLE;
  std::string system_id;
  std::vector<thermo::ComponentId> components;  ///< sorted
  double T = 0.0;
  double p = 0.0;             ///< kPa; unused for ACI
  std::vector<double> x;      ///< VLE liquid, or ACI solvent composition with the solute entry 0
  std::vector<double> y;      ///< VLE vapor
  thermo::ComponentId solute; ///< ACI
  double ln_gamma_inf = 0.0;  ///< ACI
  double x1_lo = 0.0;         ///< LLE, mole fraction of components[0]
  double x1_hi = 0.0;

  /// Position of the ACI solute in `components`.
  int solute_index() const;
};

/// Sorted component ids joined by '|'.
std::string make_system_id(std::vector<thermo::ComponentId> components);

struct KindCounts {
  std::size_t vle = 0;
  std::size_t aci = 0;
  std::size_t lle = 0;
};

struct Dataset {
  std::uint64_t world_seed = 0;
  std::vector<DataPoint> points;

  KindCounts counts() const;
};

struct SampleStats {
  std::size_t vle_rejected_pressure = 0;
  std::size_t vle_rejected_in_gap = 0;
  std::size_t lle_candidates_without_gap = 0;
  std::size_t lle_unrefined = 0;
  std::size_t systems_with_gap = 0;
};

struct SampleResult {
  Dataset dataset;
  SampleStats stats;
};

/// Draws the configured number of binary systems and VLE, ACI and LLE points
/// from the world's oracle. VLE compositions inside a miscibility gap are
/// rejected, as are bubble pressures above the VLE limit.
SampleResult sample_datasets(const world::World& world);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
/// Throws DataError on malformed records or a header/count mismatch.
Dataset load_dataset(const std::filesystem::path& path);

using AntoineTable = std::unordered_map<thermo::ComponentId, thermo::AntoineCoefficients>;
AntoineTable antoine_table(std::span<const thermo::AntoineCoefficients> coeffs);

/// Experimental ln gamma of a VLE point via the extended Raoult's law.
std::vector<double> vle_ln_gamma(const DataPoint& point, const AntoineTable& antoine);

// --- splits -------------------------------------------------------------------

struct SystemInfo {
  std::string id;
  bool has_lle = false;
};

/// Systems in id order with their LLE flag.
std::vector<SystemInfo> systems_of(const Dataset& dataset);

struct SplitSets {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

struct FoldSplit {
  std::map<std::string, int> fold_of;
  std::vector<SplitSets> folds;  ///< kFolds entries
  SplitSets full;                ///< 95 / 5, no test

  /// fold in [0, kFolds) or -1 for the full split.
  const SplitSets& sets(int fold) const;
};

/// Systems are bucketed by LLE flag; each shuffled bucket is dealt
/// round-robin onto the folds. Within a fold the remaining systems go 90/10
/// to train/val, again per bucket. Throws DataError with fewer than 10
/// systems in either bucket.
FoldSplit split_folds(std::span<const SystemInfo> systems, std::uint64_t seed);

/// Optional unseen-component mode: a `fraction` of the components is held
/// out and every system containing one of them is a test system; the rest go
/// 90/10 to train/val per LLE bucket.
SplitSets split_components(std::span<const SystemInfo> systems, double fraction, std::uint64_t seed);

void save_folds(const FoldSplit& split, const std::filesystem::path& path);
FoldSplit load_folds(const std::filesystem::path& path);

struct Partition {
  std::vector<DataPoint> train;
  std::vector<DataPoint> val;
  std::vector<DataPoint> test;
};

/// Points of unlisted systems are dropped.
Partition partition(const Dataset& dataset, const SplitSets& sets);

struct Scalers {
  hanna::Scaler embedding;
  hanna::Scaler temperature;
};

/// Embedding statistics over every component occurrence in `train` (one row
/// per component per point), temperature statistics over its points. Throws DataError on an empty set.
Scalers fit_scalers(std::span<const DataPoint> train, const EmbeddingTable& embeddings);

// --- surrogate labels ----------------------------------------------------------

/// One oracle request per LLE point, plus `extra` requests at the temperature
/// of a random LLE point shifted by U(-15, 15) K and clamped to the world's range.
std::vector<surrogate::LabelRequest> surrogate_requests(const world::World& world, const Dataset& dataset,
                                                        std::size_t extra, std::uint64_t seed);

struct SampleSplit {
  std::vector<surrogate::Sample> train;
  std::vector<surrogate::Sample> val;
  std::vector<surrogate::Sample> test;
};

/// Samples follow their system's set; unlisted systems are dropped.
SampleSplit split_samples(std::span<const surrogate::Sample> samples, const SplitSets& sets);

}  // namespace gibbsnet::data
