// SPDX-License-Identifier: Apache-2.0
//
// Synthetic ground truth: components carry latent vectors, binary NRTL
// parameters are smooth functions of the latent pair, and the observed
// embeddings are a noisy linear image of the latents.
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gibbsnet/cem.hpp"
#include "gibbsnet/embeddings.hpp"
#include "gibbsnet/thermo.hpp"

namespace gibbsnet::world {

struct WorldConfig {
  std::uint64_t seed = 0;
  int n_components = 200;
  int latent_dim = 6;
  int embedding_dim = 384;
  double noise_std = 0.05;
  double T_min = 273.0;
  double T_max = 433.0;
  /// Share of VLE/ACI temperatures drawn up to 20 K outside [T_min, T_max].
  double outside_fraction = 0.05;
  int n_systems = 1500;
  int n_vle = 20000;
  int n_aci = 12000;
  int n_lle = 2000;
  /// Share of ACI points in a two-component solvent.
  double mixed_solvent_fraction = 0.05;
  double vle_p_max_kpa = 1000.0;
  double lle_p_kpa = 101.325;
  double lle_p_max_kpa = 10000.0;

  /// Throws UsageError on inconsistent values.
  void validate() const;
};

WorldConfig load_world_config(const std::filesystem::path& path);
void save_world_config(const WorldConfig& config, const std::filesystem::path& path);

struct World {
  WorldConfig config;
  std::vector<thermo::ComponentId> ids;
  ad::Matrix latents;     ///< components x latent_dim
  ad::Matrix projection;  ///< embedding_dim x latent_dim
  EmbeddingTable embeddings;
  thermo::NrtlParams nrtl;  ///< all components
  std::vector<thermo::AntoineCoefficients> antoine;

  /// Throws DataError("unknown component ...").
  int index(const thermo::ComponentId& id) const { return embeddings.index(id); }
  /// Binary NRTL oracle for components (i, j), x1 refers to i.
  cem::BinaryModel binary(int i, int j) const;
  thermo::NrtlParams subset(std::span<const int> idx) const { return nrtl.subset(idx); }
};

/// Deterministic in the config.
World make_world(const WorldConfig& config);

/// Multi-component NRTL ln gamma of the ground truth.
thermo::GammaVector oracle_gamma(const World& world, const thermo::MixtureState& state);

}  // namespace gibbsnet::world
