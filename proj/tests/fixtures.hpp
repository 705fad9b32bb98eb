// SPDX-License-Identifier: Apache-2.0
// Small synthetic world shared by the training tests.
#pragma once

#include <filesystem>
#include <string>

#include "gibbsnet/losses.hpp"
#include "gibbsnet/world.hpp"

namespace gibbsnet::test {

inline world::WorldConfig small_world_config(std::uint64_t seed = 3) {
  world::WorldConfig c;
  c.seed = seed;
  c.n_components = 60;
  c.embedding_dim = 32;
  c.n_systems = 300;
  c.n_vle = 2000;
  c.n_aci = 1000;
  c.n_lle = 300;
  return c;
}

struct SmallWorld {
  world::World world;
  data::Dataset dataset;
  data::AntoineTable antoine;
  std::vector<train::Example> examples;
  data::Scalers scalers;
};

inline const SmallWorld& small_world() {
  static const SmallWorld s = [] {
    SmallWorld r{world::make_world(small_world_config()), {}, {}, {}, {}};
    r.dataset = data::sample_datasets(r.world).dataset;
    r.antoine = data::antoine_table(r.world.antoine);
    r.examples = train::make_examples(r.dataset.points, r.world.embeddings, r.antoine);
    r.scalers = data::fit_scalers(r.dataset.points, r.world.embeddings);
    return r;
  }();
  return s;
}

// Fitted scalers, wider Lipschitz bounds and a shifted output so that roughly
// half of the world's LLE systems get a predicted gap.
inline hanna::ModelParams gap_prone_model(std::uint64_t seed) {
  const auto& s = small_world();
  auto p = hanna::ModelParams::init(static_cast<int>(s.world.embeddings.dimension()), seed);
  p.embedding_scaler = s.scalers.embedding;
  p.temperature_scaler = s.scalers.temperature;
  for (auto* l : p.layers()) l->c_star(0, 0) = 1.5;
  p.property2.bias(0, 0) = 1.9;
  return p;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("gibbsnet_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace gibbsnet::test
