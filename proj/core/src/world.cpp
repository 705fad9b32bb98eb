// SPDX-License-Identifier: Apache-2.0
#include "gibbsnet/world.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>

#include "json.hpp"

namespace gibbsnet::world {

using ad::Matrix;
using ad::Vector;
using nlohmann::json;

namespace {

// Pair-interaction scales. tau_ij = a_ij + b_ij / T with
//   a_ij = kA z_i^T A z_j + kPolA (pi_i - pi_j)^2 + kAsym (pi_i - pi_j)
//   b_ij = kB z_i^T B z_j + kPolB (pi_i - pi_j)^2
// where pi = w^T z is a polarity coordinate. The squared polarity mismatch
// drives the miscibility gaps; the b term makes them close on heating.
constexpr double kA = 0.25;
constexpr double kB = 60.0;
constexpr double kPolA = -0.15;
constexpr double kPolB = 220.0;
constexpr double kAsym = 0.3;
constexpr double kAlphaMid = 0.3;
constexpr double kAlphaSpread = 0.06;

}  // namespace

void WorldConfig::validate() const {
  if (n_components < 3) throw UsageError("world needs at least 3 components");
  if (latent_dim < 1 || embedding_dim < 1) throw UsageError("world dimensions must be positive");
  if (!(noise_std >= 0.0)) throw UsageError("noise_std must be non-negative");
  if (!(T_min > 0.0 && T_min < T_max)) throw UsageError("world temperature range is empty");
  if (!(outside_fraction >= 0.0 && outside_fraction <= 1.0)) throw UsageError("outside_fraction outside [0, 1]");
  if (!(mixed_solvent_fraction >= 0.0 && mixed_solvent_fraction <= 1.0))
    throw UsageError("mixed_solvent_fraction outside [0, 1]");
  const long pairs = static_cast<long>(n_components) * (n_components - 1) / 2;
  if (n_systems < 1 || n_systems > pairs) throw UsageError("n_systems exceeds the number of component pairs");
  if (n_vle < 0 || n_aci < 0 || n_lle < 0) throw UsageError("dataset sizes must be non-negative");
  if (lle_p_kpa > lle_p_max_kpa) throw UsageError("nominal LLE pressure above the LLE pressure limit");
}

WorldConfig load_world_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open world config " + path.string());
  WorldConfig c;
  try {
    json j;
    in >> j;
    c.seed = j.value("seed", c.seed);
    c.n_components = j.value("n_components", c.n_components);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
    c.noise_std = j.value("noise_std", c.noise_std);
    c.T_min = j.value("T_min", c.T_min);
    c.T_max = j.value("T_max", c.T_max);
    c.outside_fraction = j.value("outside_fraction", c.outside_fraction);
    c.n_systems = j.value("n_systems", c.n_systems);
    c.n_vle = j.value("n_vle", c.n_vle);
    c.n_aci = j.value("n_aci", c.n_aci);
    c.n_lle = j.value("n_lle", c.n_lle);
    c.mixed_solvent_fraction = j.value("mixed_solvent_fraction", c.mixed_solvent_fraction);
    c.vle_p_max_kpa = j.value("vle_p_max_kpa", c.vle_p_max_kpa);
    c.lle_p_kpa = j.value("lle_p_kpa", c.lle_p_kpa);
    c.lle_p_max_kpa = j.value("lle_p_max_kpa", c.lle_p_max_kpa);
  } catch (const json::exception& e) {
    throw DataError("malformed world config " + path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

void save_world_config(const WorldConfig& c, const std::filesystem::path& path) {
  const json j = {{"seed", c.seed},
                  {"n_components", c.n_components},
                  {"latent_dim", c.latent_dim},
                  {"embedding_dim", c.embedding_dim},
                  {"noise_std", c.noise_std},
                  {"T_min", c.T_min},
                  {"T_max", c.T_max},
                  {"outside_fraction", c.outside_fraction},
                  {"n_systems", c.n_systems},
                  {"n_vle", c.n_vle},
                  {"n_aci", c.n_aci},
                  {"n_lle", c.n_lle},
                  {"mixed_solvent_fraction", c.mixed_solvent_fraction},
                  {"vle_p_max_kpa", c.vle_p_max_kpa},
                  {"lle_p_kpa", c.lle_p_kpa},
                  {"lle_p_max_kpa", c.lle_p_max_kpa}};
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

World make_world(const WorldConfig& config) {
  config.validate();
  const int n = config.n_components, L = config.latent_dim, D = config.embedding_dim;
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> n01;
  auto gaussian = [&](Eigen::Index r, Eigen::Index c, double scale) {
    return Matrix(Matrix::NullaryExpr(r, c, [&]() { return scale * n01(rng); }));
  };

  World w;
  w.config = config;
  w.latents = gaussian(n, L, 1.0);
  w.projection = gaussian(D, L, 1.0 / std::sqrt(static_cast<double>(L)));
  const Matrix A = gaussian(L, L, 1.0 / L);
  const Matrix B = gaussian(L, L, 1.0 / L);
  Matrix C = gaussian(L, L, 1.0 / L);
  C = (0.5 * (C + C.transpose())).eval();
  Vector pol = gaussian(L, 1, 1.0).col(0);
  pol.normalize();

  const Vector pi = w.latents * pol;
  const Matrix ZA = w.latents * A * w.latents.transpose();
  const Matrix ZB = w.latents * B * w.latents.transpose();
  const Matrix ZC = w.latents * C * w.latents.transpose();
  w.nrtl = {Matrix::Zero(n, n), Matrix::Zero(n, n), Matrix::Zero(n, n)};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = pi(i) - pi(j);
      w.nrtl.a(i, j) = kA * ZA(i, j) + kPolA * d * d + kAsym * d;
      w.nrtl.b(i, j) = kB * ZB(i, j) + kPolB * d * d;
      w.nrtl.alpha(i, j) = std::clamp(kAlphaMid + kAlphaSpread * ZC(i, j), 0.2, 0.47);
    }
  }
  // Exact symmetry of alpha regardless of rounding in ZC.
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) w.nrtl.alpha(j, i) = w.nrtl.alpha(i, j);

  w.embeddings = EmbeddingTable(D);
  const Matrix noise = gaussian(n, D, config.noise_std);
  std::uniform_real_distribution<double> uTb(300.0, 520.0), uA(5.9, 6.6), uC(-70.0, -35.0);
  for (int i = 0; i < n; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "C%03d", i);
    w.ids.emplace_back(buf);
    const Vector e = w.projection * w.latents.row(i).transpose() + noise.row(i).transpose();
    w.embeddings.add(w.ids.back(), e);
    thermo::AntoineCoefficients ac;
    ac.component_id = w.ids.back();
    const double Tb = uTb(rng);
    ac.A = uA(rng);
    ac.C = uC(rng);
    ac.B = (ac.A - std::log10(101.325)) * (Tb + ac.C);
    ac.T_min = config.T_min;
    ac.T_max = config.T_max;
    w.antoine.push_back(ac);
  }
  return w;
}

cem::BinaryModel World::binary(int i, int j) const {
  const std::array<int, 2> idx{i, j};
  const thermo::NrtlParams p = nrtl.subset(idx);
  cem::BinaryModel m;
  m.gE = [p](double x1, double T) { return thermo::nrtl_gE(p, {x1, 1.0 - x1}, T); };
  m.ln_gamma = [p](double x1, double T) {
    const auto g = thermo::nrtl_ln_gamma(p, {x1, 1.0 - x1}, T).ln_gamma;
    return std::array<double, 2>{g[0], g[1]};
  };
  return m;
}

thermo::GammaVector oracle_gamma(const World& world, const thermo::MixtureState& state) {
  state.validate();
  std::vector<int> idx;
  for (const auto& id : state.components) idx.push_back(world.index(id));
  return thermo::nrtl_ln_gamma(world.subset(idx), state.x, state.T);
}

}  // namespace gibbsnet::world
