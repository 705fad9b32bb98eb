// SPDX-License-Identifier: Apache-2.0
//
// Hard-constrained excess Gibbs energy network.
//
//   e* -> theta (embedding net) -> similarity R, lumped x~, projected X
//   [theta_i, X_i, T*] -> alpha (mixture net), alpha_i + alpha_j -> phi
//   q_ij = phi (1 - R_ij),  g^E/RT = sum_{i<j} x_i x_j q_ij
//
// ln gamma follows from directional derivatives of g^E/RT in the N-1 free
// mole fractions (the last component is dependent).
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "gibbsnet/autodiff.hpp"
#include "gibbsnet/lipschitz.hpp"
#include "gibbsnet/thermo.hpp"

namespace gibbsnet::hanna {

inline constexpr int kHidden = 96;
inline constexpr double kSimilarityGamma = 100.0;
inline constexpr int kMaxComponents = 8;

/// Per-dimension standardization; std floored at 1e-8.
struct Scaler {
  ad::Vector mean;
  ad::Vector std;

  bool fitted() const { return mean.size() > 0; }
  /// Rows are samples. Throws DataError("unfitted scaler").
  ad::Matrix transform(const ad::Matrix& rows) const;
  double transform(double value) const;
  static Scaler fit(const ad::Matrix& rows);
};

struct ModelParams {
  int D = 0;
  Scaler embedding_scaler;
  Scaler temperature_scaler;
  LipschitzLinear embedding;  ///< D -> 96
  LipschitzLinear mixture1;   ///< 98 -> 96
  LipschitzLinear mixture2;   ///< 96 -> 96
  LipschitzLinear property1;  ///< 96 -> 96
  LipschitzLinear property2;  ///< 96 -> 1, no activation

  static ModelParams init(int D, std::uint64_t seed);

  std::array<LipschitzLinear*, 5> layers();
  std::array<const LipschitzLinear*, 5> layers() const;
  /// 15 slots: (W_raw, bias, c_star) per layer in network order.
  std::vector<ParamSlot> slots();
  std::size_t parameter_count() const;
};

/// prod_l softplus(c*_l) over all five layers; biases do not enter.
double model_lipschitz_product(const ModelParams& params);

// --- value-level building blocks ---------------------------------------------

/// theta rows for raw embedding rows.
ad::Matrix embed_and_refine(const ModelParams& params, const ad::Matrix& embeddings);

/// R_ij = exp(-100 |theta_i - theta_j|^2).
ad::Matrix similarity_matrix(const ad::Matrix& theta);

struct PairProjection {
  int i = 0;
  int j = 0;
  double xt_i = 0.0;
  double xt_j = 0.0;
  double X_i = 0.0;
  double X_j = 0.0;
};

/// Lumped mole fractions and Muggianu projection for every pair i < j.
std::vector<PairProjection> lump_and_project(std::span<const double> x, const ad::Matrix& R);

/// q_ij for one pair from refined embeddings (value only).
double binary_interaction(const ModelParams& params, const ad::Vector& theta_i, const ad::Vector& theta_j,
                          double X_i, double T_scaled, double R_ij);

/// g^E/RT by a literal pair loop; reference for the batched path.
double excess_gibbs_reference(const ModelParams& params, const ad::Matrix& embeddings, std::span<const double> x,
                              double T);

// --- batched tape evaluation ------------------------------------------------

/// Components index rows of the embedding matrix handed to the Evaluator.
struct StateQuery {
  std::vector<int> comps;
  std::vector<double> x;
  double T = 298.15;
};

struct CurveQuery {
  int comp1 = 0;
  int comp2 = 1;
  double T = 298.15;
};

struct GammaOutput {
  ad::Var ln_gamma;          ///< (sum of N) x 1, states in query order
  ad::Var gE;                ///< states x 1
  std::vector<int> offsets;  ///< first ln_gamma row of each state
};

struct CurveOutput {
  ad::Var dgmix;  ///< curves x 101, endpoints exactly 0
  ad::Var S;      ///< curves x 99, curvature at the interior grid points
};

class Evaluator {
 public:
  /// `embeddings` holds one raw embedding per row. With `trainable` the
  /// parameters are tape leaves.
  Evaluator(ad::Tape& tape, const ModelParams& params, const ad::Matrix& embeddings, bool trainable = false);

  GammaOutput gamma(std::span<const StateQuery> states);
  CurveOutput curves(std::span<const CurveQuery> curves);

  ad::Var theta() const { return theta_; }
  ad::Var lipschitz_product() const { return lipschitz_; }
  /// Leaves in ModelParams::slots() order (empty unless trainable).
  const std::vector<ad::Var>& leaves() const { return leaves_; }
  /// Writes the advanced power-iteration vectors into `params` (training).
  void commit_power_iterations(ModelParams& params) const;

  struct Row {
    std::array<int, kMaxComponents> comps{};
    int n = 0;
    std::array<double, kMaxComponents> x{};
    std::array<double, kMaxComponents> dx{};
    double T_scaled = 0.0;
  };
  struct RowDuals {
    ad::Var v;
    ad::Var d1;
    ad::Var d2;  ///< invalid unless requested
  };
  /// g^E/RT along one composition direction per row.
  RowDuals evaluate_rows(const std::vector<Row>& rows, bool second);

 private:
  ad::Tape* tape_;
  const ModelParams* params_;
  BoundLayer emb_, mix1_, mix2_, prop1_, prop2_;
  ad::Var theta_;
  ad::Var P_;    ///< theta W1_theta^T, components x 96
  ad::Var w1x_;  ///< 1 x 96
  ad::Var w1T_;  ///< 1 x 96
  ad::Var lipschitz_;
  std::vector<ad::Var> leaves_;
};

// --- convenience wrappers -----------------------------------------------------

struct Prediction {
  double gE = 0.0;
  std::vector<double> ln_gamma;
};

/// ln gamma and g^E/RT of one mixture. Throws DataError for N < 2.
Prediction activity_coefficients(const ModelParams& params, const ad::Matrix& embeddings, std::span<const double> x,
                                 double T);

/// dg_mix/RT of a binary on the standard grid.
thermo::DGmixCurve dgmix_grid(const ModelParams& params, const ad::Vector& e1, const ad::Vector& e2, double T);

/// Curvature of dg_mix/RT on the 99 interior grid points.
std::vector<double> stability_curvature(const ModelParams& params, const ad::Vector& e1, const ad::Vector& e2, double T);

}  // namespace gibbsnet::hanna
