// SPDX-License-Identifier: Apache-2.0
//
// Classical liquid-phase thermodynamics: Antoine vapor pressures, the
// extended Raoult's law, Gibbs energy of mixing, stability scans and the
// Margules / NRTL oracle models.
//
// Unit convention: log10 Antoine form, pressure in kPa, temperature in K.
#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gibbsnet/autodiff.hpp"
#include "gibbsnet/error.hpp"

namespace gibbsnet::thermo {

using ComponentId = std::string;

inline constexpr int kGridPoints = 101;
inline constexpr double kGridStep = 0.01;

struct AntoineCoefficients {
  ComponentId component_id;
  double A = 0.0;
  double B = 0.0;
  double C = 0.0;
  double T_min = 0.0;
  double T_max = 0.0;
};

struct VaporPressure {
  double p_kpa = 0.0;
  bool out_of_range = false;
};

/// p_s = 10^(A - B/(C + T)). Throws NumericalError("antoine singularity")
/// when C + T <= 0; flags (but still evaluates) temperatures outside
/// [T_min, T_max].
VaporPressure antoine_vapor_pressure(const AntoineCoefficients& coeffs, double T);

std::vector<AntoineCoefficients> load_antoine(const std::filesystem::path& path);
void save_antoine(const std::vector<AntoineCoefficients>& coeffs, const std::filesystem::path& path);

/// gamma_i = p y_i / (p_s_i x_i).
double gamma_from_vle(double p, double y, double p_sat, double x);

struct MixtureState {
  std::vector<ComponentId> components;
  std::vector<double> x;
  double T = 298.15;

  std::size_t size() const { return x.size(); }
  /// Throws DataError on N < 2, negative fractions, |sum - 1| > 1e-12, T <= 0.
  void validate() const;
};

struct GammaVector {
  std::vector<double> ln_gamma;
};

/// Activity coefficients from the composition gradient of
/// g^E/RT taken in the first N-1 mole fractions (x_N dependent):
/// ln g_i = g + dg_i - sum_j x_j dg_j (i < N), ln g_N = g - sum_j x_j dg_j.
std::vector<double> ln_gamma_from_gradient(double gE, std::span<const double> dgE_free,
                                           std::span<const double> x);

/// Uniform binary composition grid at 0, 0.01, ..., 1.
double grid_x(int d);

struct DGmixCurve {
  std::array<double, kGridPoints> values{};
  double T = 0.0;

  DGmixCurve reversed() const;
};

/// 0 ln 0 := 0 (explicit branch below 1e-300).
double x_ln_x(double x);

using BinaryGe = std::function<double(double x1, double T)>;

/// g^E/RT plus ideal mixing on the 101-point grid; endpoints exactly 0.
DGmixCurve delta_g_mix_curve(const BinaryGe& gE, double T);

/// g^E/RT of a binary written over second-order duals in x1.
using DualBinaryGe = std::function<ad::Dual2(ad::Tape&, const ad::Dual2& x1, double T)>;

struct StabilityScan {
  std::vector<double> x;  ///< interior grid compositions
  std::vector<double> S;  ///< (1/RT) d2(dg_mix)/dx1^2
  double min_S = 0.0;
  bool unstable() const { return min_S < 0.0; }
};

/// Curvature of dg_mix/RT on the interior grid points (endpoints excluded,
/// the ideal term diverges there).
StabilityScan stability_scan(const DualBinaryGe& gE, double T);

// --- Margules (one parameter) ----------------------------------------------

double margules_gE(double A, double x1);
std::array<double, 2> margules_ln_gamma(double A, double x1);
DualBinaryGe margules_dual(std::function<double(double T)> A_of_T);

// --- NRTL ------------------------------------------------------------------

/// tau_ij = a_ij + b_ij / T, G_ij = exp(-alpha_ij tau_ij). Diagonals are
/// zero; alpha is symmetric.
struct NrtlParams {
  ad::Matrix a;
  ad::Matrix b;
  ad::Matrix alpha;

  std::size_t size() const { return static_cast<std::size_t>(a.rows()); }
  void validate() const;
  ad::Matrix tau(double T) const;
  /// Parameters of the sub-mixture formed by `idx`.
  NrtlParams subset(std::span<const int> idx) const;
};

/// g^E/RT for a general scalar type (double, ad::Var, ad::Dual2).
template <class Scalar, class XVec>
Scalar nrtl_ge_generic(const ad::Matrix& tau, const ad::Matrix& alpha, const XVec& x) {
  const std::size_t n = x.size();
  Scalar total = x[0] * 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Scalar num = x[0] * 0.0;
    Scalar den = x[0] * 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double G = std::exp(-alpha(j, i) * tau(j, i));
      num = num + x[j] * (tau(j, i) * G);
      den = den + x[j] * G;
    }
    total = total + x[i] * (num / den);
  }
  return total;
}

double nrtl_gE(const NrtlParams& p, const std::vector<double>& x, double T);
/// Closed-form multi-component NRTL activity coefficients.
GammaVector nrtl_ln_gamma(const NrtlParams& p, const std::vector<double>& x, double T);
/// Same quantity obtained by reverse-mode differentiation of nrtl_gE and the
/// ln-gamma identity; used to cross-check the closed form.
GammaVector nrtl_ln_gamma_autodiff(const NrtlParams& p, const std::vector<double>& x, double T);
/// Binary NRTL g^E/RT over duals, for stability scans.
DualBinaryGe nrtl_binary_dual(const NrtlParams& p);

// --- VLE -------------------------------------------------------------------

/// ln gamma for a composition at temperature T.
using LnGammaFn = std::function<std::vector<double>(const std::vector<double>& x, double T)>;

struct BubblePoint {
  double p = 0.0;
  std::vector<double> y;
};

/// p = sum x_i g_i p_s_i, y_i = x_i g_i p_s_i / p.
BubblePoint bubble_point(const LnGammaFn& ln_gamma, std::span<const AntoineCoefficients> antoine, double T,
                         const std::vector<double>& x);

struct PxyPoint {
  double x1 = 0.0;
  double p = 0.0;  ///< kPa
  double y1 = 0.0;
};

/// Isothermal bubble-point line of a binary on the 101-point grid.
std::vector<PxyPoint> isothermal_pxy(const LnGammaFn& ln_gamma, std::span<const AntoineCoefficients> antoine,
                                     double T);
/// Header "x1,p_kPa,y1", doubles printed round-trip exact.
void write_pxy_csv(std::span<const PxyPoint> rows, std::ostream& out);

}  // namespace gibbsnet::thermo
