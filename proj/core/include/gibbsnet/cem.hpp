// SPDX-License-Identifier: Apache-2.0
//
// Binary convex envelope method: miscibility gaps are segments of the lower
// convex hull of the sampled dg_mix/RT curve that bridge non-convex regions.
// Grid answers are sharpened by a damped Newton solve of the isoactivity
// conditions x_i' g_i' = x_i'' g_i''.
#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "gibbsnet/thermo.hpp"

namespace gibbsnet::cem {

struct BinaryPhaseSplit {
  double x1_lo = 0.0;  ///< x1' (lean phase)
  double x1_hi = 0.0;  ///< x1'' (rich phase), always > x1_lo
  bool refined = false;
  int lo_index = -1;  ///< hull vertex indices of the grid answer, -1 if unknown
  int hi_index = -1;
};

/// Lower hull of points sorted by strictly increasing x (monotone chain).
/// Collinear points are kept. Throws DataError for fewer than two points or
/// unsorted input.
std::vector<int> lower_convex_envelope(std::span<const double> x, std::span<const double> g);

/// Hull segments that skip at least one grid point and lie below the curve by
/// more than 1e-12. Hull vertices on the pure-component endpoints are moved to
/// the neighbouring interior grid point so that 0 < x1_lo < x1_hi < 1.
std::vector<BinaryPhaseSplit> detect_gaps(const thermo::DGmixCurve& curve);

struct BinaryModel {
  std::function<double(double x1, double T)> gE;  ///< g^E/RT
  std::function<std::array<double, 2>(double x1, double T)> ln_gamma;
};

struct RefineOptions {
  int max_iterations = 100;
  double tolerance = 1e-12;
  double fd_step = 1e-7;
};

/// Damped Newton on the two isoactivity residuals in (x1', x1''). Throws
/// NumericalError("no stable split") on divergence or collapse of the two
/// phases.
BinaryPhaseSplit refine_common_tangent(const BinaryModel& model, double T, const BinaryPhaseSplit& init,
                                       const RefineOptions& options = {});

/// max_i |ln(x_i' g_i') - ln(x_i'' g_i'')|.
double isoactivity_residual(const BinaryModel& model, double T, const BinaryPhaseSplit& split);

struct ConsoluteBracket {
  double T_gap = 0.0;     ///< last temperature with a gap
  double T_no_gap = 0.0;  ///< first neighbouring temperature without one
  bool upper = true;      ///< UCST (gap closes on heating) or LCST
};

struct BinodalScan {
  std::vector<double> T;
  std::vector<std::vector<BinaryPhaseSplit>> splits;
  std::vector<ConsoluteBracket> consolute;
};

/// Gaps at every temperature in `T_list` (sorted ascending); refinement
/// failures fall back to the grid answer with refined = false.
BinodalScan binodal_scan(const BinaryModel& model, std::span<const double> T_list);

/// CSV rows "T,x1_lo,x1_hi,refined" for every split.
void write_binodal_csv(const BinodalScan& scan, std::ostream& out);

/// Outermost compositions over all gaps (multi-gap curves collapse to one).
std::optional<BinaryPhaseSplit> outermost(const std::vector<BinaryPhaseSplit>& splits);

}  // namespace gibbsnet::cem
