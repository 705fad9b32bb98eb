// SPDX-License-Identifier: Apache-2.0
#include "gibbsnet/cem.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace gibbsnet::cem {

namespace {

// True for a clockwise turn o -> a -> b, with rounding-level turns counted as
// collinear so that sampled affine pieces keep all their points.
bool right_turn(double ox, double oy, double ax, double ay, double bx, double by) {
  const double l = (ax - ox) * (by - oy);
  const double r = (ay - oy) * (bx - ox);
  return l - r < -1e-13 * (std::abs(l) + std::abs(r));
}

// ln a_i = ln x_i + ln g_i.
std::array<double, 2> ln_activity(const BinaryModel& m, double x1, double T) {
  const auto lg = m.ln_gamma(x1, T);
  return {std::log(x1) + lg[0], std::log(1.0 - x1) + lg[1]};
}

std::array<double, 2> residual(const BinaryModel& m, double T, double lo, double hi) {
  const auto a = ln_activity(m, lo, T);
  const auto b = ln_activity(m, hi, T);
  return {a[0] - b[0], a[1] - b[1]};
}

std::array<double, 2> d_ln_activity(const BinaryModel& m, double x1, double T, double h) {
  const double step = std::min({h, 0.5 * x1, 0.5 * (1.0 - x1)});
  const auto p = ln_activity(m, x1 + step, T);
  const auto q = ln_activity(m, x1 - step, T);
  return {(p[0] - q[0]) / (2.0 * step), (p[1] - q[1]) / (2.0 * step)};
}

double norm_inf(const std::array<double, 2>& r) { return std::max(std::abs(r[0]), std::abs(r[1])); }

}  // namespace

std::vector<int> lower_convex_envelope(std::span<const double> x, std::span<const double> g) {
  if (x.size() != g.size()) throw DataError("hull: coordinate lengths differ");
  if (x.size() < 2) throw DataError("hull needs at least two points");
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (!(x[i] > x[i - 1])) throw DataError("hull: x must be strictly increasing");
  }
  std::vector<int> hull;
  hull.reserve(x.size());
  for (int i = 0; i < static_cast<int>(x.size()); ++i) {
    while (hull.size() >= 2) {
      const int o = hull[hull.size() - 2];
      const int a = hull.back();
      if (right_turn(x[o], g[o], x[a], g[a], x[i], g[i])) {
        hull.pop_back();
      } else {
        break;
      }
    }
    hull.push_back(i);
  }
  return hull;
}

std::vector<BinaryPhaseSplit> detect_gaps(const thermo::DGmixCurve& curve) {
  std::array<double, thermo::kGridPoints> xs{};
  for (int d = 0; d < thermo::kGridPoints; ++d) xs[d] = thermo::grid_x(d);
  const auto hull = lower_convex_envelope(xs, curve.values);

  std::vector<BinaryPhaseSplit> out;
  for (std::size_t k = 0; k + 1 < hull.size(); ++k) {
    const int lo = hull[k];
    const int hi = hull[k + 1];
    if (hi - lo < 2) continue;
    const double slope = (curve.values[hi] - curve.values[lo]) / (xs[hi] - xs[lo]);
    double excess = 0.0;
    for (int d = lo + 1; d < hi; ++d) {
      excess = std::max(excess, curve.values[d] - (curve.values[lo] + slope * (xs[d] - xs[lo])));
    }
    if (excess <= 1e-12) continue;
    BinaryPhaseSplit s;
    s.lo_index = std::max(lo, 1);
    s.hi_index = std::min(hi, thermo::kGridPoints - 2);
    if (s.hi_index <= s.lo_index) continue;
    s.x1_lo = xs[s.lo_index];
    s.x1_hi = xs[s.hi_index];
    out.push_back(s);
  }
  return out;
}

double isoactivity_residual(const BinaryModel& model, double T, const BinaryPhaseSplit& split) {
  return norm_inf(residual(model, T, split.x1_lo, split.x1_hi));
}

BinaryPhaseSplit refine_common_tangent(const BinaryModel& model, double T, const BinaryPhaseSplit& init,
                                       const RefineOptions& options) {
  double lo = init.x1_lo;
  double hi = init.x1_hi;
  if (!(0.0 < lo && lo < hi && hi < 1.0)) throw NumericalError("no stable split");
  auto r = residual(model, T, lo, hi);
  for (int it = 0; it < options.max_iterations; ++it) {
    if (!std::isfinite(r[0]) || !std::isfinite(r[1])) break;
    if (norm_inf(r) < options.tolerance) {
      BinaryPhaseSplit out;
      out.x1_lo = lo;
      out.x1_hi = hi;
      out.refined = true;
      return out;
    }
    const auto da = d_ln_activity(model, lo, T, options.fd_step);
    const auto db = d_ln_activity(model, hi, T, options.fd_step);
    // J = [[da1, -db1], [da2, -db2]]
    const double det = -da[0] * db[1] + db[0] * da[1];
    if (!std::isfinite(det) || std::abs(det) < 1e-300) break;
    const double step_lo = (-db[1] * -r[0] + db[0] * -r[1]) / det;
    const double step_hi = (-da[1] * -r[0] + da[0] * -r[1]) / det;

    // Damp so that 0 < lo < hi < 1 holds and the residual decreases.
    double t = 1.0;
    const double current = norm_inf(r);
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
      const double nlo = lo + t * step_lo;
      const double nhi = hi + t * step_hi;
      if (!(nlo > 0.0 && nhi < 1.0 && nlo < nhi)) continue;
      const auto nr = residual(model, T, nlo, nhi);
      if (std::isfinite(nr[0]) && std::isfinite(nr[1]) && norm_inf(nr) < current) {
        lo = nlo;
        hi = nhi;
        r = nr;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (current < 1e3 * options.tolerance) {
        BinaryPhaseSplit out{lo, hi, true, -1, -1};
        return out;
      }
      break;
    }
    if (hi - lo < 1e-6) break;
  }
  throw NumericalError("no stable split");
}

BinodalScan binodal_scan(const BinaryModel& model, std::span<const double> T_list) {
  BinodalScan scan;
  for (std::size_t k = 1; k < T_list.size(); ++k) {
    if (!(T_list[k] > T_list[k - 1])) throw DataError("binodal scan temperatures must be sorted");
  }
  for (double T : T_list) {
    const auto curve = thermo::delta_g_mix_curve(model.gE, T);
    auto gaps = detect_gaps(curve);
    for (auto& g : gaps) {
      try {
        const auto refined = refine_common_tangent(model, T, g);
        g.x1_lo = refined.x1_lo;
        g.x1_hi = refined.x1_hi;
        g.refined = true;
      } catch (const NumericalError&) {
        g.refined = false;
      }
    }
    scan.T.push_back(T);
    scan.splits.push_back(std::move(gaps));
  }
  for (std::size_t k = 0; k + 1 < scan.T.size(); ++k) {
    const bool a = !scan.splits[k].empty();
    const bool b = !scan.splits[k + 1].empty();
    if (a && !b) scan.consolute.push_back({scan.T[k], scan.T[k + 1], true});
    if (!a && b) scan.consolute.push_back({scan.T[k + 1], scan.T[k], false});
  }
  return scan;
}

void write_binodal_csv(const BinodalScan& scan, std::ostream& out) {
  out << "T,x1_lo,x1_hi,refined\n";
  out << std::setprecision(17);
  for (std::size_t k = 0; k < scan.T.size(); ++k) {
    for (const auto& s : scan.splits[k]) {
      out << scan.T[k] << ',' << s.x1_lo << ',' << s.x1_hi << ',' << (s.refined ? 1 : 0) << '\n';
    }
  }
}

std::optional<BinaryPhaseSplit> outermost(const std::vector<BinaryPhaseSplit>& splits) {
  if (splits.empty()) return std::nullopt;
  BinaryPhaseSplit s = splits.front();
  for (const auto& o : splits) {
    if (o.x1_lo < s.x1_lo) {
      s.x1_lo = o.x1_lo;
      s.lo_index = o.lo_index;
    }
    if (o.x1_hi > s.x1_hi) {
      s.x1_hi = o.x1_hi;
      s.hi_index = o.hi_index;
    }
    s.refined = s.refined && o.refined;
  }
  return s;
}

}  // namespace gibbsnet::cem
