// SPDX-License-Identifier: Apache-2.0
#include "gibbsnet/thermo.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include "json.hpp"

namespace gibbsnet::thermo {

using nlohmann::json;

VaporPressure antoine_vapor_pressure(const AntoineCoefficients& c, double T) {
  if (c.C + T <= 0.0) throw NumericalError("antoine singularity");
  VaporPressure out;
  out.p_kpa = std::pow(10.0, c.A - c.B / (c.C + T));
  out.out_of_range = T < c.T_min || T > c.T_max;
  return out;
}

std::vector<AntoineCoefficients> load_antoine(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open Antoine file " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError("malformed Antoine file " + path.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw DataError("Antoine file must hold a JSON list");
  std::vector<AntoineCoefficients> out;
  for (const auto& rec : doc) {
    try {
      AntoineCoefficients c;
      c.component_id = rec.at("component_id").get<std::string>();
      c.A = rec.at("A").get<double>();
      c.B = rec.at("B").get<double>();
      c.C = rec.at("C").get<double>();
      c.T_min = rec.at("T_min").get<double>();
      c.T_max = rec.at("T_max").get<double>();
      if (!(c.T_min < c.T_max)) throw DataError("Antoine T_min >= T_max for " + c.component_id);
      out.push_back(std::move(c));
    } catch (const json::exception& e) {
      throw DataError(std::string("bad Antoine record: ") + e.what());
    }
  }
  return out;
}

void save_antoine(const std::vector<AntoineCoefficients>& coeffs, const std::filesystem::path& path) {
  json doc = json::array();
  for (const auto& c : coeffs) {
    doc.push_back({{"component_id", c.component_id},
                   {"A", c.A},
                   {"B", c.B},
                   {"C", c.C},
                   {"T_min", c.T_min},
                   {"T_max", c.T_max}});
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

double gamma_from_vle(double p, double y, double p_sat, double x) {
  if (x <= 0.0) throw DataError("infinite dilution; use ACI path");
  if (p_sat <= 0.0) throw DataError("non-positive vapor pressure");
  return p * y / (p_sat * x);
}

void MixtureState::validate() const {
  if (x.size() < 2) throw DataError("mixture needs at least two components");
  if (!components.empty() && components.size() != x.size()) {
    throw DataError("component list and mole fractions differ in length");
  }
  double total = 0.0;
  for (double xi : x) {
    if (!(xi >= 0.0)) throw DataError("negative mole fraction");
    total += xi;
  }
  if (std::abs(total - 1.0) > 1e-12) throw DataError("mole fractions do not sum to one");
  if (!(T > 0.0)) throw DataError("non-positive temperature");
}

std::vector<double> ln_gamma_from_gradient(double gE, std::span<const double> dgE_free,
                                           std::span<const double> x) {
  const std::size_t n = x.size();
  if (dgE_free.size() + 1 != n) throw DataError("gradient length must be N-1");
  double weighted = 0.0;
  for (std::size_t j = 0; j + 1 < n; ++j) weighted += x[j] * dgE_free[j];
  std::vector<double> out(n);
  for (std::size_t i = 0; i + 1 < n; ++i) out[i] = gE + dgE_free[i] - weighted;
  out[n - 1] = gE - weighted;
  return out;
}

double grid_x(int d) { return d == kGridPoints - 1 ? 1.0 : d * kGridStep; }

DGmixCurve DGmixCurve::reversed() const {
  DGmixCurve r;
  r.T = T;
  for (int d = 0; d < kGridPoints; ++d) r.values[d] = values[kGridPoints - 1 - d];
  return r;
}

double x_ln_x(double x) { return x < 1e-300 ? 0.0 : x * std::log(x); }

DGmixCurve delta_g_mix_curve(const BinaryGe& gE, double T) {
  DGmixCurve c;
  c.T = T;
  for (int d = 1; d + 1 < kGridPoints; ++d) {
    const double x1 = grid_x(d);
    c.values[d] = gE(x1, T) + x_ln_x(x1) + x_ln_x(1.0 - x1);
  }
  c.values.front() = 0.0;
  c.values.back() = 0.0;
  return c;
}

StabilityScan stability_scan(const DualBinaryGe& gE, double T) {
  StabilityScan out;
  out.min_S = std::numeric_limits<double>::infinity();
  for (int d = 1; d + 1 < kGridPoints; ++d) {
    const double x1 = grid_x(d);
    ad::Tape tape;
    ad::Dual2 g = ad::second_directional(tape, [&](const ad::Dual2& x) { return gE(tape, x, T); }, x1);
    const double s = g.d2.scalar() + 1.0 / (x1 * (1.0 - x1));
    out.x.push_back(x1);
    out.S.push_back(s);
    out.min_S = std::min(out.min_S, s);
  }
  return out;
}

double margules_gE(double A, double x1) { return A * x1 * (1.0 - x1); }

std::array<double, 2> margules_ln_gamma(double A, double x1) {
  const double x2 = 1.0 - x1;
  return {A * x2 * x2, A * x1 * x1};
}

DualBinaryGe margules_dual(std::function<double(double T)> A_of_T) {
  return [A_of_T = std::move(A_of_T)](ad::Tape&, const ad::Dual2& x1, double T) {
    return A_of_T(T) * (x1 * (1.0 - x1));
  };
}

void NrtlParams::validate() const {
  const auto n = a.rows();
  if (a.cols() != n || b.rows() != n || b.cols() != n || alpha.rows() != n || alpha.cols() != n) {
    throw DataError("NRTL parameter matrices must be square and equal-sized");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (a(i, i) != 0.0 || b(i, i) != 0.0) throw DataError("NRTL tau_ii must vanish");
    for (Eigen::Index j = 0; j < n; ++j) {
      if (alpha(i, j) != alpha(j, i)) throw DataError("NRTL alpha must be symmetric");
      if (i != j && !(alpha(i, j) >= 0.0 && alpha(i, j) <= 1.0)) throw DataError("NRTL alpha outside [0, 1]");
    }
  }
}

ad::Matrix NrtlParams::tau(double T) const { return a + b / T; }

NrtlParams NrtlParams::subset(std::span<const int> idx) const {
  const auto m = static_cast<Eigen::Index>(idx.size());
  NrtlParams s{ad::Matrix(m, m), ad::Matrix(m, m), ad::Matrix(m, m)};
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      s.a(i, j) = a(idx[i], idx[j]);
      s.b(i, j) = b(idx[i], idx[j]);
      s.alpha(i, j) = alpha(idx[i], idx[j]);
    }
  }
  return s;
}

double nrtl_gE(const NrtlParams& p, const std::vector<double>& x, double T) {
  return nrtl_ge_generic<double>(p.tau(T), p.alpha, x);
}

GammaVector nrtl_ln_gamma(const NrtlParams& p, const std::vector<double>& x, double T) {
  const std::size_t n = x.size();
  if (p.size() != n) throw DataError("NRTL size mismatch");
  const ad::Matrix tau = p.tau(T);
  ad::Matrix G(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) G(i, j) = std::exp(-p.alpha(i, j) * tau(i, j));

  // S_j = sum_k x_k G_kj, C_j = sum_m x_m tau_mj G_mj.
  std::vector<double> S(n, 0.0), C(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < n; ++k) {
      S[j] += x[k] * G(k, j);
      C[j] += x[k] * tau(k, j) * G(k, j);
    }
  }
  GammaVector out;
  out.ln_gamma.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = C[i] / S[i];
    for (std::size_t j = 0; j < n; ++j) v += x[j] * G(i, j) / S[j] * (tau(i, j) - C[j] / S[j]);
    out.ln_gamma[i] = v;
  }
  return out;
}

GammaVector nrtl_ln_gamma_autodiff(const NrtlParams& p, const std::vector<double>& x, double T) {
  const std::size_t n = x.size();
  ad::Tape tape;
  std::vector<ad::Var> free;
  std::vector<ad::Var> xs;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    free.push_back(tape.variable(x[i]));
    xs.push_back(free.back());
  }
  ad::Var last = tape.constant(1.0);
  for (const auto& f : free) last = last - f;
  xs.push_back(last);
  ad::Var g = nrtl_ge_generic<ad::Var>(p.tau(T), p.alpha, xs);
  const double gv = g.scalar();
  const std::vector<double> dg = ad::gradient(g, free);
  return GammaVector{ln_gamma_from_gradient(gv, dg, x)};
}

DualBinaryGe nrtl_binary_dual(const NrtlParams& p) {
  if (p.size() != 2) throw DataError("binary NRTL expected");
  return [p](ad::Tape&, const ad::Dual2& x1, double T) {
    const std::vector<ad::Dual2> xs = {x1, 1.0 - x1};
    return nrtl_ge_generic<ad::Dual2>(p.tau(T), p.alpha, xs);
  };
}

BubblePoint bubble_point(const LnGammaFn& ln_gamma, std::span<const AntoineCoefficients> antoine, double T,
                         const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (antoine.size() != n) throw DataError("Antoine set does not match composition");
  std::vector<double> lg = n == 1 ? std::vector<double>{0.0} : ln_gamma(x, T);
  std::vector<double> partial(n);
  for (std::size_t i = 0; i < n; ++i) {
    partial[i] = x[i] * std::exp(lg[i]) * antoine_vapor_pressure(antoine[i], T).p_kpa;
  }
  BubblePoint out;
  out.p = std::accumulate(partial.begin(), partial.end(), 0.0);
  out.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.y[i] = partial[i] / out.p;
  return out;
}

std::vector<PxyPoint> isothermal_pxy(const LnGammaFn& ln_gamma, std::span<const AntoineCoefficients> antoine,
                                     double T) {
  if (antoine.size() != 2) throw DataError("p-x-y needs Antoine coefficients for both components");
  std::vector<PxyPoint> rows;
  for (int d = 0; d < kGridPoints; ++d) {
    const double x1 = grid_x(d);
    const auto b = bubble_point(ln_gamma, antoine, T, {x1, 1.0 - x1});
    rows.push_back({x1, b.p, b.y[0]});
  }
  return rows;
}

void write_pxy_csv(std::span<const PxyPoint> rows, std::ostream& out) {
  char buf[96];
  out << "x1,p_kPa,y1\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", r.x1, r.p, r.y1);
    out << buf;
  }
}

}  // namespace gibbsnet::thermo
