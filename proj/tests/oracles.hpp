// SPDX-License-Identifier: Apache-2.0
//
// Closed-form binary models and a bisection binodal shared by several tests.
#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <random>

#include "gibbsnet/cem.hpp"

namespace gibbsnet::test {

using cem::BinaryModel;

// Lower binodal branch of the symmetric one-parameter Margules model:
// ln(x/(1-x)) + A(1-2x) = 0 on (0, 1/2).
inline double margules_binodal_bisection(double A) {
  auto f = [A](double x) { return std::log(x / (1.0 - x)) + A * (1.0 - 2.0 * x); };
  double lo = 1e-300;
  double hi = 0.5 - 0.5 * std::sqrt(std::max(0.0, 1.0 - 2.0 / A));  // spinodal, f > 0 there
  for (int it = 0; it < 400 && hi - lo > 1e-17; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline BinaryModel margules(std::function<double(double)> A_of_T) {
  BinaryModel m;
  m.gE = [A_of_T](double x1, double T) { return thermo::margules_gE(A_of_T(T), x1); };
  m.ln_gamma = [A_of_T](double x1, double T) { return thermo::margules_ln_gamma(A_of_T(T), x1); };
  return m;
}

inline BinaryModel margules_const(double A) {
  return margules([A](double) { return A; });
}

inline BinaryModel nrtl_model(const thermo::NrtlParams& p) {
  BinaryModel m;
  m.gE = [p](double x1, double T) { return thermo::nrtl_gE(p, {x1, 1.0 - x1}, T); };
  m.ln_gamma = [p](double x1, double T) {
    const auto g = thermo::nrtl_ln_gamma(p, {x1, 1.0 - x1}, T).ln_gamma;
    return std::array<double, 2>{g[0], g[1]};
  };
  return m;
}

inline thermo::NrtlParams random_binary_nrtl(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ua(-1.0, 4.0);
  std::uniform_real_distribution<double> ual(0.2, 0.47);
  thermo::NrtlParams p{ad::Matrix::Zero(2, 2), ad::Matrix::Zero(2, 2), ad::Matrix::Zero(2, 2)};
  p.a(0, 1) = ua(rng);
  p.a(1, 0) = ua(rng);
  p.alpha(0, 1) = p.alpha(1, 0) = ual(rng);
  return p;
}

}  // namespace gibbsnet::test
