// SPDX-License-Identifier: Apache-2.0
#include "gibbsnet/lipschitz.hpp"

#include <Eigen/SVD>

namespace gibbsnet {

using ad::Matrix;
using ad::Vector;

namespace {

Vector normalized(const Vector& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw NumericalError("power iteration on a zero weight");
  return v / n;
}

}  // namespace

LipschitzLinear LipschitzLinear::init(Eigen::Index in, Eigen::Index out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> uw(-bound, bound);
  std::normal_distribution<double> n01;
  LipschitzLinear l;
  l.W_raw = Matrix::NullaryExpr(out, in, [&]() { return uw(rng); });
  l.bias = Matrix::NullaryExpr(1, out, [&]() { return uw(rng); });
  l.c_star(0, 0) = kUnitCStar;
  Vector u = Vector::NullaryExpr(out, [&]() { return n01(rng); });
  l.u = power_iteration(l.W_raw, normalized(u), kWarmupIterations).u;
  return l;
}

PowerIterate power_iteration(const Matrix& W, const Vector& u0, int iterations) {
  PowerIterate p;
  p.u = u0;
  p.v = normalized(W.transpose() * p.u);
  for (int it = 0; it < iterations; ++it) {
    p.v = normalized(W.transpose() * p.u);
    p.u = normalized(W * p.v);
  }
  p.sigma = p.u.dot(W * p.v);
  return p;
}

double spectral_norm_exact(const Matrix& W) {
  Eigen::JacobiSVD<Matrix> svd(W);
  return svd.singularValues()(0);
}

Matrix scaled_weight(const LipschitzLinear& layer) {
  const auto p = power_iteration(layer.W_raw, layer.u, kPowerIterations);
  return layer.W_raw * (layer.lipschitz_bound() / p.sigma);
}

Matrix lipschitz_forward(const LipschitzLinear& layer, const Matrix& x) {
  Matrix y = x * scaled_weight(layer).transpose();
  y.rowwise() += layer.bias.row(0);
  return y;
}

BoundLayer bind(ad::Tape& tape, const LipschitzLinear& layer, bool trainable) {
  BoundLayer b;
  b.W_raw = trainable ? tape.variable(layer.W_raw) : tape.constant(layer.W_raw);
  b.bias = trainable ? tape.variable(layer.bias) : tape.constant(layer.bias);
  b.c_star = trainable ? tape.variable(layer.c_star) : tape.constant(layer.c_star);
  const auto p = power_iteration(layer.W_raw, layer.u, kPowerIterations);
  b.next_u = p.u;
  // sigma = u^T W v with u, v held fixed; d sigma / dW = u v^T.
  ad::Var uv = tape.constant(p.u * p.v.transpose());
  ad::Var sigma = ad::sum(b.W_raw * uv);
  b.W_scaled = b.W_raw * (ad::softplus(b.c_star) / sigma);
  b.Wt = ad::transpose(b.W_scaled);
  return b;
}

void append_slots(LipschitzLinear& layer, std::vector<ParamSlot>& slots) {
  slots.push_back({layer.W_raw.data(), layer.W_raw.size(), true});
  slots.push_back({layer.bias.data(), layer.bias.size(), true});
  slots.push_back({layer.c_star.data(), 1, false});
}

}  // namespace gibbsnet
