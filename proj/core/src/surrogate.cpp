// SPDX-License-Identifier: Apache-2.0
#include "gibbsnet/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "binary_io.hpp"

namespace gibbsnet::surrogate {

using ad::Matrix;
using ad::Var;

namespace {

constexpr std::array<int, kLayers + 1> kWidths{thermo::kGridPoints, kHidden, kHidden, kHidden, 2};

std::vector<std::int32_t> reversed_columns(int n) {
  std::vector<std::int32_t> idx(n);
  for (int k = 0; k < n; ++k) idx[k] = n - 1 - k;
  return idx;
}

Matrix sigmoid_value(const Matrix& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

Matrix raw_value(const SurrogateParams& p, const Matrix& g) {
  Matrix h = g;
  for (int l = 0; l < kLayers; ++l) {
    Matrix z = h * p.layers[l].W.transpose();
    z.rowwise() += p.layers[l].b.row(0);
    h = l + 1 < kLayers ? Matrix(z.cwiseMax(0.0)) : sigmoid_value(z);
  }
  return h;
}

}  // namespace

SurrogateParams SurrogateParams::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SurrogateParams p;
  for (int l = 0; l < kLayers; ++l) {
    const int in = kWidths[l], out = kWidths[l + 1];
    std::uniform_real_distribution<double> u(-1.0 / std::sqrt(in), 1.0 / std::sqrt(in));
    p.layers[l].W = Matrix::NullaryExpr(out, in, [&]() { return u(rng); });
    p.layers[l].b = Matrix::NullaryExpr(1, out, [&]() { return u(rng); });
  }
  return p;
}

std::vector<ParamSlot> SurrogateParams::slots() {
  std::vector<ParamSlot> s;
  for (auto& l : layers) {
    s.push_back({l.W.data(), l.W.size(), true});
    s.push_back({l.b.data(), l.b.size(), true});
  }
  return s;
}

Network::Network(ad::Tape& tape, const SurrogateParams& params, bool trainable) : tape_(&tape) {
  for (int l = 0; l < kLayers; ++l) {
    Var W = trainable ? tape.variable(params.layers[l].W) : tape.constant(params.layers[l].W);
    b_[l] = trainable ? tape.variable(params.layers[l].b) : tape.constant(params.layers[l].b);
    if (trainable) {
      leaves_.push_back(W);
      leaves_.push_back(b_[l]);
    }
    Wt_[l] = ad::transpose(W);
  }
}

Var Network::raw(Var curves) const {
  Var h = curves;
  for (int l = 0; l < kLayers; ++l) {
    Var z = ad::add_row(ad::matmul(h, Wt_[l]), b_[l]);
    h = l + 1 < kLayers ? ad::relu(z) : ad::sigmoid(z);
  }
  return h;
}

Var Network::forward(Var curves) const {
  Var f = raw(curves);
  Var f_rev = raw(ad::permute_cols(curves, reversed_columns(thermo::kGridPoints)));
  // reverse_map(a, b) = (1 - b, 1 - a)
  Var avg = 0.5 * (f + (1.0 - ad::permute_cols(f_rev, {1, 0})));
  Var a = ad::cols(avg, 0, 1), b = ad::cols(avg, 1, 1);
  return ad::hcat(ad::minimum(a, b), ad::maximum(a, b));
}

Matrix predict(const SurrogateParams& params, const Matrix& curves) {
  if (curves.cols() != thermo::kGridPoints) throw DataError("surrogate input must have 101 columns");
  const Matrix f = raw_value(params, curves);
  const Matrix f_rev = raw_value(params, curves.rowwise().reverse());
  Matrix avg(curves.rows(), 2);
  avg.col(0) = 0.5 * (f.col(0).array() + (1.0 - f_rev.col(1).array()));
  avg.col(1) = 0.5 * (f.col(1).array() + (1.0 - f_rev.col(0).array()));
  Matrix out(curves.rows(), 2);
  out.col(0) = avg.col(0).cwiseMin(avg.col(1));
  out.col(1) = avg.col(0).cwiseMax(avg.col(1));
  return out;
}

cem::BinaryPhaseSplit predict(const SurrogateParams& params, const thermo::DGmixCurve& curve) {
  const Matrix out = predict(params, curves_matrix(std::span(&curve, 1)));
  cem::BinaryPhaseSplit s;
  s.x1_lo = out(0, 0);
  s.x1_hi = out(0, 1);
  return s;
}

Matrix curves_matrix(std::span<const thermo::DGmixCurve> curves) {
  Matrix m(static_cast<Eigen::Index>(curves.size()), thermo::kGridPoints);
  for (std::size_t r = 0; r < curves.size(); ++r)
    for (int d = 0; d < thermo::kGridPoints; ++d) m(static_cast<Eigen::Index>(r), d) = curves[r].values[d];
  return m;
}

LabelResult generate_labels(std::span<const LabelRequest> requests) {
  LabelResult res;
  for (const auto& req : requests) {
    const auto curve = thermo::delta_g_mix_curve(req.model.gE, req.T);
    const auto gap = cem::outermost(cem::detect_gaps(curve));
    if (!gap) {
      ++res.dropped_no_gap;
      continue;
    }
    try {
      const auto split = cem::refine_common_tangent(req.model, req.T, *gap);
      res.samples.push_back({curve, split, req.system_id});
    } catch (const NumericalError&) {
      ++res.dropped_unrefined;
    }
  }
  return res;
}

namespace {

Matrix labels_matrix(std::span<const Sample> samples) {
  Matrix y(static_cast<Eigen::Index>(samples.size()), 2);
  for (std::size_t r = 0; r < samples.size(); ++r) {
    y(static_cast<Eigen::Index>(r), 0) = samples[r].label.x1_lo;
    y(static_cast<Eigen::Index>(r), 1) = samples[r].label.x1_hi;
  }
  return y;
}

Matrix sample_curves(std::span<const Sample> samples) {
  Matrix m(static_cast<Eigen::Index>(samples.size()), thermo::kGridPoints);
  for (std::size_t r = 0; r < samples.size(); ++r)
    for (int d = 0; d < thermo::kGridPoints; ++d) m(static_cast<Eigen::Index>(r), d) = samples[r].curve.values[d];
  return m;
}

}  // namespace

double mean_squared_error(const SurrogateParams& params, std::span<const Sample> samples) {
  if (samples.empty()) return 0.0;
  return (predict(params, sample_curves(samples)) - labels_matrix(samples)).array().square().mean();
}

double mean_absolute_error(const SurrogateParams& params, std::span<const Sample> samples) {
  if (samples.empty()) return 0.0;
  return (predict(params, sample_curves(samples)) - labels_matrix(samples)).array().abs().mean();
}

TrainResult train_surrogate(std::span<const Sample> train, std::span<const Sample> val, const TrainConfig& config) {
  if (train.empty()) throw DataError("surrogate training set is empty");
  if (config.epochs < 1 || config.batch_size < 1) throw UsageError("surrogate epochs and batch size must be positive");
  const Matrix X = sample_curves(train);
  const Matrix Y = labels_matrix(train);
  const auto n = static_cast<Eigen::Index>(train.size());
  const long batches = (n + config.batch_size - 1) / config.batch_size;
  const long total = batches * config.epochs;

  TrainResult res;
  SurrogateParams params = SurrogateParams::init(config.seed);
  optim::AdamW opt(params.slots(), {.weight_decay = config.weight_decay});
  std::mt19937_64 rng(config.seed ^ 0x5eedULL);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  long step = 0;
  ad::Tape tape;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sse = 0.0;
    for (long b = 0; b < batches; ++b) {
      const Eigen::Index start = b * config.batch_size;
      const Eigen::Index rows = std::min<Eigen::Index>(config.batch_size, n - start);
      Matrix xb(rows, thermo::kGridPoints), yb(rows, 2);
      for (Eigen::Index r = 0; r < rows; ++r) {
        xb.row(r) = X.row(order[start + r]);
        yb.row(r) = Y.row(order[start + r]);
      }
      tape.reset();
      Network net(tape, params, true);
      Var diff = net.forward(tape.constant(std::move(xb))) - tape.constant(std::move(yb));
      Var loss = ad::sum(ad::square(diff)) / static_cast<double>(rows * 2);
      sse += loss.scalar() * static_cast<double>(rows * 2);
      tape.backward(loss);
      std::vector<Matrix> grads;
      for (const auto& leaf : net.leaves()) grads.push_back(tape.adjoint(leaf));
      opt.step(grads, config.schedule.lr(step++, total));
    }
    res.train_mse.push_back(sse / static_cast<double>(n * 2));
    const double v = val.empty() ? res.train_mse.back() : mean_squared_error(params, val);
    if (!std::isfinite(v)) throw NumericalError("surrogate training diverged at epoch " + std::to_string(epoch));
    res.val_mse.push_back(v);
    if (v < best) {
      best = v;
      res.best_epoch = epoch;
      res.params = params;
    }
  }
  return res;
}

void save_surrogate(const SurrogateParams& params, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.bytes("SLLE", 4);
  w.u32(kSurrogateVersion);
  w.u32(kLayers);
  for (const auto& l : params.layers) {
    w.u32(static_cast<std::uint32_t>(l.W.rows()));
    w.u32(static_cast<std::uint32_t>(l.W.cols()));
  }
  for (const auto& l : params.layers) {
    w.matrix(l.W);
    w.matrix(l.b);
  }
  w.finish(path);
}

SurrogateParams load_surrogate(const std::filesystem::path& path) {
  detail::ByteReader r(path);
  r.expect_magic("SLLE");
  const auto version = r.u32();
  if (version != kSurrogateVersion)
    throw DataError("unsupported surrogate checkpoint version " + std::to_string(version));
  if (r.u32() != kLayers) throw DataError("surrogate checkpoint layer count mismatch");
  for (int l = 0; l < kLayers; ++l) {
    const auto out = r.u32(), in = r.u32();
    if (static_cast<int>(out) != kWidths[l + 1] || static_cast<int>(in) != kWidths[l])
      throw DataError("surrogate checkpoint layer shape mismatch");
  }
  SurrogateParams p;
  for (int l = 0; l < kLayers; ++l) {
    p.layers[l].W = r.matrix(kWidths[l + 1], kWidths[l]);
    p.layers[l].b = r.matrix(1, kWidths[l + 1]);
  }
  if (!r.done()) throw DataError("trailing bytes in surrogate checkpoint");
  return p;
}

}  // namespace gibbsnet::surrogate
