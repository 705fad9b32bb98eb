// SPDX-License-Identifier: Apache-2.0
#include "gibbsnet/hanna.hpp"

#include <map>
#include <numeric>
#include <random>

namespace gibbsnet::hanna {

using ad::Matrix;
using ad::Var;
using ad::Vector;

// --- scalers and parameters ---------------------------------------------------

Matrix Scaler::transform(const Matrix& rows) const {
  if (!fitted()) throw DataError("unfitted scaler");
  if (rows.cols() != mean.size()) throw DataError("scaler dimension mismatch");
  Matrix out = rows.rowwise() - mean.transpose();
  out.array().rowwise() /= std.transpose().array();
  return out;
}

double Scaler::transform(double value) const {
  if (!fitted()) throw DataError("unfitted scaler");
  if (mean.size() != 1) throw DataError("scaler dimension mismatch");
  return (value - mean(0)) / std(0);
}

Scaler Scaler::fit(const Matrix& rows) {
  if (rows.rows() == 0) throw DataError("cannot fit a scaler without samples");
  Scaler s;
  s.mean = rows.colwise().mean().transpose();
  const Matrix centred = rows.rowwise() - s.mean.transpose();
  s.std = (centred.array().square().colwise().sum() / static_cast<double>(rows.rows()))
              .sqrt()
              .transpose()
              .matrix()
              .cwiseMax(1e-8);
  return s;
}

ModelParams ModelParams::init(int D, std::uint64_t seed) {
  if (D <= 0) throw DataError("embedding dimension must be positive");
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.D = D;
  p.embedding = LipschitzLinear::init(D, kHidden, rng);
  p.mixture1 = LipschitzLinear::init(kHidden + 2, kHidden, rng);
  p.mixture2 = LipschitzLinear::init(kHidden, kHidden, rng);
  p.property1 = LipschitzLinear::init(kHidden, kHidden, rng);
  p.property2 = LipschitzLinear::init(kHidden, 1, rng);
  return p;
}

std::array<LipschitzLinear*, 5> ModelParams::layers() {
  return {&embedding, &mixture1, &mixture2, &property1, &property2};
}

std::array<const LipschitzLinear*, 5> ModelParams::layers() const {
  return {&embedding, &mixture1, &mixture2, &property1, &property2};
}

std::vector<ParamSlot> ModelParams::slots() {
  std::vector<ParamSlot> s;
  for (auto* l : layers()) append_slots(*l, s);
  return s;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto* l : layers()) n += static_cast<std::size_t>(l->W_raw.size() + l->bias.size() + 1);
  return n;
}

double model_lipschitz_product(const ModelParams& params) {
  double p = 1.0;
  for (const auto* l : params.layers()) p *= l->lipschitz_bound();
  return p;
}

// --- value-level path ---------------------------------------------------------

namespace {

Matrix silu_m(const Matrix& m) { return m.unaryExpr([](double v) { return ad::silu_value(v); }); }

Vector mixture_net(const ModelParams& p, const Vector& theta, double X, double Ts) {
  Matrix c(1, kHidden + 2);
  c.leftCols(kHidden) = theta.transpose();
  c(0, kHidden) = X;
  c(0, kHidden + 1) = Ts;
  const Matrix h = silu_m(lipschitz_forward(p.mixture1, c));
  return silu_m(lipschitz_forward(p.mixture2, h)).transpose();
}

}  // namespace

Matrix embed_and_refine(const ModelParams& params, const Matrix& embeddings) {
  if (embeddings.cols() != params.D) throw DataError("embedding dimension does not match the model");
  return silu_m(lipschitz_forward(params.embedding, params.embedding_scaler.transform(embeddings)));
}

Matrix similarity_matrix(const Matrix& theta) {
  const Eigen::Index n = theta.rows();
  Matrix R(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      R(i, j) = std::exp(-kSimilarityGamma * (theta.row(i) - theta.row(j)).squaredNorm());
    }
  }
  return R;
}

std::vector<PairProjection> lump_and_project(std::span<const double> x, const Matrix& R) {
  const int n = static_cast<int>(x.size());
  if (R.rows() != n || R.cols() != n) throw DataError("similarity matrix does not match composition");
  std::vector<double> xt(n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) xt[i] += x[j] * R(i, j);
  std::vector<PairProjection> out;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      // Same value as (1 + x~_i - x~_j) / 2, but exact for a binary with R = I.
      const double Xi = xt[i] + 0.5 * (1.0 - xt[i] - xt[j]);
      PairProjection p{i, j, xt[i], xt[j], Xi, 1.0 - Xi};
      out.push_back(p);
    }
  }
  return out;
}

double binary_interaction(const ModelParams& params, const Vector& theta_i, const Vector& theta_j, double X_i,
                          double T_scaled, double R_ij) {
  const Vector a = mixture_net(params, theta_i, X_i, T_scaled);
  const Vector b = mixture_net(params, theta_j, 1.0 - X_i, T_scaled);
  const Matrix h = silu_m(lipschitz_forward(params.property1, (a + b).transpose()));
  const double phi = lipschitz_forward(params.property2, h)(0, 0);
  return phi * (1.0 - R_ij);
}

double excess_gibbs_reference(const ModelParams& params, const Matrix& embeddings, std::span<const double> x,
                              double T) {
  const Matrix theta = embed_and_refine(params, embeddings);
  const Matrix R = similarity_matrix(theta);
  const double Ts = params.temperature_scaler.transform(T);
  double g = 0.0;
  for (const auto& p : lump_and_project(x, R)) {
    g += x[p.i] * x[p.j] *
         binary_interaction(params, theta.row(p.i).transpose(), theta.row(p.j).transpose(), p.X_i, Ts, R(p.i, p.j));
  }
  return g;
}

// --- batched tape path ----------------------------------------------------------

namespace {

struct D3 {
  Var v;
  Var d1;
  Var d2;
};

ad::SparseMatrix sparse_from(Eigen::Index rows, Eigen::Index cols, const std::vector<Eigen::Triplet<double>>& t) {
  ad::SparseMatrix m(rows, cols);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

}  // namespace

Evaluator::Evaluator(ad::Tape& tape, const ModelParams& params, const Matrix& embeddings, bool trainable)
    : tape_(&tape), params_(&params) {
  if (embeddings.cols() != params.D) throw DataError("embedding dimension does not match the model");
  emb_ = bind(tape, params.embedding, trainable);
  mix1_ = bind(tape, params.mixture1, trainable);
  mix2_ = bind(tape, params.mixture2, trainable);
  prop1_ = bind(tape, params.property1, trainable);
  prop2_ = bind(tape, params.property2, trainable);
  if (trainable) {
    for (const BoundLayer* b : {&emb_, &mix1_, &mix2_, &prop1_, &prop2_}) {
      leaves_.push_back(b->W_raw);
      leaves_.push_back(b->bias);
      leaves_.push_back(b->c_star);
    }
  }
  Var scaled = tape.constant(params.embedding_scaler.transform(embeddings));
  theta_ = ad::silu(ad::add_row(ad::matmul(scaled, emb_.Wt), emb_.bias));
  P_ = ad::matmul(theta_, ad::transpose(ad::cols(mix1_.W_scaled, 0, kHidden)));
  w1x_ = ad::transpose(ad::cols(mix1_.W_scaled, kHidden, 1));
  w1T_ = ad::transpose(ad::cols(mix1_.W_scaled, kHidden + 1, 1));
  lipschitz_ = ad::softplus(emb_.c_star) * ad::softplus(mix1_.c_star) * ad::softplus(mix2_.c_star) *
               ad::softplus(prop1_.c_star) * ad::softplus(prop2_.c_star);
}

void Evaluator::commit_power_iterations(ModelParams& params) const {
  const std::array<const BoundLayer*, 5> bound{&emb_, &mix1_, &mix2_, &prop1_, &prop2_};
  auto layers = params.layers();
  for (std::size_t k = 0; k < layers.size(); ++k) layers[k]->u = bound[k]->next_u;
}

Evaluator::RowDuals Evaluator::evaluate_rows(const std::vector<Row>& rows, bool second) {
  ad::Tape& tape = *tape_;
  const auto nrows = static_cast<Eigen::Index>(rows.size());
  if (nrows == 0) throw DataError("empty evaluation batch");

  // Pair rows: one per (row, i < j).
  struct PairRow {
    int row, pi, pj, up;
  };
  std::vector<PairRow> pairs;
  std::vector<int> row_start(rows.size() + 1, 0);
  std::map<std::pair<int, int>, int> unique;
  std::vector<std::int32_t> ua, ub;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    row_start[r] = static_cast<int>(pairs.size());
    const Row& row = rows[r];
    for (int i = 0; i < row.n; ++i) {
      for (int j = i + 1; j < row.n; ++j) {
        const auto key = std::minmax(row.comps[i], row.comps[j]);
        auto [it, fresh] = unique.try_emplace({key.first, key.second}, static_cast<int>(ua.size()));
        if (fresh) {
          ua.push_back(key.first);
          ub.push_back(key.second);
        }
        pairs.push_back({static_cast<int>(r), i, j, it->second});
      }
    }
  }
  row_start[rows.size()] = static_cast<int>(pairs.size());
  const auto npairs = static_cast<Eigen::Index>(pairs.size());
  const auto nunique = static_cast<Eigen::Index>(ua.size());

  Var diff = ad::gather_rows(theta_, ua) - ad::gather_rows(theta_, ub);
  Var R_unique = ad::exp(ad::row_norm2(diff) * -kSimilarityGamma);

  // X_i - 1/2 = (x~_i - x~_j) / 2 is linear in the similarity scores.
  Matrix cv(npairs, 1), cd(npairs, 1), Tcol(npairs, 1);
  Matrix wv(npairs, 1), wd1(npairs, 1), wd2(npairs, 1);
  std::vector<Eigen::Triplet<double>> tv, td;
  std::vector<std::int32_t> side_a(pairs.size()), side_b(pairs.size()), up(pairs.size());
  for (Eigen::Index p = 0; p < npairs; ++p) {
    const PairRow& pr = pairs[p];
    const Row& row = rows[pr.row];
    const int i = pr.pi, j = pr.pj;
    cv(p) = row.x[i] + 0.5 * (1.0 - row.x[i] - row.x[j]);
    cd(p) = 0.5 * (row.dx[i] - row.dx[j]);
    Tcol(p) = row.T_scaled;
    wv(p) = row.x[i] * row.x[j];
    wd1(p) = row.dx[i] * row.x[j] + row.x[i] * row.dx[j];
    wd2(p) = 2.0 * row.dx[i] * row.dx[j];
    side_a[p] = row.comps[i];
    side_b[p] = row.comps[j];
    up[p] = pr.up;
    for (int q = row_start[pr.row]; q < row_start[pr.row + 1]; ++q) {
      const int k = pairs[q].pi, l = pairs[q].pj;
      const double di = (k == i ? 1.0 : 0.0) - (k == j ? 1.0 : 0.0);
      const double dl = (l == i ? 1.0 : 0.0) - (l == j ? 1.0 : 0.0);
      const double a = 0.5 * (row.x[l] * di + row.x[k] * dl);
      const double b = 0.5 * (row.dx[l] * di + row.dx[k] * dl);
      if (a != 0.0) tv.emplace_back(p, pairs[q].up, a);
      if (b != 0.0) td.emplace_back(p, pairs[q].up, b);
    }
  }
  Var Xv = tape.constant(cv) + ad::sparse_matmul(sparse_from(npairs, nunique, tv), R_unique);
  Var Xd = tape.constant(cd) + ad::sparse_matmul(sparse_from(npairs, nunique, td), R_unique);

  // First mixture layer, split into theta, X and T* contributions.
  Var base = ad::add_row(ad::matmul(tape.constant(Tcol), w1T_), mix1_.bias);
  Var zAd = ad::matmul(Xd, w1x_);
  Var zAv = ad::gather_rows(P_, side_a) + base + ad::matmul(Xv, w1x_);
  Var zBv = ad::gather_rows(P_, side_b) + base + ad::matmul(1.0 - Xv, w1x_);
  Var zBd = -zAd;

  auto first = [&](Var zv, Var zd) {
    Var s1 = ad::silu_d1(zv);
    D3 h{ad::silu(zv), s1 * zd, Var()};
    if (second) h.d2 = ad::silu_d2(zv) * ad::square(zd);
    return h;
  };
  auto dense = [&](const D3& h, const BoundLayer& L, bool activate) {
    D3 z{ad::add_row(ad::matmul(h.v, L.Wt), L.bias), ad::matmul(h.d1, L.Wt), Var()};
    if (second) z.d2 = ad::matmul(h.d2, L.Wt);
    if (!activate) return z;
    Var s1 = ad::silu_d1(z.v);
    D3 a{ad::silu(z.v), s1 * z.d1, Var()};
    if (second) a.d2 = ad::silu_d2(z.v) * ad::square(z.d1) + s1 * z.d2;
    return a;
  };

  const D3 alphaA = dense(first(zAv, zAd), mix2_, true);
  const D3 alphaB = dense(first(zBv, zBd), mix2_, true);
  D3 s{alphaA.v + alphaB.v, alphaA.d1 + alphaB.d1, Var()};
  if (second) s.d2 = alphaA.d2 + alphaB.d2;
  const D3 phi = dense(dense(s, prop1_, true), prop2_, false);

  Var keep = 1.0 - ad::gather_rows(R_unique, up);
  D3 q{phi.v * keep, phi.d1 * keep, Var()};
  if (second) q.d2 = phi.d2 * keep;

  Var Wv = tape.constant(wv);
  Var Wd1 = tape.constant(wd1);
  D3 c{Wv * q.v, Wd1 * q.v + Wv * q.d1, Var()};
  if (second) c.d2 = tape.constant(wd2) * q.v + 2.0 * (Wd1 * q.d1) + Wv * q.d2;

  if (npairs == nrows) return RowDuals{c.v, c.d1, c.d2};
  std::vector<Eigen::Triplet<double>> ts;
  for (Eigen::Index p = 0; p < npairs; ++p) ts.emplace_back(pairs[p].row, p, 1.0);
  const ad::SparseMatrix sum_rows = sparse_from(nrows, npairs, ts);
  RowDuals out{ad::sparse_matmul(sum_rows, c.v), ad::sparse_matmul(sum_rows, c.d1), Var()};
  if (second) out.d2 = ad::sparse_matmul(sum_rows, c.d2);
  return out;
}

GammaOutput Evaluator::gamma(std::span<const StateQuery> states) {
  if (states.empty()) throw DataError("empty evaluation batch");
  const auto ncomp = theta_.rows();
  std::vector<Row> rows;
  std::vector<std::int32_t> first_row;
  GammaOutput out;
  int total = 0;
  for (const auto& s : states) {
    const int n = static_cast<int>(s.comps.size());
    if (n < 2) throw DataError("mixture needs at least two components");
    if (n > kMaxComponents) throw DataError("too many components in one mixture");
    if (s.x.size() != s.comps.size()) throw DataError("composition does not match component list");
    for (int c : s.comps) {
      if (c < 0 || c >= ncomp) throw DataError("component index out of range");
    }
    Row base;
    base.n = n;
    base.T_scaled = params_->temperature_scaler.transform(s.T);
    for (int i = 0; i < n; ++i) {
      base.comps[i] = s.comps[i];
      base.x[i] = s.x[i];
    }
    first_row.push_back(static_cast<std::int32_t>(rows.size()));
    for (int k = 0; k + 1 < n; ++k) {
      Row r = base;
      r.dx[k] = 1.0;
      r.dx[n - 1] = -1.0;
      rows.push_back(r);
    }
    out.offsets.push_back(total);
    total += n;
  }

  const RowDuals g = evaluate_rows(rows, false);

  // ln g_i = g + dg_i - sum_k x_k dg_k (i < N), ln g_N = g - sum_k x_k dg_k.
  std::vector<Eigen::Triplet<double>> tg, td;
  for (std::size_t s = 0; s < states.size(); ++s) {
    const int n = static_cast<int>(states[s].comps.size());
    const int r0 = first_row[s];
    const int o = out.offsets[s];
    for (int i = 0; i < n; ++i) {
      tg.emplace_back(o + i, r0, 1.0);
      if (i + 1 < n) td.emplace_back(o + i, r0 + i, 1.0);
      for (int k = 0; k + 1 < n; ++k) td.emplace_back(o + i, r0 + k, -states[s].x[k]);
    }
  }
  const auto nr = static_cast<Eigen::Index>(rows.size());
  out.ln_gamma = ad::sparse_matmul(sparse_from(total, nr, tg), g.v) + ad::sparse_matmul(sparse_from(total, nr, td), g.d1);
  out.gE = ad::gather_rows(g.v, first_row);
  return out;
}

CurveOutput Evaluator::curves(std::span<const CurveQuery> curves) {
  if (curves.empty()) throw DataError("empty evaluation batch");
  const auto C = static_cast<Eigen::Index>(curves.size());
  const int interior = thermo::kGridPoints - 2;
  const auto ncomp = theta_.rows();
  std::vector<double> Ts;
  for (const auto& c : curves) {
    if (c.comp1 < 0 || c.comp1 >= ncomp || c.comp2 < 0 || c.comp2 >= ncomp) {
      throw DataError("component index out of range");
    }
    Ts.push_back(params_->temperature_scaler.transform(c.T));
  }
  // Grid-major order so that a column-major reshape yields curves x grid.
  std::vector<Row> rows;
  rows.reserve(static_cast<std::size_t>(C) * interior);
  Matrix ideal(C, interior), inv(C, interior);
  for (int d = 1; d <= interior; ++d) {
    const double x1 = thermo::grid_x(d);
    for (Eigen::Index c = 0; c < C; ++c) {
      Row r;
      r.n = 2;
      r.comps[0] = curves[c].comp1;
      r.comps[1] = curves[c].comp2;
      r.x[0] = x1;
      r.x[1] = 1.0 - x1;
      r.dx[0] = 1.0;
      r.dx[1] = -1.0;
      r.T_scaled = Ts[c];
      rows.push_back(r);
      ideal(c, d - 1) = thermo::x_ln_x(x1) + thermo::x_ln_x(1.0 - x1);
      inv(c, d - 1) = 1.0 / (x1 * (1.0 - x1));
    }
  }
  const RowDuals g = evaluate_rows(rows, true);
  ad::Tape& tape = *tape_;
  Var values = ad::reshape(g.v, C, interior) + tape.constant(ideal);
  CurveOutput out;
  out.dgmix = ad::hcat(ad::hcat(tape.zeros(C, 1), values), tape.zeros(C, 1));
  out.S = ad::reshape(g.d2, C, interior) + tape.constant(inv);
  return out;
}

// --- convenience wrappers -------------------------------------------------------

Prediction activity_coefficients(const ModelParams& params, const Matrix& embeddings, std::span<const double> x,
                                 double T) {
  const int n = static_cast<int>(x.size());
  if (n < 2) throw DataError("mixture needs at least two components");
  if (embeddings.rows() != n) throw DataError("one embedding per component expected");
  const double total = std::accumulate(x.begin(), x.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-12) throw DataError("mole fractions do not sum to one");
  for (double xi : x) {
    if (!(xi >= 0.0)) throw DataError("negative mole fraction");
  }
  ad::Tape tape;
  Evaluator ev(tape, params, embeddings);
  StateQuery q;
  q.x.assign(x.begin(), x.end());
  q.comps.resize(n);
  std::iota(q.comps.begin(), q.comps.end(), 0);
  q.T = T;
  const auto out = ev.gamma(std::span<const StateQuery>(&q, 1));
  Prediction p;
  p.gE = out.gE.scalar();
  const Matrix& lg = out.ln_gamma.value();
  p.ln_gamma.assign(lg.data(), lg.data() + lg.size());
  return p;
}

namespace {

CurveOutput binary_curve(ad::Tape& tape, const ModelParams& params, const Vector& e1, const Vector& e2, double T) {
  Matrix E(2, e1.size());
  E.row(0) = e1.transpose();
  E.row(1) = e2.transpose();
  Evaluator ev(tape, params, E);
  const CurveQuery q{0, 1, T};
  return ev.curves(std::span<const CurveQuery>(&q, 1));
}

}  // namespace

thermo::DGmixCurve dgmix_grid(const ModelParams& params, const Vector& e1, const Vector& e2, double T) {
  ad::Tape tape;
  const auto out = binary_curve(tape, params, e1, e2, T);
  thermo::DGmixCurve c;
  c.T = T;
  for (int d = 0; d < thermo::kGridPoints; ++d) c.values[d] = out.dgmix.value()(0, d);
  c.values.front() = 0.0;
  c.values.back() = 0.0;
  return c;
}

std::vector<double> stability_curvature(const ModelParams& params, const Vector& e1, const Vector& e2, double T) {
  ad::Tape tape;
  const auto out = binary_curve(tape, params, e1, e2, T);
  const Matrix& S = out.S.value();
  return std::vector<double>(S.data(), S.data() + S.size());
}

}  // namespace gibbsnet::hanna
