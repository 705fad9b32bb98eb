// SPDX-License-Identifier: Apache-2.0
#include "gibbsnet/losses.hpp"

#include <algorithm>
#include <cmath>

namespace gibbsnet::train {

using ad::Matrix;
using ad::Var;
using data::Kind;

void LossConfig::validate() const {
  if (!(w_LLE >= 0.0 && w_Gibbs >= 0.0 && w_Lips >= 0.0)) throw UsageError("loss weights must be non-negative");
  if (!(beta_VLE > 0.0 && beta_ACI > 0.0 && beta_LLE > 0.0)) throw UsageError("smooth-L1 betas must be positive");
  if (batch_size < 1 || epochs < 1 || ensemble_size < 1) throw UsageError("batch size, epochs and ensemble size must be positive");
  if (!(max_lr > 0.0)) throw UsageError("max_lr must be positive");
  if (min_best_epoch < 0) throw UsageError("min_best_epoch must be non-negative");
  if (!(weight_decay >= 0.0)) throw UsageError("weight_decay must be non-negative");
}

double smooth_l1(double e, double beta) {
  const double a = std::abs(e);
  return a < beta ? 0.5 * e * e / beta : a - 0.5 * beta;
}

Var smooth_l1(Var e, double beta) {
  // With m = min(|e|, beta): m^2 / (2 beta) + |e| - m covers both branches.
  Var a = ad::abs(e);
  Var m = ad::minimum(a, e.tape()->constant(Matrix::Constant(e.rows(), e.cols(), beta)));
  return ad::square(m) * (0.5 / beta) + (a - m);
}

std::vector<Example> make_examples(std::span<const data::DataPoint> points, const EmbeddingTable& embeddings,
                                   const data::AntoineTable& antoine) {
  std::vector<Example> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    Example e;
    e.kind = p.kind;
    e.system_id = p.system_id;
    e.T = p.T;
    for (const auto& c : p.components) e.comps.push_back(embeddings.index(c));
    switch (p.kind) {
      case Kind::VLE:
        e.x = p.x;
        e.target = data::vle_ln_gamma(p, antoine);
        break;
      case Kind::ACI:
        e.x = p.x;
        e.solute = p.solute_index();
        e.target = {p.ln_gamma_inf};
        break;
      case Kind::LLE:
        e.target = {p.x1_lo, p.x1_hi};
        break;
    }
    out.push_back(std::move(e));
  }
  return out;
}

LossTerms batch_loss(hanna::Evaluator& ev, const surrogate::Network& sur, std::span<const Example* const> batch,
                     const LossConfig& cfg) {
  ad::Tape& tape = *ev.theta().tape();
  LossTerms t;
  Var zero = tape.constant(0.0);
  t.vle = t.aci = t.lle = t.gibbs = zero;

  std::vector<hanna::StateQuery> states;
  std::vector<const Example*> state_ex, lle_ex;
  for (const Example* e : batch) {
    if (e->kind == Kind::LLE) {
      lle_ex.push_back(e);
    } else {
      states.push_back({e->comps, e->x, e->T});
      state_ex.push_back(e);
    }
  }

  if (!states.empty()) {
    const auto g = ev.gamma(states);
    // Gather predicted rows, targets and per-element weights for each kind.
    std::vector<std::int32_t> rows_v, rows_a;
    std::vector<double> tgt_v, tgt_a, w_v;
    for (std::size_t s = 0; s < state_ex.size(); ++s) {
      const Example& e = *state_ex[s];
      const int o = g.offsets[s];
      if (e.kind == Kind::VLE) {
        for (std::size_t i = 0; i < e.comps.size(); ++i) {
          rows_v.push_back(o + static_cast<int>(i));
          tgt_v.push_back(e.target[i]);
          w_v.push_back(1.0 / static_cast<double>(e.comps.size()));
        }
      } else {
        rows_a.push_back(o + e.solute);
        tgt_a.push_back(e.target[0]);
      }
    }
    auto column = [](const std::vector<double>& v) {
      return Matrix(Eigen::Map<const Matrix>(v.data(), static_cast<Eigen::Index>(v.size()), 1));
    };
    if (!rows_v.empty()) {
      Var err = ad::gather_rows(g.ln_gamma, rows_v) - tape.constant(column(tgt_v));
      t.vle = ad::sum(smooth_l1(err, cfg.beta_VLE) * tape.constant(column(w_v)));
    }
    if (!rows_a.empty()) {
      Var err = ad::gather_rows(g.ln_gamma, rows_a) - tape.constant(column(tgt_a));
      t.aci = 0.5 * ad::sum(smooth_l1(err, cfg.beta_ACI));
    }
  }

  if (!lle_ex.empty()) {
    std::vector<hanna::CurveQuery> queries;
    for (const Example* e : lle_ex) queries.push_back({e->comps[0], e->comps[1], e->T});
    const auto c = ev.curves(queries);
    Var minS = ad::row_min(c.S);
    t.gibbs = ad::sum(ad::hinge(minS));
    std::vector<std::int32_t> masked;
    Matrix target(0, 2);
    for (std::size_t k = 0; k < lle_ex.size(); ++k) {
      const double m = minS.value()(static_cast<Eigen::Index>(k), 0);
      t.min_S.push_back(m);
      t.mask.push_back(m < 0.0);
      if (m < 0.0) masked.push_back(static_cast<std::int32_t>(k));
    }
    if (!masked.empty()) {
      target.resize(static_cast<Eigen::Index>(masked.size()), 2);
      for (std::size_t r = 0; r < masked.size(); ++r) {
        target(static_cast<Eigen::Index>(r), 0) = lle_ex[masked[r]]->target[0];
        target(static_cast<Eigen::Index>(r), 1) = lle_ex[masked[r]]->target[1];
      }
      Var pred = sur.forward(ad::gather_rows(c.dgmix, masked));
      t.lle = 0.5 * ad::sum(smooth_l1(pred - tape.constant(target), cfg.beta_LLE));
    }
  }

  t.lips = ev.lipschitz_product();
  t.total = (t.vle + t.aci + cfg.w_LLE * t.lle + cfg.w_Gibbs * t.gibbs + cfg.w_Lips * t.lips) /
            static_cast<double>(cfg.batch_size);
  return t;
}

double data_loss(const LossTerms& t, const LossConfig& cfg) {
  return t.vle.scalar() + t.aci.scalar() + cfg.w_LLE * t.lle.scalar();
}

}  // namespace gibbsnet::train
