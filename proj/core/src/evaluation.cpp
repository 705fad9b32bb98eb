// SPDX-License-Identifier: Apache-2.0
#include "gibbsnet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

#include "json.hpp"

namespace gibbsnet::eval {

using ad::Matrix;
using data::Kind;
using thermo::ComponentId;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<double> ideal_curvature() {
  std::vector<double> S;
  for (int d = 1; d < thermo::kGridPoints - 1; ++d) {
    const double x = thermo::grid_x(d);
    S.push_back(1.0 / (x * (1.0 - x)));
  }
  return S;
}

}  // namespace

// --- models ---------------------------------------------------------------------

EnsembleModel::EnsembleModel(std::vector<hanna::ModelParams> members, EmbeddingTable embeddings)
    : members_(std::move(members)), embeddings_(std::move(embeddings)) {
  if (members_.empty()) throw DataError("ensemble has no members");
  for (const auto& m : members_) {
    if (m.D != embeddings_.dimension()) throw DataError("embedding dimension does not match ensemble member");
  }
}

Matrix EnsembleModel::rows(const std::vector<ComponentId>& comps) const {
  Matrix E(static_cast<Eigen::Index>(comps.size()), embeddings_.dimension());
  for (std::size_t i = 0; i < comps.size(); ++i) E.row(static_cast<Eigen::Index>(i)) = embeddings_.vector(comps[i]).transpose();
  return E;
}

std::vector<double> EnsembleModel::ln_gamma(const std::vector<ComponentId>& comps, const std::vector<double>& x,
                                            double T) const {
  const Matrix E = rows(comps);
  std::vector<double> mean(x.size(), 0.0);
  for (const auto& m : members_) {
    const auto p = hanna::activity_coefficients(m, E, x, T);
    for (std::size_t i = 0; i < x.size(); ++i) mean[i] += p.ln_gamma[i];
  }
  for (auto& v : mean) v /= static_cast<double>(members_.size());
  return mean;
}

thermo::DGmixCurve EnsembleModel::dgmix(const ComponentId& c1, const ComponentId& c2, double T) const {
  const auto e1 = embeddings_.vector(c1), e2 = embeddings_.vector(c2);
  thermo::DGmixCurve mean;
  mean.T = T;
  for (const auto& m : members_) {
    const auto c = hanna::dgmix_grid(m, e1, e2, T);
    for (int d = 0; d < thermo::kGridPoints; ++d) mean.values[d] += c.values[d];
  }
  for (auto& v : mean.values) v /= static_cast<double>(members_.size());
  return mean;
}

std::vector<double> EnsembleModel::curvature(const ComponentId& c1, const ComponentId& c2, double T) const {
  const auto e1 = embeddings_.vector(c1), e2 = embeddings_.vector(c2);
  std::vector<double> mean(thermo::kGridPoints - 2, 0.0);
  for (const auto& m : members_) {
    const auto S = hanna::stability_curvature(m, e1, e2, T);
    for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += S[d];
  }
  for (auto& v : mean) v /= static_cast<double>(members_.size());
  return mean;
}

cem::BinaryModel EnsembleModel::binary(const ComponentId& c1, const ComponentId& c2) const {
  const Matrix E = rows({c1, c2});
  const auto* members = &members_;
  cem::BinaryModel b;
  b.gE = [members, E](double x1, double T) {
    const std::vector<double> x{x1, 1.0 - x1};
    double s = 0.0;
    for (const auto& m : *members) s += hanna::activity_coefficients(m, E, x, T).gE;
    return s / static_cast<double>(members->size());
  };
  b.ln_gamma = [members, E](double x1, double T) {
    const std::vector<double> x{x1, 1.0 - x1};
    std::array<double, 2> s{0.0, 0.0};
    for (const auto& m : *members) {
      const auto p = hanna::activity_coefficients(m, E, x, T);
      s[0] += p.ln_gamma[0];
      s[1] += p.ln_gamma[1];
    }
    const double k = static_cast<double>(members->size());
    return std::array<double, 2>{s[0] / k, s[1] / k};
  };
  return b;
}

std::vector<double> IdealModel::ln_gamma(const std::vector<ComponentId>&, const std::vector<double>& x, double) const {
  return std::vector<double>(x.size(), 0.0);
}

thermo::DGmixCurve IdealModel::dgmix(const ComponentId&, const ComponentId&, double T) const {
  return thermo::delta_g_mix_curve([](double, double) { return 0.0; }, T);
}

std::vector<double> IdealModel::curvature(const ComponentId&, const ComponentId&, double) const {
  return ideal_curvature();
}

cem::BinaryModel IdealModel::binary(const ComponentId&, const ComponentId&) const {
  cem::BinaryModel b;
  b.gE = [](double, double) { return 0.0; };
  b.ln_gamma = [](double, double) { return std::array<double, 2>{0.0, 0.0}; };
  return b;
}

std::vector<double> OracleModel::ln_gamma(const std::vector<ComponentId>& comps, const std::vector<double>& x,
                                          double T) const {
  return world::oracle_gamma(*world_, thermo::MixtureState{comps, x, T}).ln_gamma;
}

thermo::DGmixCurve OracleModel::dgmix(const ComponentId& c1, const ComponentId& c2, double T) const {
  return thermo::delta_g_mix_curve(binary(c1, c2).gE, T);
}

std::vector<double> OracleModel::curvature(const ComponentId& c1, const ComponentId& c2, double T) const {
  const std::array<int, 2> idx{world_->index(c1), world_->index(c2)};
  return thermo::stability_scan(thermo::nrtl_binary_dual(world_->subset(idx)), T).S;
}

cem::BinaryModel OracleModel::binary(const ComponentId& c1, const ComponentId& c2) const {
  return world_->binary(world_->index(c1), world_->index(c2));
}

// --- metrics --------------------------------------------------------------------

double pointwise_error(Kind kind, std::span<const double> pred, std::span<const double> exp) {
  if (pred.size() != exp.size() || pred.empty()) throw DataError("prediction and data differ in size");
  if (kind == Kind::ACI && pred.size() != 1) throw DataError("ACI error takes one value");
  if (kind == Kind::LLE && pred.size() != 2) throw DataError("LLE error takes {x1', x1''}");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - exp[i]);
  // For LLE the x2 errors repeat the x1 errors: (2 s) / (2 N) with N = 2.
  return s / static_cast<double>(pred.size());
}

std::vector<PointRecord> evaluate_points(const GammaModel& model, std::span<const data::DataPoint> points,
                                         const data::AntoineTable& antoine) {
  std::vector<PointRecord> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    PointRecord r;
    r.kind = p.kind;
    r.system_id = p.system_id;
    r.T = p.T;
    switch (p.kind) {
      case Kind::VLE:
        r.expected = data::vle_ln_gamma(p, antoine);
        r.predicted = model.ln_gamma(p.components, p.x, p.T);
        r.error = pointwise_error(p.kind, r.predicted, r.expected);
        break;
      case Kind::ACI: {
        const auto s = static_cast<std::size_t>(p.solute_index());
        r.expected = {p.ln_gamma_inf};
        r.predicted = {model.ln_gamma(p.components, p.x, p.T)[s]};
        r.error = pointwise_error(p.kind, r.predicted, r.expected);
        break;
      }
      case Kind::LLE: {
        if (p.components.size() != 2) throw DataError("LLE evaluation needs a binary system");
        r.expected = {p.x1_lo, p.x1_hi};
        const auto S = model.curvature(p.components[0], p.components[1], p.T);
        r.min_S = *std::min_element(S.begin(), S.end());
        r.gap_predicted = r.min_S < 0.0;
        r.error = kNaN;
        if (!r.gap_predicted) break;
        const auto gap = cem::outermost(cem::detect_gaps(model.dgmix(p.components[0], p.components[1], p.T)));
        if (!gap) break;
        cem::BinaryPhaseSplit split = *gap;
        try {
          const auto refined = cem::refine_common_tangent(model.binary(p.components[0], p.components[1]), p.T, *gap);
          if (refined.refined) split = refined;
        } catch (const NumericalError&) {
        }
        r.predicted = {split.x1_lo, split.x1_hi};
        r.error = pointwise_error(p.kind, r.predicted, r.expected);
        break;
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

BoxStats box_stats(std::vector<double> v) {
  BoxStats b;
  b.n = v.size();
  if (v.empty()) {
    b.median = b.mean = b.q1 = b.q3 = b.whisker_lo = b.whisker_hi = kNaN;
    return b;
  }
  std::sort(v.begin(), v.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  b.median = quantile(0.5);
  b.q1 = quantile(0.25);
  b.q3 = quantile(0.75);
  b.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  const double iqr = b.q3 - b.q1;
  const double lo = b.q1 - 1.5 * iqr, hi = b.q3 + 1.5 * iqr;
  b.whisker_lo = *std::find_if(v.begin(), v.end(), [&](double x) { return x >= lo; });
  b.whisker_hi = *std::find_if(v.rbegin(), v.rend(), [&](double x) { return x <= hi; });
  return b;
}

std::vector<SystemError> mae_sys(std::span<const PointRecord> records, Kind kind) {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& r : records) {
    if (r.kind != kind || !std::isfinite(r.error)) continue;
    auto& a = acc[r.system_id];
    a.first += r.error;
    ++a.second;
  }
  std::vector<SystemError> out;
  for (const auto& [id, a] : acc) out.push_back({id, a.second, a.first / static_cast<double>(a.second)});
  return out;
}

const KindSummary& Report::summary(Kind kind) const {
  return kind == Kind::VLE ? vle : kind == Kind::ACI ? aci : lle;
}

Report summarize(std::span<const PointRecord> records) {
  Report rep;
  for (Kind k : {Kind::VLE, Kind::ACI, Kind::LLE}) {
    KindSummary& s = k == Kind::VLE ? rep.vle : k == Kind::ACI ? rep.aci : rep.lle;
    s.systems = mae_sys(records, k);
    std::vector<double> maes;
    for (const auto& e : s.systems) {
      maes.push_back(e.mae);
      s.n_points += e.n_points;
    }
    s.box = box_stats(std::move(maes));
  }
  std::map<std::string, Detection> det;
  std::size_t detected = 0;
  for (const auto& r : records) {
    if (r.kind != Kind::LLE) continue;
    ++rep.lle_points;
    auto& d = det[r.system_id];
    d.system_id = r.system_id;
    ++d.n_points;
    if (r.gap_predicted) {
      ++d.detected;
      ++detected;
    }
  }
  for (auto& [id, d] : det) rep.detection.push_back(d);
  rep.detection_rate = rep.lle_points ? static_cast<double>(detected) / static_cast<double>(rep.lle_points) : kNaN;
  return rep;
}

// --- export ---------------------------------------------------------------------

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string joined(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + num(v[i]);
  return s;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json box_json(const BoxStats& b) {
  return {{"n", b.n},
          {"median", finite_or_null(b.median)},
          {"mean", finite_or_null(b.mean)},
          {"q1", finite_or_null(b.q1)},
          {"q3", finite_or_null(b.q3)},
          {"whisker_lo", finite_or_null(b.whisker_lo)},
          {"whisker_hi", finite_or_null(b.whisker_hi)}};
}

json kind_json(const KindSummary& s) {
  json systems = json::array();
  for (const auto& e : s.systems) systems.push_back({{"system_id", e.system_id}, {"n_points", e.n_points}, {"mae", e.mae}});
  return {{"n_points", s.n_points}, {"n_systems", s.systems.size()}, {"mae_sys", box_json(s.box)}, {"systems", systems}};
}

template <class F>
void to_file(const std::filesystem::path& path, F&& write) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write(out);
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace

void write_points_csv(std::span<const PointRecord> records, std::ostream& out) {
  out << "kind,system_id,T,epsilon,gap_predicted,min_S,predicted,expected\n";
  for (const auto& r : records) {
    out << data::kind_name(r.kind) << ',' << r.system_id << ',' << num(r.T) << ',' << num(r.error) << ','
        << (r.kind == Kind::LLE ? (r.gap_predicted ? "1" : "0") : "") << ','
        << (r.kind == Kind::LLE ? num(r.min_S) : "") << ',' << joined(r.predicted) << ',' << joined(r.expected)
        << '\n';
  }
}

void write_report_json(const Report& report, const Report* baseline, std::ostream& out) {
  json det = json::array();
  for (const auto& d : report.detection)
    det.push_back({{"system_id", d.system_id}, {"n_points", d.n_points}, {"detected", d.detected}});
  json j = {{"VLE", kind_json(report.vle)},
            {"ACI", kind_json(report.aci)},
            {"LLE", kind_json(report.lle)},
            {"detection", {{"n_points", report.lle_points}, {"rate", finite_or_null(report.detection_rate)}, {"systems", det}}}};
  if (baseline) {
    j["ideal_baseline"] = {{"VLE", box_json(baseline->vle.box)},
                           {"ACI", box_json(baseline->aci.box)},
                           {"detection_rate", finite_or_null(baseline->detection_rate)}};
  }
  out << j.dump(2) << '\n';
}

void write_points_csv(std::span<const PointRecord> records, const std::filesystem::path& path) {
  to_file(path, [&](std::ostream& o) { write_points_csv(records, o); });
}

void write_report_json(const Report& report, const Report* baseline, const std::filesystem::path& path) {
  to_file(path, [&](std::ostream& o) { write_report_json(report, baseline, o); });
}

}  // namespace gibbsnet::eval
