// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <map>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "gibbsnet/evaluation.hpp"
#include "json.hpp"

using namespace gibbsnet;
using namespace gibbsnet::eval;
using namespace gibbsnet::test;
using data::Kind;

namespace {

std::vector<data::DataPoint> points_of(Kind kind, std::size_t limit) {
  std::vector<data::DataPoint> out;
  for (const auto& p : small_world().dataset.points)
    if (p.kind == kind && out.size() < limit) out.push_back(p);
  return out;
}

PointRecord rec(const std::string& sys, double e, Kind kind = Kind::VLE) {
  PointRecord r;
  r.kind = kind;
  r.system_id = sys;
  r.error = e;
  return r;
}

}  // namespace

TEST_CASE("pointwise errors") {
  const std::vector<double> a{0.1, 0.9};
  CHECK(pointwise_error(Kind::VLE, a, a) == 0.0);
  CHECK(pointwise_error(Kind::LLE, std::vector<double>{0.2, 0.8}, std::vector<double>{0.1, 0.9}) ==
        doctest::Approx(0.1).epsilon(1e-14));
  CHECK(pointwise_error(Kind::VLE, std::vector<double>{0.3, 0.0, 0.0}, std::vector<double>{0.0, 0.0, 0.0}) ==
        doctest::Approx(0.1).epsilon(1e-14));
  CHECK(pointwise_error(Kind::ACI, std::vector<double>{-1.5}, std::vector<double>{0.5}) == 2.0);
  CHECK_THROWS_AS(pointwise_error(Kind::VLE, a, std::vector<double>{0.1}), DataError);
  CHECK_THROWS_AS(pointwise_error(Kind::ACI, a, a), DataError);
}

TEST_CASE("system-wise MAE against a brute-force group-by") {
  const std::vector<PointRecord> one{rec("S", 0.1), rec("S", 0.3)};
  const auto m = mae_sys(one, Kind::VLE);
  REQUIRE(m.size() == 1);
  CHECK(m[0].mae == doctest::Approx(0.2).epsilon(1e-14));

  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> sys(0, 29);
  std::exponential_distribution<double> err(5.0);
  std::vector<PointRecord> recs;
  for (int k = 0; k < 2000; ++k) recs.push_back(rec("S" + std::to_string(sys(rng)), err(rng), k % 3 ? Kind::VLE : Kind::ACI));
  for (Kind kind : {Kind::VLE, Kind::ACI}) {
    std::map<std::string, std::vector<double>> groups;
    for (const auto& r : recs)
      if (r.kind == kind) groups[r.system_id].push_back(r.error);
    const auto got = mae_sys(recs, kind);
    REQUIRE(got.size() == groups.size());
    std::size_t i = 0;
    for (const auto& [id, v] : groups) {
      double s = 0.0;
      for (double e : v) s += e;
      CHECK(got[i].system_id == id);
      CHECK(got[i].n_points == v.size());
      CHECK(got[i].mae == doctest::Approx(s / static_cast<double>(v.size())).epsilon(1e-13));
      ++i;
    }
  }

  // The median runs over systems: one large system does not dominate.
  std::vector<PointRecord> skew;
  for (int k = 0; k < 100; ++k) skew.push_back(rec("big", 1.0));
  skew.push_back(rec("a", 0.1));
  skew.push_back(rec("b", 0.2));
  const auto rep = summarize(skew);
  CHECK(rep.vle.box.median == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(rep.vle.n_points == 102);
}

TEST_CASE("boxplot statistics") {
  const auto b = box_stats({9, 1, 8, 2, 7, 3, 6, 4, 5});
  CHECK(b.n == 9);
  CHECK(b.median == 5.0);
  CHECK(b.q1 == 3.0);
  CHECK(b.q3 == 7.0);
  CHECK(b.mean == 5.0);
  CHECK(b.whisker_lo == 1.0);
  CHECK(b.whisker_hi == 9.0);
  const auto o = box_stats({1, 2, 3, 4, 100});
  CHECK(o.q1 == 2.0);
  CHECK(o.q3 == 4.0);
  CHECK(o.whisker_hi == 4.0);
  CHECK(o.whisker_lo == 1.0);
  const auto e = box_stats({0.0, 1.0});
  CHECK(e.median == 0.5);
  CHECK(e.q1 == 0.25);
  CHECK(std::isnan(box_stats({}).median));
}

TEST_CASE("oracle and ideal models on the world's own data") {
  const auto& s = small_world();
  const OracleModel oracle(s.world);
  const IdealModel ideal;
  auto pts = points_of(Kind::LLE, 60);
  const auto vle = points_of(Kind::VLE, 100);
  const auto aci = points_of(Kind::ACI, 100);
  pts.insert(pts.end(), vle.begin(), vle.end());
  pts.insert(pts.end(), aci.begin(), aci.end());

  const auto ro = evaluate_points(oracle, pts, s.antoine);
  const auto rep = summarize(ro);
  CHECK(rep.lle_points == 60);
  CHECK(rep.detection_rate == 1.0);
  CHECK(rep.lle.n_points == 60);
  CHECK(rep.lle.box.mean < 1e-8);
  CHECK(rep.vle.box.mean < 1e-10);
  CHECK(rep.aci.box.mean < 1e-10);

  const auto ri = evaluate_points(ideal, pts, s.antoine);
  const auto irep = summarize(ri);
  CHECK(irep.detection_rate == 0.0);
  CHECK(irep.lle.n_points == 0);
  CHECK(irep.vle.box.median > 0.0);
  for (const auto& r : ri) {
    if (r.kind == Kind::ACI) CHECK(r.error == doctest::Approx(std::abs(r.expected[0])).epsilon(1e-15));
    if (r.kind == Kind::LLE) CHECK(std::isnan(r.error));
  }
}

TEST_CASE("ensemble model matches the member-level helpers") {
  const auto& s = small_world();
  const auto a = gap_prone_model(1), b = gap_prone_model(2);
  const EnsembleModel single({a}, s.world.embeddings);
  const EnsembleModel pair({a, b}, s.world.embeddings);
  const auto& ids = s.world.ids;
  const std::vector<thermo::ComponentId> comps{ids[3], ids[11]};
  const std::vector<double> x{0.35, 0.65};
  ad::Matrix E(2, s.world.embeddings.dimension());
  E.row(0) = s.world.embeddings.vector(ids[3]).transpose();
  E.row(1) = s.world.embeddings.vector(ids[11]).transpose();
  const auto pa = hanna::activity_coefficients(a, E, x, 330.0);
  const auto pb = hanna::activity_coefficients(b, E, x, 330.0);
  CHECK(single.ln_gamma(comps, x, 330.0) == pa.ln_gamma);
  const auto lp = pair.ln_gamma(comps, x, 330.0);
  CHECK(lp[0] == doctest::Approx(0.5 * (pa.ln_gamma[0] + pb.ln_gamma[0])).epsilon(1e-14));

  const auto Sa = hanna::stability_curvature(a, E.row(0).transpose(), E.row(1).transpose(), 330.0);
  CHECK(single.curvature(ids[3], ids[11], 330.0) == Sa);
  const auto bm = pair.binary(ids[3], ids[11]).ln_gamma(0.35, 330.0);
  CHECK(bm[1] == doctest::Approx(lp[1]).epsilon(1e-14));

  auto wrong = a;
  wrong.D = a.D + 1;
  CHECK_THROWS_AS(EnsembleModel({wrong}, s.world.embeddings), DataError);
  CHECK_THROWS_AS(EnsembleModel({}, s.world.embeddings), DataError);
}

TEST_CASE("LLE predictions of a gap-prone model are refined splits") {
  const auto& s = small_world();
  const EnsembleModel m({gap_prone_model(4)}, s.world.embeddings);
  const auto recs = evaluate_points(m, points_of(Kind::LLE, 40), s.antoine);
  int gaps = 0;
  for (const auto& r : recs) {
    if (!r.gap_predicted) continue;
    ++gaps;
    REQUIRE(r.predicted.size() == 2);
    CHECK(r.predicted[0] < r.predicted[1]);
    CHECK(r.error == doctest::Approx(pointwise_error(Kind::LLE, r.predicted, r.expected)).epsilon(1e-15));
  }
  CHECK(gaps > 0);
}

TEST_CASE("reports are deterministic and well formed") {
  const auto& s = small_world();
  const OracleModel oracle(s.world);
  const IdealModel ideal;
  auto pts = points_of(Kind::VLE, 30);
  const auto lle = points_of(Kind::LLE, 10);
  pts.insert(pts.end(), lle.begin(), lle.end());
  const auto recs = evaluate_points(oracle, pts, s.antoine);
  const auto base = summarize(evaluate_points(ideal, pts, s.antoine));
  const auto rep = summarize(recs);

  std::ostringstream c1, c2, j1, j2;
  write_points_csv(recs, c1);
  write_points_csv(evaluate_points(oracle, pts, s.antoine), c2);
  write_report_json(rep, &base, j1);
  write_report_json(summarize(recs), &base, j2);
  CHECK(c1.str() == c2.str());
  CHECK(j1.str() == j2.str());
  CHECK(c1.str().rfind("kind,system_id,T,epsilon,gap_predicted,min_S,predicted,expected\n", 0) == 0);
  const std::string csv = c1.str();
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 41);

  const auto j = nlohmann::json::parse(j1.str());
  CHECK(j["detection"]["rate"].get<double>() == 1.0);
  CHECK(j["VLE"]["n_points"].get<std::size_t>() == 30);
  CHECK(j["ACI"]["mae_sys"]["median"].is_null());
  CHECK(j["ideal_baseline"]["detection_rate"].get<double>() == 0.0);
}
