// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>

#include "gibbsnet/dataset.hpp"
#include "gibbsnet/world.hpp"

using namespace gibbsnet;
using namespace gibbsnet::data;
using ad::Matrix;

namespace {

world::WorldConfig small_config(std::uint64_t seed = 3) {
  world::WorldConfig c;
  c.seed = seed;
  c.n_components = 60;
  c.embedding_dim = 32;
  c.n_systems = 300;
  c.n_vle = 2000;
  c.n_aci = 1000;
  c.n_lle = 300;
  return c;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "gibbsnet_test_world";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

bool same_point(const DataPoint& a, const DataPoint& b) {
  return a.kind == b.kind && a.system_id == b.system_id && a.components == b.components && a.T == b.T &&
         a.p == b.p && a.x == b.x && a.y == b.y && a.solute == b.solute && a.ln_gamma_inf == b.ln_gamma_inf &&
         a.x1_lo == b.x1_lo && a.x1_hi == b.x1_hi;
}

// Fixture built once; sampling the small world takes a fraction of a second.
const world::World& small_world() {
  static const world::World w = world::make_world(small_config());
  return w;
}

const Dataset& small_dataset() {
  static const Dataset d = sample_datasets(small_world()).dataset;
  return d;
}

}  // namespace

TEST_CASE("world: regeneration from the same seed is bit-identical") {
  const auto a = world::make_world(small_config(9));
  const auto b = world::make_world(small_config(9));
  CHECK(a.latents == b.latents);
  CHECK(a.embeddings.vectors() == b.embeddings.vectors());
  CHECK(a.nrtl.a == b.nrtl.a);
  CHECK(a.nrtl.b == b.nrtl.b);
  CHECK(a.nrtl.alpha == b.nrtl.alpha);
  for (std::size_t k = 0; k < a.antoine.size(); ++k) {
    CHECK(a.antoine[k].A == b.antoine[k].A);
    CHECK(a.antoine[k].B == b.antoine[k].B);
    CHECK(a.antoine[k].C == b.antoine[k].C);
  }
  const auto c = world::make_world(small_config(10));
  CHECK(a.latents != c.latents);
}

TEST_CASE("world: noise-free embeddings are linear images of the latents") {
  auto cfg = small_config();
  cfg.noise_std = 0.0;
  const auto w = world::make_world(cfg);
  for (int i = 0; i < cfg.n_components; ++i) {
    const ad::Vector e = w.projection * w.latents.row(i).transpose();
    CHECK(w.embeddings.vector(w.ids[i]) == e);
  }
}

TEST_CASE("world: NRTL parameters obey the conventions") {
  const auto& w = small_world();
  CHECK_NOTHROW(w.nrtl.validate());
  const auto n = w.nrtl.size();
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(w.nrtl.a(i, i) == 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      CHECK(w.nrtl.alpha(i, j) == w.nrtl.alpha(j, i));
      if (i != j) {
        CHECK(w.nrtl.alpha(i, j) >= 0.2);
        CHECK(w.nrtl.alpha(i, j) <= 0.47);
      }
    }
  }
  for (const auto& a : w.antoine) {
    const double Tb_p = thermo::antoine_vapor_pressure(a, 400.0).p_kpa;
    CHECK(Tb_p > 0.0);
    CHECK(std::isfinite(Tb_p));
  }
}

TEST_CASE("world: oracle matches the closed form and reverse-mode ln gamma") {
  const auto& w = small_world();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int N = 2 + trial % 4;
    thermo::MixtureState s;
    std::vector<int> idx;
    std::vector<double> x;
    for (int k = 0; k < N; ++k) {
      idx.push_back((trial * 7 + k * 13) % w.config.n_components);
      x.push_back(u(rng));
    }
    const double sum = std::accumulate(x.begin(), x.end(), 0.0);
    for (auto& v : x) v /= sum;
    x.back() = 1.0 - std::accumulate(x.begin(), x.end() - 1, 0.0);
    for (int k : idx) s.components.push_back(w.ids[k]);
    s.x = x;
    s.T = 300.0 + trial;
    const auto g = world::oracle_gamma(w, s).ln_gamma;
    const auto r = thermo::nrtl_ln_gamma_autodiff(w.subset(idx), x, s.T).ln_gamma;
    for (int k = 0; k < N; ++k) CHECK(std::abs(g[k] - r[k]) < 1e-10);
  }
  thermo::MixtureState bad{{"C000", "nope"}, {0.5, 0.5}, 300.0};
  CHECK_THROWS_AS(world::oracle_gamma(w, bad), DataError);
}

TEST_CASE("world: config validation and file round-trip") {
  auto c = small_config();
  c.T_min = 500.0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = small_config();
  c.n_systems = 100000;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = small_config(77);
  c.noise_std = 0.125;
  const auto path = scratch("world.json");
  world::save_world_config(c, path);
  const auto r = world::load_world_config(path);
  CHECK(r.seed == 77);
  CHECK(r.noise_std == 0.125);
  CHECK(r.n_components == c.n_components);
  CHECK(r.n_lle == c.n_lle);
}

TEST_CASE("datasets: requested sizes and pressure limits") {
  const auto& d = small_dataset();
  const auto c = d.counts();
  CHECK(c.vle == 2000);
  CHECK(c.aci == 1000);
  CHECK(c.lle == 300);
  std::size_t outside = 0, tempered = 0;
  for (const auto& p : d.points) {
    if (p.kind == Kind::VLE) CHECK(p.p <= 1000.0);
    if (p.kind == Kind::LLE) CHECK(p.p <= 10000.0);
    if (p.kind != Kind::LLE) {
      ++tempered;
      outside += p.T < 273.0 || p.T > 433.0;
    }
  }
  const double frac = static_cast<double>(outside) / static_cast<double>(tempered);
  CHECK(frac > 0.03);
  CHECK(frac < 0.07);
}

TEST_CASE("datasets: VLE points invert to the oracle activity coefficients") {
  const auto& w = small_world();
  const auto antoine = antoine_table(w.antoine);
  double worst = 0.0;
  for (const auto& p : small_dataset().points) {
    if (p.kind != Kind::VLE) continue;
    const auto lg = vle_ln_gamma(p, antoine);
    const auto ref = world::oracle_gamma(w, {p.components, p.x, p.T}).ln_gamma;
    for (std::size_t k = 0; k < lg.size(); ++k) worst = std::max(worst, std::abs(lg[k] - ref[k]));
    CHECK(std::abs(p.y[0] + p.y[1] - 1.0) < 1e-12);
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("datasets: VLE compositions avoid miscibility gaps") {
  const auto& w = small_world();
  for (const auto& p : small_dataset().points) {
    if (p.kind != Kind::VLE) continue;
    const auto m = w.binary(w.index(p.components[0]), w.index(p.components[1]));
    for (const auto& g : cem::detect_gaps(thermo::delta_g_mix_curve(m.gE, p.T))) {
      CHECK_FALSE((p.x[0] > g.x1_lo && p.x[0] < g.x1_hi));
    }
  }
}

TEST_CASE("datasets: ACI points are mixtures at infinite dilution") {
  const auto& w = small_world();
  std::size_t mixed = 0;
  for (const auto& p : small_dataset().points) {
    if (p.kind != Kind::ACI) continue;
    const std::set<std::string> distinct(p.components.begin(), p.components.end());
    CHECK(distinct.size() == p.components.size());
    const int s = p.solute_index();
    CHECK(p.x[s] == 0.0);
    CHECK(std::abs(std::accumulate(p.x.begin(), p.x.end(), 0.0) - 1.0) < 1e-15);
    const auto ref = world::oracle_gamma(w, {p.components, p.x, p.T}).ln_gamma[s];
    CHECK(p.ln_gamma_inf == ref);
    mixed += p.components.size() == 3;
  }
  CHECK(mixed > 20);
  CHECK(mixed < 90);
}

TEST_CASE("datasets: LLE labels are ordered isoactive splits") {
  const auto& w = small_world();
  for (const auto& p : small_dataset().points) {
    if (p.kind != Kind::LLE) continue;
    CHECK(p.x1_lo < p.x1_hi);
    const auto m = w.binary(w.index(p.components[0]), w.index(p.components[1]));
    cem::BinaryPhaseSplit s;
    s.x1_lo = p.x1_lo;
    s.x1_hi = p.x1_hi;
    CHECK(cem::isoactivity_residual(m, p.T, s) < 1e-10);
  }
}

TEST_CASE("datasets: sampling is deterministic") {
  const auto a = sample_datasets(world::make_world(small_config(5))).dataset;
  const auto b = sample_datasets(world::make_world(small_config(5))).dataset;
  REQUIRE(a.points.size() == b.points.size());
  for (std::size_t k = 0; k < a.points.size(); ++k) CHECK(same_point(a.points[k], b.points[k]));
}

TEST_CASE("datasets: file round-trip preserves every record exactly") {
  const auto& d = small_dataset();
  const auto a = scratch("data.jsonl"), b = scratch("data2.jsonl");
  save_dataset(d, a);
  const auto r = load_dataset(a);
  CHECK(r.world_seed == d.world_seed);
  REQUIRE(r.points.size() == d.points.size());
  for (std::size_t k = 0; k < d.points.size(); ++k) CHECK(same_point(r.points[k], d.points[k]));
  save_dataset(r, b);
  CHECK(read_text(a) == read_text(b));
}

TEST_CASE("datasets: malformed files are rejected") {
  const auto path = scratch("bad.jsonl");
  auto write = [&](const std::string& s) { std::ofstream(path) << s; };
  const std::string header = R"({"version":1,"world_seed":0,"kind_counts":{"VLE":0,"ACI":0,"LLE":1}})";
  write(header + "\n" + R"({"kind":"LLE","system_id":"A|B","components":["A","B"],"T":300,"p":101.3,"x1_lo":0.2,"x1_hi":0.8})" + "\n");
  CHECK_NOTHROW(load_dataset(path));
  write(header + "\n" + R"({"kind":"LLE","system_id":"A|B","components":["A","B"],"T":300,"p":101.3,"x1_lo":0.8,"x1_hi":0.2})" + "\n");
  CHECK_THROWS_AS(load_dataset(path), DataError);
  write(header + "\n" + R"({"kind":"LLE","system_id":"B|A","components":["B","A"],"T":300,"p":101.3,"x1_lo":0.2,"x1_hi":0.8})" + "\n");
  CHECK_THROWS_AS(load_dataset(path), DataError);
  write(header + "\n");
  CHECK_THROWS_AS(load_dataset(path), DataError);
  write(header + "\n" + R"({"kind":"XYZ","system_id":"A|B","components":["A","B"],"T":300})" + "\n");
  CHECK_THROWS_AS(load_dataset(path), DataError);
}

TEST_CASE("folds: round-robin stratification") {
  std::vector<SystemInfo> systems;
  for (int k = 0; k < 100; ++k) systems.push_back({"S" + std::to_string(1000 + k), k % 5 == 0});
  const auto split = split_folds(systems, 1);
  REQUIRE(split.folds.size() == 10);
  std::set<std::string> all;
  for (int f = 0; f < kFolds; ++f) {
    const auto& s = split.folds[f];
    int lle = 0;
    for (const auto& id : s.test) lle += std::stoi(id.substr(1)) % 5 == 0;
    CHECK(lle >= 1);
    CHECK(lle <= 3);
    for (const auto& id : s.test) CHECK(all.insert(id).second);
    std::set<std::string> here(s.train.begin(), s.train.end());
    for (const auto& id : s.val) CHECK(here.insert(id).second);
    for (const auto& id : s.test) CHECK(here.insert(id).second);
    CHECK(here.size() == 100);
    CHECK(s.val.size() == 9);
  }
  CHECK(all.size() == 100);
  CHECK(split.full.test.empty());
  CHECK(split.full.val.size() == 5);
  CHECK(split.full.train.size() == 95);
  const auto again = split_folds(systems, 1);
  for (int f = 0; f < kFolds; ++f) CHECK(again.folds[f].test == split.folds[f].test);
}

TEST_CASE("folds: too few systems in a bucket") {
  std::vector<SystemInfo> systems;
  for (int k = 0; k < 50; ++k) systems.push_back({"S" + std::to_string(k), k < 9});
  CHECK_THROWS_AS(split_folds(systems, 0), DataError);
}

TEST_CASE("folds: file round-trip and system-wise exclusivity on sampled data") {
  const auto& d = small_dataset();
  const auto split = split_folds(systems_of(d), 2);
  const auto path = scratch("folds.json");
  save_folds(split, path);
  const auto r = load_folds(path);
  for (int f = 0; f < kFolds; ++f) {
    CHECK(r.folds[f].train == split.folds[f].train);
    CHECK(r.folds[f].val == split.folds[f].val);
    CHECK(r.folds[f].test == split.folds[f].test);
    const auto part = partition(d, r.sets(f));
    CHECK(part.train.size() + part.val.size() + part.test.size() == d.points.size());
    std::map<std::string, int> where;
    auto mark = [&](const std::vector<DataPoint>& pts, int tag) {
      for (const auto& p : pts) {
        const auto [it, fresh] = where.emplace(p.system_id, tag);
        CHECK(it->second == tag);
      }
    };
    mark(part.train, 0);
    mark(part.val, 1);
    mark(part.test, 2);
  }
  CHECK(r.full.train == split.full.train);
  CHECK_THROWS_AS(r.sets(10), UsageError);
}

TEST_CASE("scalers: fitted on the training part only") {
  const auto& d = small_dataset();
  const auto& w = small_world();
  const auto split = split_folds(systems_of(d), 2);
  const auto s0 = fit_scalers(partition(d, split.sets(0)).train, w.embeddings);
  const auto s1 = fit_scalers(partition(d, split.sets(1)).train, w.embeddings);
  CHECK(s0.temperature.mean(0) != s1.temperature.mean(0));
  CHECK(s0.embedding.mean != s1.embedding.mean);

  const Matrix E = w.embeddings.vectors().topRows(5);
  const Matrix Z = s0.embedding.transform(E);
  const Matrix back = (Z.array().rowwise() * s0.embedding.std.transpose().array()).rowwise() +
                      s0.embedding.mean.transpose().array();
  CHECK((back - E).cwiseAbs().maxCoeff() < 1e-12);

  EmbeddingTable flat(2);
  flat.add("A", ad::Vector::Constant(2, 3.0));
  flat.add("B", ad::Vector::Constant(2, 3.0));
  DataPoint p;
  p.components = {"A", "B"};
  p.T = 300.0;
  const std::vector<DataPoint> one{p};
  const auto s = fit_scalers(one, flat);
  CHECK(s.embedding.std(0) == 1e-8);
  CHECK(s.embedding.transform(flat.rows(std::vector<std::string>{"A"}))(0, 0) == 0.0);
  CHECK_THROWS_AS(fit_scalers({}, flat), DataError);
}
