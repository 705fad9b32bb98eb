// SPDX-License-Identifier: Apache-2.0
#include "gibbsnet/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include "json.hpp"

namespace gibbsnet::data {

using nlohmann::json;
using thermo::ComponentId;

std::string_view kind_name(Kind kind) {
  switch (kind) {
    case Kind::VLE:
      return "VLE";
    case Kind::ACI:
      return "ACI";
    case Kind::LLE:
      return "LLE";
  }
  return "?";
}

Kind parse_kind(std::string_view name) {
  if (name == "VLE") return Kind::VLE;
  if (name == "ACI") return Kind::ACI;
  if (name == "LLE") return Kind::LLE;
  throw DataError("unknown data kind " + std::string(name));
}

int DataPoint::solute_index() const {
  const auto it = std::find(components.begin(), components.end(), solute);
  if (it == components.end()) throw DataError("ACI solute " + solute + " not among the components");
  return static_cast<int>(it - components.begin());
}

std::string make_system_id(std::vector<ComponentId> components) {
  std::sort(components.begin(), components.end());
  std::string id;
  for (const auto& c : components) {
    if (!id.empty()) id += '|';
    id += c;
  }
  return id;
}

KindCounts Dataset::counts() const {
  KindCounts c;
  for (const auto& p : points) {
    if (p.kind == Kind::VLE) ++c.vle;
    if (p.kind == Kind::ACI) ++c.aci;
    if (p.kind == Kind::LLE) ++c.lle;
  }
  return c;
}

// --- sampling -------------------------------------------------------------------

namespace {

struct SystemPlan {
  int i = 0;
  int j = 0;
  std::string id;
  cem::BinaryModel model;
  double gap_T_lo = 0.0;  ///< temperature bracket of the coarse gap scan
  double gap_T_hi = -1.0;
  bool has_gap() const { return gap_T_hi >= gap_T_lo; }
};

constexpr int kGapScanTemperatures = 17;
constexpr double kOutsideMargin = 20.0;
constexpr double kGapTemperaturePad = 10.0;
constexpr int kMaxAttemptsPerPoint = 50;

}  // namespace

SampleResult sample_datasets(const world::World& world) {
  const auto& cfg = world.config;
  const int n = cfg.n_components;
  std::mt19937_64 rng(cfg.seed ^ 0xda7a5e7ULL);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
  auto pick = [&](std::size_t size) { return static_cast<std::size_t>(u01(rng) * static_cast<double>(size)) % size; };
  auto sample_T = [&]() {
    if (u01(rng) < cfg.outside_fraction) {
      return u01(rng) < 0.5 ? uniform(cfg.T_min - kOutsideMargin, cfg.T_min) : uniform(cfg.T_max, cfg.T_max + kOutsideMargin);
    }
    return uniform(cfg.T_min, cfg.T_max);
  };

  SampleResult res;
  res.dataset.world_seed = cfg.seed;
  auto& points = res.dataset.points;

  // Distinct unordered pairs; ids are zero-padded so index order is id order.
  std::set<std::pair<int, int>> chosen;
  std::vector<SystemPlan> systems;
  while (static_cast<int>(systems.size()) < cfg.n_systems) {
    int i = static_cast<int>(pick(n)), j = static_cast<int>(pick(n));
    if (i == j) continue;
    if (i > j) std::swap(i, j);
    if (!chosen.insert({i, j}).second) continue;
    SystemPlan s;
    s.i = i;
    s.j = j;
    s.id = make_system_id({world.ids[i], world.ids[j]});
    s.model = world.binary(i, j);
    for (int k = 0; k < kGapScanTemperatures; ++k) {
      const double T = cfg.T_min + (cfg.T_max - cfg.T_min) * k / (kGapScanTemperatures - 1);
      if (cem::detect_gaps(thermo::delta_g_mix_curve(s.model.gE, T)).empty()) continue;
      if (!s.has_gap()) s.gap_T_lo = T;
      s.gap_T_hi = T;
    }
    res.stats.systems_with_gap += s.has_gap();
    systems.push_back(std::move(s));
  }

  const long vle_budget = static_cast<long>(cfg.n_vle) * kMaxAttemptsPerPoint;
  int vle_emitted = 0;
  for (long attempt = 0; vle_emitted < cfg.n_vle && attempt < vle_budget; ++attempt) {
    const auto& s = systems[pick(systems.size())];
    const double T = sample_T();
    const double x1 = uniform(0.01, 0.99);
    const auto gaps = cem::detect_gaps(thermo::delta_g_mix_curve(s.model.gE, T));
    if (std::any_of(gaps.begin(), gaps.end(), [&](const auto& g) { return x1 > g.x1_lo && x1 < g.x1_hi; })) {
      ++res.stats.vle_rejected_in_gap;
      continue;
    }
    const std::array<thermo::AntoineCoefficients, 2> ant{world.antoine[s.i], world.antoine[s.j]};
    const auto ln_gamma = [&s](const std::vector<double>& x, double TT) {
      const auto g = s.model.ln_gamma(x[0], TT);
      return std::vector<double>{g[0], g[1]};
    };
    const auto bp = thermo::bubble_point(ln_gamma, ant, T, {x1, 1.0 - x1});
    if (bp.p > cfg.vle_p_max_kpa) {
      ++res.stats.vle_rejected_pressure;
      continue;
    }
    DataPoint p;
    p.kind = Kind::VLE;
    p.system_id = s.id;
    p.components = {world.ids[s.i], world.ids[s.j]};
    p.T = T;
    p.p = bp.p;
    p.x = {x1, 1.0 - x1};
    p.y = bp.y;
    points.push_back(std::move(p));
    ++vle_emitted;
  }

  for (int k = 0; k < cfg.n_aci; ++k) {
    const auto& s = systems[pick(systems.size())];
    std::vector<int> idx{s.i, s.j};
    if (u01(rng) < cfg.mixed_solvent_fraction) {
      int third = s.i;
      while (third == s.i || third == s.j) third = static_cast<int>(pick(n));
      idx.push_back(third);
      std::sort(idx.begin(), idx.end());
    }
    const std::size_t solute = pick(idx.size());
    DataPoint p;
    p.kind = Kind::ACI;
    for (int c : idx) p.components.push_back(world.ids[c]);
    p.system_id = make_system_id(p.components);
    p.T = sample_T();
    p.solute = p.components[solute];
    p.x.assign(idx.size(), 0.0);
    if (idx.size() == 2) {
      p.x[1 - solute] = 1.0;
    } else {
      const double f = uniform(0.1, 0.9);
      bool first = true;
      for (std::size_t c = 0; c < idx.size(); ++c) {
        if (c == solute) continue;
        p.x[c] = first ? f : 1.0 - f;
        first = false;
      }
    }
    p.ln_gamma_inf = thermo::nrtl_ln_gamma(world.subset(idx), p.x, p.T).ln_gamma[solute];
    points.push_back(std::move(p));
  }

  std::vector<const SystemPlan*> lle_systems;
  for (const auto& s : systems)
    if (s.has_gap()) lle_systems.push_back(&s);
  const long lle_budget = static_cast<long>(cfg.n_lle) * kMaxAttemptsPerPoint;
  long emitted = 0;
  for (long attempt = 0; !lle_systems.empty() && emitted < cfg.n_lle && attempt < lle_budget; ++attempt) {
    const auto& s = *lle_systems[pick(lle_systems.size())];
    const double T = uniform(std::max(cfg.T_min, s.gap_T_lo - kGapTemperaturePad),
                             std::min(cfg.T_max, s.gap_T_hi + kGapTemperaturePad));
    const auto gap = cem::outermost(cem::detect_gaps(thermo::delta_g_mix_curve(s.model.gE, T)));
    if (!gap) {
      ++res.stats.lle_candidates_without_gap;
      continue;
    }
    cem::BinaryPhaseSplit split;
    try {
      split = cem::refine_common_tangent(s.model, T, *gap);
    } catch (const NumericalError&) {
      ++res.stats.lle_unrefined;
      continue;
    }
    DataPoint p;
    p.kind = Kind::LLE;
    p.system_id = s.id;
    p.components = {world.ids[s.i], world.ids[s.j]};
    p.T = T;
    p.p = cfg.lle_p_kpa;
    p.x1_lo = split.x1_lo;
    p.x1_hi = split.x1_hi;
    points.push_back(std::move(p));
    ++emitted;
  }
  return res;
}

// --- files ----------------------------------------------------------------------

namespace {

json to_json(const DataPoint& p) {
  json j = {{"kind", kind_name(p.kind)}, {"system_id", p.system_id}, {"components", p.components}, {"T", p.T}};
  switch (p.kind) {
    case Kind::VLE:
      j["p"] = p.p;
      j["x"] = p.x;
      j["y"] = p.y;
      break;
    case Kind::ACI:
      j["solute"] = p.solute;
      j["x"] = p.x;
      j["ln_gamma_inf"] = p.ln_gamma_inf;
      break;
    case Kind::LLE:
      j["p"] = p.p;
      j["x1_lo"] = p.x1_lo;
      j["x1_hi"] = p.x1_hi;
      break;
  }
  return j;
}

DataPoint from_json(const json& j) {
  DataPoint p;
  p.kind = parse_kind(j.at("kind").get<std::string>());
  p.system_id = j.at("system_id").get<std::string>();
  p.components = j.at("components").get<std::vector<ComponentId>>();
  p.T = j.at("T").get<double>();
  if (p.components.size() < 2) throw DataError("data point with fewer than two components");
  if (!std::is_sorted(p.components.begin(), p.components.end())) throw DataError("components must be sorted");
  if (make_system_id(p.components) != p.system_id) throw DataError("system_id does not match components");
  if (!(p.T > 0.0)) throw DataError("non-positive temperature");
  switch (p.kind) {
    case Kind::VLE:
      p.p = j.at("p").get<double>();
      p.x = j.at("x").get<std::vector<double>>();
      p.y = j.at("y").get<std::vector<double>>();
      if (p.x.size() != p.components.size() || p.y.size() != p.components.size())
        throw DataError("VLE composition length mismatch");
      break;
    case Kind::ACI:
      p.solute = j.at("solute").get<ComponentId>();
      p.x = j.at("x").get<std::vector<double>>();
      p.ln_gamma_inf = j.at("ln_gamma_inf").get<double>();
      if (p.x.size() != p.components.size()) throw DataError("ACI composition length mismatch");
      if (p.x[p.solute_index()] != 0.0) throw DataError("ACI solute must be infinitely dilute");
      break;
    case Kind::LLE:
      p.p = j.at("p").get<double>();
      p.x1_lo = j.at("x1_lo").get<double>();
      p.x1_hi = j.at("x1_hi").get<double>();
      if (p.components.size() != 2) throw DataError("LLE points must be binary");
      if (!(p.x1_lo < p.x1_hi)) throw DataError("LLE point violates x1' < x1''");
      break;
  }
  return p;
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  const auto c = dataset.counts();
  const json header = {{"version", kDatasetFormatVersion},
                       {"world_seed", dataset.world_seed},
                       {"kind_counts", {{"VLE", c.vle}, {"ACI", c.aci}, {"LLE", c.lle}}}};
  out << header.dump() << '\n';
  for (const auto& p : dataset.points) out << to_json(p).dump() << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty dataset file " + path.string());
  Dataset d;
  std::size_t line_no = 1;
  try {
    const json header = json::parse(line);
    if (header.at("version").get<int>() != kDatasetFormatVersion) throw DataError("unsupported dataset version");
    d.world_seed = header.at("world_seed").get<std::uint64_t>();
    const auto& kc = header.at("kind_counts");
    KindCounts expected{kc.at("VLE").get<std::size_t>(), kc.at("ACI").get<std::size_t>(),
                        kc.at("LLE").get<std::size_t>()};
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      d.points.push_back(from_json(json::parse(line)));
    }
    const auto c = d.counts();
    if (c.vle != expected.vle || c.aci != expected.aci || c.lle != expected.lle)
      throw DataError("dataset kind counts do not match header");
  } catch (const json::exception& e) {
    throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
  }
  return d;
}

AntoineTable antoine_table(std::span<const thermo::AntoineCoefficients> coeffs) {
  AntoineTable t;
  for (const auto& c : coeffs) t.emplace(c.component_id, c);
  return t;
}

std::vector<double> vle_ln_gamma(const DataPoint& point, const AntoineTable& antoine) {
  if (point.kind != Kind::VLE) throw DataError("not a VLE point");
  std::vector<double> out;
  for (std::size_t k = 0; k < point.components.size(); ++k) {
    const auto it = antoine.find(point.components[k]);
    if (it == antoine.end()) throw DataError("no Antoine coefficients for " + point.components[k]);
    const double ps = thermo::antoine_vapor_pressure(it->second, point.T).p_kpa;
    out.push_back(std::log(thermo::gamma_from_vle(point.p, point.y[k], ps, point.x[k])));
  }
  return out;
}

// --- splits -----------------------------------------------------------------------

std::vector<SystemInfo> systems_of(const Dataset& dataset) {
  std::map<std::string, bool> flags;
  for (const auto& p : dataset.points) flags[p.system_id] |= p.kind == Kind::LLE;
  std::vector<SystemInfo> out;
  for (const auto& [id, lle] : flags) out.push_back({id, lle});
  return out;
}

const SplitSets& FoldSplit::sets(int fold) const {
  if (fold == -1) return full;
  if (fold < 0 || fold >= static_cast<int>(folds.size())) throw UsageError("fold " + std::to_string(fold) + " out of range");
  return folds[fold];
}

namespace {

// Moves round(fraction * size) systems from each bucket into `picked`.
void stratified_take(std::vector<std::vector<std::string>> buckets, double fraction, std::mt19937_64& rng,
                     std::vector<std::string>& picked, std::vector<std::string>& rest) {
  for (auto& b : buckets) {
    std::shuffle(b.begin(), b.end(), rng);
    const auto take = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(b.size())));
    picked.insert(picked.end(), b.begin(), b.begin() + static_cast<std::ptrdiff_t>(take));
    rest.insert(rest.end(), b.begin() + static_cast<std::ptrdiff_t>(take), b.end());
  }
  std::sort(picked.begin(), picked.end());
  std::sort(rest.begin(), rest.end());
}

}  // namespace

FoldSplit split_folds(std::span<const SystemInfo> systems, std::uint64_t seed) {
  std::vector<std::string> with, without;
  std::set<std::string> seen;
  for (const auto& s : systems) {
    if (!seen.insert(s.id).second) throw DataError("duplicate system " + s.id);
    (s.has_lle ? with : without).push_back(s.id);
  }
  if (with.size() < kFolds || without.size() < kFolds)
    throw DataError("fold split needs at least 10 systems with LLE data and 10 without");
  std::sort(with.begin(), with.end());
  std::sort(without.begin(), without.end());

  FoldSplit split;
  split.folds.resize(kFolds);
  std::mt19937_64 rng(seed);
  std::shuffle(with.begin(), with.end(), rng);
  std::shuffle(without.begin(), without.end(), rng);
  std::size_t dealt = 0;
  for (const auto* bucket : {&with, &without})
    for (const auto& id : *bucket) split.fold_of[id] = static_cast<int>(dealt++ % kFolds);

  std::sort(with.begin(), with.end());
  std::sort(without.begin(), without.end());
  for (int f = 0; f < kFolds; ++f) {
    std::vector<std::vector<std::string>> rest(2);
    for (int b = 0; b < 2; ++b)
      for (const auto& id : b == 0 ? with : without)
        (split.fold_of[id] == f ? split.folds[f].test : rest[b]).push_back(id);
    std::mt19937_64 sub(seed + 1 + static_cast<std::uint64_t>(f));
    stratified_take(std::move(rest), 0.1, sub, split.folds[f].val, split.folds[f].train);
  }
  std::mt19937_64 sub(seed + 1 + kFolds);
  stratified_take({with, without}, 0.05, sub, split.full.val, split.full.train);
  return split;
}

SplitSets split_components(std::span<const SystemInfo> systems, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw UsageError("held-out component fraction must be in (0, 1)");
  std::set<std::string> comps;
  for (const auto& s : systems) {
    std::size_t start = 0;
    while (true) {
      const auto bar = s.id.find('|', start);
      comps.insert(s.id.substr(start, bar - start));
      if (bar == std::string::npos) break;
      start = bar + 1;
    }
  }
  std::vector<std::string> order(comps.begin(), comps.end());
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(order.size())));
  const std::set<std::string> held(order.begin(), order.begin() + static_cast<long>(n_held));

  SplitSets out;
  std::vector<std::vector<std::string>> rest(2);
  for (const auto& s : systems) {
    bool test = false;
    std::size_t start = 0;
    while (!test) {
      const auto bar = s.id.find('|', start);
      test = held.count(s.id.substr(start, bar - start)) != 0;
      if (bar == std::string::npos) break;
      start = bar + 1;
    }
    (test ? out.test : rest[s.has_lle ? 0 : 1]).push_back(s.id);
  }
  std::sort(out.test.begin(), out.test.end());
  for (auto& b : rest) std::sort(b.begin(), b.end());
  std::mt19937_64 sub(seed + 1);
  stratified_take(std::move(rest), 0.1, sub, out.val, out.train);
  return out;
}

void save_folds(const FoldSplit& split, const std::filesystem::path& path) {
  json j = json::object();
  auto sets = [](const SplitSets& s) { return json{{"train", s.train}, {"val", s.val}, {"test", s.test}}; };
  for (int f = 0; f < static_cast<int>(split.folds.size()); ++f) j[std::to_string(f)] = sets(split.folds[f]);
  j["full"] = sets(split.full);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

FoldSplit load_folds(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open fold file " + path.string());
  FoldSplit split;
  try {
    json j;
    in >> j;
    auto sets = [](const json& s) {
      return SplitSets{s.at("train").get<std::vector<std::string>>(), s.at("val").get<std::vector<std::string>>(),
                       s.at("test").get<std::vector<std::string>>()};
    };
    for (int f = 0; f < kFolds; ++f) {
      split.folds.push_back(sets(j.at(std::to_string(f))));
      for (const auto& id : split.folds.back().test) {
        if (!split.fold_of.emplace(id, f).second) throw DataError("system " + id + " in two test folds");
      }
    }
    split.full = sets(j.at("full"));
  } catch (const json::exception& e) {
    throw DataError("malformed fold file " + path.string() + ": " + e.what());
  }
  return split;
}

Partition partition(const Dataset& dataset, const SplitSets& sets) {
  std::unordered_map<std::string, int> where;
  for (const auto& id : sets.train) where[id] = 0;
  for (const auto& id : sets.val) where[id] = 1;
  for (const auto& id : sets.test) where[id] = 2;
  Partition out;
  for (const auto& p : dataset.points) {
    const auto it = where.find(p.system_id);
    if (it == where.end()) continue;
    (it->second == 0 ? out.train : it->second == 1 ? out.val : out.test).push_back(p);
  }
  return out;
}

Scalers fit_scalers(std::span<const DataPoint> train, const EmbeddingTable& embeddings) {
  if (train.empty()) throw DataError("cannot fit scalers on an empty training set");
  std::vector<ComponentId> occurrences;
  ad::Matrix T(static_cast<Eigen::Index>(train.size()), 1);
  for (std::size_t k = 0; k < train.size(); ++k) {
    occurrences.insert(occurrences.end(), train[k].components.begin(), train[k].components.end());
    T(static_cast<Eigen::Index>(k), 0) = train[k].T;
  }
  return {hanna::Scaler::fit(embeddings.rows(occurrences)), hanna::Scaler::fit(T)};
}

// --- surrogate labels ----------------------------------------------------------

std::vector<surrogate::LabelRequest> surrogate_requests(const world::World& world, const Dataset& dataset,
                                                        std::size_t extra, std::uint64_t seed) {
  std::vector<const DataPoint*> lle;
  for (const auto& p : dataset.points)
    if (p.kind == Kind::LLE) lle.push_back(&p);
  auto request = [&](const DataPoint& p, double T) {
    return surrogate::LabelRequest{p.system_id, world.binary(world.index(p.components[0]), world.index(p.components[1])), T};
  };
  std::vector<surrogate::LabelRequest> out;
  for (const auto* p : lle) out.push_back(request(*p, p->T));
  if (lle.empty() || extra == 0) return out;
  std::mt19937_64 rng(seed ^ 0x51a7eULL);
  std::uniform_int_distribution<std::size_t> pick(0, lle.size() - 1);
  std::uniform_real_distribution<double> shift(-15.0, 15.0);
  for (std::size_t k = 0; k < extra; ++k) {
    const DataPoint& p = *lle[pick(rng)];
    const double T = std::clamp(p.T + shift(rng), world.config.T_min, world.config.T_max);
    out.push_back(request(p, T));
  }
  return out;
}

SampleSplit split_samples(std::span<const surrogate::Sample> samples, const SplitSets& sets) {
  std::unordered_map<std::string, int> where;
  for (const auto& id : sets.train) where[id] = 0;
  for (const auto& id : sets.val) where[id] = 1;
  for (const auto& id : sets.test) where[id] = 2;
  SampleSplit out;
  for (const auto& s : samples) {
    const auto it = where.find(s.system_id);
    if (it == where.end()) continue;
    (it->second == 0 ? out.train : it->second == 1 ? out.val : out.test).push_back(s);
  }
  return out;
}

}  // namespace gibbsnet::data
