// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <random>

#include "gibbsnet/cem.hpp"
#include "gibbsnet/evaluation.hpp"
#include "gibbsnet/lipschitz.hpp"
#include "gibbsnet/losses.hpp"
#include "gibbsnet/world.hpp"

using namespace gibbsnet;

namespace {

struct Fixture {
  world::World world;
  std::vector<train::Example> examples;
  hanna::ModelParams params;
  std::string gap_a, gap_b;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    world::WorldConfig c;
    c.seed = 3;
    c.n_components = 60;
    c.embedding_dim = 384;
    c.n_systems = 300;
    c.n_vle = 2000;
    c.n_aci = 1000;
    c.n_lle = 300;
    Fixture f{world::make_world(c), {}, {}, {}, {}};
    const auto ds = data::sample_datasets(f.world).dataset;
    f.examples = train::make_examples(ds.points, f.world.embeddings, data::antoine_table(f.world.antoine));
    const auto sc = data::fit_scalers(ds.points, f.world.embeddings);
    f.params = hanna::ModelParams::init(f.world.embeddings.dimension(), 0);
    f.params.embedding_scaler = sc.embedding;
    f.params.temperature_scaler = sc.temperature;
    const eval::OracleModel oracle(f.world);
    const auto& ids = f.world.ids;
    for (std::size_t i = 0; i < ids.size() && f.gap_a.empty(); ++i)
      for (std::size_t j = i + 1; j < ids.size() && f.gap_a.empty(); ++j)
        if (!cem::detect_gaps(oracle.dgmix(ids[i], ids[j], 300.0)).empty()) f.gap_a = ids[i], f.gap_b = ids[j];
    return f;
  }();
  return f;
}

void BM_NrtlLnGamma(benchmark::State& state) {
  const auto& f = fixture();
  const int i = 0, j = 1;
  const std::vector<int> idx{i, j};
  const auto p = f.world.subset(idx);
  const std::vector<double> x{0.3, 0.7};
  for (auto _ : state) benchmark::DoNotOptimize(thermo::nrtl_ln_gamma(p, x, 310.0));
}
BENCHMARK(BM_NrtlLnGamma);

void BM_ActivityCoefficients(benchmark::State& state) {
  const auto& f = fixture();
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<std::string> ids(f.world.ids.begin(), f.world.ids.begin() + static_cast<long>(n));
  const auto E = f.world.embeddings.rows(ids);
  const std::vector<double> x(n, 1.0 / static_cast<double>(n));
  for (auto _ : state) benchmark::DoNotOptimize(hanna::activity_coefficients(f.params, E, x, 310.0));
}
BENCHMARK(BM_ActivityCoefficients)->Arg(2)->Arg(4);

void BM_DGmixGrid(benchmark::State& state) {
  const auto& f = fixture();
  const auto e1 = f.world.embeddings.vector(f.world.ids[0]);
  const auto e2 = f.world.embeddings.vector(f.world.ids[1]);
  for (auto _ : state) benchmark::DoNotOptimize(hanna::dgmix_grid(f.params, e1, e2, 310.0));
}
BENCHMARK(BM_DGmixGrid);

void BM_DetectGaps(benchmark::State& state) {
  const auto& f = fixture();
  const auto curve = eval::OracleModel(f.world).dgmix(f.gap_a, f.gap_b, 300.0);
  for (auto _ : state) benchmark::DoNotOptimize(cem::detect_gaps(curve));
}
BENCHMARK(BM_DetectGaps);

void BM_RefineCommonTangent(benchmark::State& state) {
  const auto& f = fixture();
  const eval::OracleModel oracle(f.world);
  const auto model = oracle.binary(f.gap_a, f.gap_b);
  const auto init = *cem::outermost(cem::detect_gaps(oracle.dgmix(f.gap_a, f.gap_b, 300.0)));
  for (auto _ : state) benchmark::DoNotOptimize(cem::refine_common_tangent(model, 300.0, init));
}
BENCHMARK(BM_RefineCommonTangent);

void BM_SurrogatePredict(benchmark::State& state) {
  const auto params = surrogate::SurrogateParams::init(0);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.3, 0.0);
  ad::Matrix curves(state.range(0), thermo::kGridPoints);
  for (Eigen::Index k = 0; k < curves.size(); ++k) curves.data()[k] = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(surrogate::predict(params, curves));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SurrogatePredict)->Arg(1)->Arg(512);

void BM_PowerIteration(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n01;
  ad::Matrix W(state.range(0), 384);
  for (Eigen::Index k = 0; k < W.size(); ++k) W.data()[k] = n01(rng);
  ad::Vector u = ad::Vector::Ones(W.rows()).normalized();
  for (auto _ : state) benchmark::DoNotOptimize(power_iteration(W, u, 1));
}
BENCHMARK(BM_PowerIteration)->Arg(96);

// One training step's forward and backward pass on a 512-point batch.
void BM_TrainingBatch(benchmark::State& state) {
  const auto& f = fixture();
  const auto sur = surrogate::SurrogateParams::init(0);
  const train::LossConfig config;
  std::vector<const train::Example*> batch;
  // Evenly strided so the batch mixes VLE, ACI and LLE points like a shuffled one.
  for (std::size_t k = 0; k < 512; ++k) batch.push_back(&f.examples[k * f.examples.size() / 512]);
  const auto E = f.world.embeddings.vectors();
  ad::Tape tape;
  for (auto _ : state) {
    tape.reset();
    hanna::Evaluator ev(tape, f.params, E, true);
    surrogate::Network net(tape, sur, false);
    const auto terms = train::batch_loss(ev, net, batch, config);
    tape.backward(terms.total);
    benchmark::DoNotOptimize(tape.adjoint(ev.leaves().front()));
  }
}
BENCHMARK(BM_TrainingBatch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
