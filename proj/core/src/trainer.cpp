// SPDX-License-Identifier: Apache-2.0
#include "gibbsnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "gibbsnet/checkpoint.hpp"
#include "gibbsnet/optim.hpp"
#include "json.hpp"

namespace gibbsnet::train {

using ad::Matrix;
using nlohmann::json;

TrainingData prepare_training_data(const data::Dataset& dataset, const data::SplitSets& sets,
                                   const EmbeddingTable& embeddings, const data::AntoineTable& antoine) {
  const auto part = data::partition(dataset, sets);
  TrainingData d;
  d.embeddings = embeddings.vectors();
  d.scalers = data::fit_scalers(part.train, embeddings);
  d.train = make_examples(part.train, embeddings, antoine);
  d.val = make_examples(part.val, embeddings, antoine);
  return d;
}

namespace {

void check_finite(const LossTerms& t, long batch, int epoch) {
  const std::pair<const char*, const ad::Var*> terms[] = {
      {"VLE", &t.vle}, {"ACI", &t.aci}, {"LLE", &t.lle}, {"Gibbs", &t.gibbs}, {"Lipschitz", &t.lips}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v->scalar())) {
      throw NumericalError("non-finite " + std::string(name) + " loss in epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch));
    }
  }
}

}  // namespace

int select_best_epoch(std::span<const EpochLog> history, int min_best_epoch) {
  const int floor = std::min(min_best_epoch, static_cast<int>(history.size()));
  int best = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  for (const auto& log : history) {
    if (log.epoch >= floor && log.val_loss < best_loss) {
      best_loss = log.val_loss;
      best = log.epoch;
    }
  }
  return best;
}

double validation_loss(const hanna::ModelParams& params, const Matrix& embeddings, std::span<const Example> examples,
                       const surrogate::SurrogateParams& surrogate, const LossConfig& config) {
  if (examples.empty()) return 0.0;
  double total = 0.0;
  ad::Tape tape;
  const auto chunk = static_cast<std::size_t>(config.batch_size);
  for (std::size_t start = 0; start < examples.size(); start += chunk) {
    const std::size_t end = std::min(examples.size(), start + chunk);
    std::vector<const Example*> batch;
    for (std::size_t k = start; k < end; ++k) batch.push_back(&examples[k]);
    tape.reset();
    hanna::Evaluator ev(tape, params, embeddings);
    surrogate::Network sur(tape, surrogate, false);
    total += data_loss(batch_loss(ev, sur, batch, config), config);
  }
  return total / static_cast<double>(examples.size());
}

TrainResult train_model(const TrainingData& data, const surrogate::SurrogateParams& surrogate,
                        const LossConfig& config, std::uint64_t seed, const ProgressFn& progress) {
  config.validate();
  if (data.train.empty()) throw DataError("training set is empty");
  auto params = hanna::ModelParams::init(static_cast<int>(data.embeddings.cols()), seed);
  params.embedding_scaler = data.scalers.embedding;
  params.temperature_scaler = data.scalers.temperature;

  optim::AdamW opt(params.slots(), {.weight_decay = config.weight_decay});
  const optim::OneCycle schedule{.max_lr = config.max_lr};
  const std::size_t n = data.train.size();
  const auto bs = static_cast<std::size_t>(config.batch_size);
  const long batches = static_cast<long>((n + bs - 1) / bs);
  const long total_steps = batches * config.epochs;
  const int min_best = std::min(config.min_best_epoch, config.epochs);

  std::mt19937_64 rng(seed ^ 0x7a1b5eedULL);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainResult res;
  res.best_val_loss = std::numeric_limits<double>::infinity();
  ad::Tape tape;
  long step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    for (long b = 0; b < batches; ++b) {
      std::vector<const Example*> batch;
      for (std::size_t k = static_cast<std::size_t>(b) * bs; k < std::min(n, static_cast<std::size_t>(b + 1) * bs); ++k)
        batch.push_back(&data.train[order[k]]);
      tape.reset();
      hanna::Evaluator ev(tape, params, data.embeddings, true);
      surrogate::Network sur(tape, surrogate, false);
      const LossTerms t = batch_loss(ev, sur, batch, config);
      check_finite(t, b, epoch);
      tape.backward(t.total);
      std::vector<Matrix> grads;
      grads.reserve(ev.leaves().size());
      for (const auto& leaf : ev.leaves()) grads.push_back(tape.adjoint(leaf));
      log.lr = schedule.lr(step++, total_steps);
      opt.step(grads, log.lr);
      ev.commit_power_iterations(params);

      log.train_loss += t.total.scalar() / static_cast<double>(batches);
      log.vle += t.vle.scalar();
      log.aci += t.aci.scalar();
      log.lle += t.lle.scalar();
      log.gibbs += t.gibbs.scalar();
      log.masked_lle += static_cast<std::size_t>(std::count(t.mask.begin(), t.mask.end(), true));
    }
    log.val_loss = data.val.empty() ? log.train_loss : validation_loss(params, data.embeddings, data.val, surrogate, config);
    if (!std::isfinite(log.val_loss)) throw NumericalError("non-finite validation loss in epoch " + std::to_string(epoch));
    log.lipschitz_product = hanna::model_lipschitz_product(params);
    if (epoch >= min_best && log.val_loss < res.best_val_loss) {
      res.best_val_loss = log.val_loss;
      res.best_epoch = epoch;
      res.best = params;
    }
    res.history.push_back(log);
    if (progress) progress(log);
  }
  res.last = std::move(params);
  return res;
}

// --- ensembles ------------------------------------------------------------------

void save_manifest(const EnsembleManifest& m, const std::filesystem::path& path) {
  json members = json::array();
  for (const auto& e : m.members) {
    members.push_back({{"seed", e.seed},
                       {"checkpoint", e.checkpoint.filename().string()},
                       {"best_epoch", e.best_epoch},
                       {"val_loss", e.val_loss}});
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << json{{"complete", m.complete}, {"members", members}}.dump(2) << '\n';
}

EnsembleManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  EnsembleManifest m;
  try {
    json j;
    in >> j;
    m.complete = j.at("complete").get<bool>();
    for (const auto& e : j.at("members")) {
      m.members.push_back({e.at("seed").get<std::uint64_t>(),
                           path.parent_path() / e.at("checkpoint").get<std::string>(),
                           e.at("best_epoch").get<int>(), e.at("val_loss").get<double>()});
    }
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  }
  return m;
}

std::vector<hanna::ModelParams> load_members(const EnsembleManifest& manifest, std::optional<int> expected_D) {
  std::vector<hanna::ModelParams> out;
  for (const auto& m : manifest.members) out.push_back(load_model(m.checkpoint, expected_D));
  return out;
}

EnsembleManifest train_ensemble(const TrainingData& data, const surrogate::SurrogateParams& surrogate,
                                const LossConfig& config, const std::filesystem::path& dir,
                                const ProgressFn& progress) {
  std::filesystem::create_directories(dir);
  const auto manifest_path = dir / "manifest.json";
  EnsembleManifest m;
  for (int k = 0; k < config.ensemble_size; ++k) {
    const auto seed = static_cast<std::uint64_t>(k);
    try {
      const auto res = train_model(data, surrogate, config, seed, progress);
      const auto path = dir / ("member_" + std::to_string(k) + ".hcnn");
      save_model(res.best, path);
      m.members.push_back({seed, path, res.best_epoch, res.best_val_loss});
    } catch (...) {
      save_manifest(m, manifest_path);
      throw;
    }
    save_manifest(m, manifest_path);
  }
  m.complete = true;
  save_manifest(m, manifest_path);
  return m;
}

hanna::Prediction ensemble_predict(std::span<const hanna::ModelParams> members, const Matrix& embeddings,
                                   std::span<const double> x, double T) {
  if (members.empty()) throw DataError("ensemble has no members");
  hanna::Prediction mean;
  mean.ln_gamma.assign(x.size(), 0.0);
  for (const auto& m : members) {
    if (m.D != embeddings.cols()) throw DataError("embedding dimension does not match ensemble member");
    const auto p = hanna::activity_coefficients(m, embeddings, x, T);
    mean.gE += p.gE;
    for (std::size_t i = 0; i < x.size(); ++i) mean.ln_gamma[i] += p.ln_gamma[i];
  }
  const double k = static_cast<double>(members.size());
  mean.gE /= k;
  for (auto& v : mean.ln_gamma) v /= k;
  return mean;
}

// --- configuration file -----------------------------------------------------------

TrainingConfigFile load_training_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open training config " + path.string());
  TrainingConfigFile c;
  const auto base = path.parent_path();
  auto resolve = [&](const json& j, const char* key, std::filesystem::path& out) {
    if (!j.contains(key)) return;
    std::filesystem::path p = j.at(key).get<std::string>();
    out = p.is_absolute() ? p : base / p;
  };
  try {
    json j;
    in >> j;
    auto& l = c.loss;
    l.w_LLE = j.value("w_LLE", l.w_LLE);
    l.w_Gibbs = j.value("w_Gibbs", l.w_Gibbs);
    l.w_Lips = j.value("w_Lips", l.w_Lips);
    l.beta_VLE = j.value("beta_VLE", l.beta_VLE);
    l.beta_ACI = j.value("beta_ACI", l.beta_ACI);
    l.beta_LLE = j.value("beta_LLE", l.beta_LLE);
    l.batch_size = j.value("batch_size", l.batch_size);
    l.epochs = j.value("epochs", l.epochs);
    l.max_lr = j.value("max_lr", l.max_lr);
    l.min_best_epoch = j.value("min_best_epoch", l.min_best_epoch);
    l.ensemble_size = j.value("ensemble_size", l.ensemble_size);
    l.weight_decay = j.value("weight_decay", l.weight_decay);
    resolve(j, "dataset", c.dataset);
    resolve(j, "folds", c.folds);
    resolve(j, "embeddings", c.embeddings);
    resolve(j, "antoine", c.antoine);
    resolve(j, "surrogate", c.surrogate);
    c.fold = j.value("fold", c.fold);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw DataError("malformed training config " + path.string() + ": " + e.what());
  }
  c.loss.validate();
  return c;
}

void save_training_config(const TrainingConfigFile& c, const std::filesystem::path& path) {
  const auto& l = c.loss;
  const json j = {{"w_LLE", l.w_LLE},
                  {"w_Gibbs", l.w_Gibbs},
                  {"w_Lips", l.w_Lips},
                  {"beta_VLE", l.beta_VLE},
                  {"beta_ACI", l.beta_ACI},
                  {"beta_LLE", l.beta_LLE},
                  {"batch_size", l.batch_size},
                  {"epochs", l.epochs},
                  {"max_lr", l.max_lr},
                  {"min_best_epoch", l.min_best_epoch},
                  {"ensemble_size", l.ensemble_size},
                  {"weight_decay", l.weight_decay},
                  {"dataset", c.dataset.string()},
                  {"folds", c.folds.string()},
                  {"embeddings", c.embeddings.string()},
                  {"antoine", c.antoine.string()},
                  {"surrogate", c.surrogate.string()},
                  {"fold", c.fold},
                  {"seed", c.seed}};
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace gibbsnet::train
