// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "gibbsnet/checkpoint.hpp"
#include "gibbsnet/evaluation.hpp"
#include "gibbsnet/trainer.hpp"
#include "json.hpp"

namespace gibbsnet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) out.push_back(item);
  return out;
}

double parse_double(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw UsageError(std::string("cannot parse ") + what + " '" + s + "'");
}

/// "lo:hi:step", inclusive of hi up to rounding.
std::vector<double> parse_range(const std::string& s) {
  const auto parts = split(s, ':');
  if (parts.size() != 3) throw UsageError("temperature range must look like lo:hi:step");
  const double lo = parse_double(parts[0], "range start"), hi = parse_double(parts[1], "range end"),
               step = parse_double(parts[2], "range step");
  if (!(step > 0.0) || hi < lo) throw UsageError("temperature range needs lo <= hi and step > 0");
  std::vector<double> T;
  for (long k = 0;; ++k) {
    const double t = lo + static_cast<double>(k) * step;
    if (t > hi + 1e-9 * step) break;
    T.push_back(t);
  }
  return T;
}

/// Composition from N - 1 or N values.
std::vector<double> parse_composition(const std::string& s, std::size_t n) {
  std::vector<double> x;
  for (const auto& v : split(s, ',')) x.push_back(parse_double(v, "mole fraction"));
  if (x.size() + 1 == n) {
    double rest = 1.0;
    for (double v : x) rest -= v;
    x.push_back(rest);
  }
  if (x.size() != n) throw UsageError("give N - 1 or N mole fractions");
  return x;
}

template <class F>
void write_to(const std::string& path, std::ostream& fallback, F&& write) {
  if (path.empty() || path == "-") {
    write(fallback);
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  write(f);
  if (!f) throw DataError("write failed for " + path);
}

struct ModelOptions {
  std::vector<std::string> checkpoints;
  std::string ensemble;
  std::string embeddings;

  void add(CLI::App* sub) {
    sub->add_option("--checkpoint", checkpoints, "Model checkpoint (repeat for an ensemble)")->check(CLI::ExistingFile);
    sub->add_option("--ensemble", ensemble, "Ensemble manifest")->check(CLI::ExistingFile);
    sub->add_option("--embeddings", embeddings, "Embedding file")->required()->check(CLI::ExistingFile);
  }

  std::vector<hanna::ModelParams> members(int D) const {
    if (checkpoints.empty() == ensemble.empty()) throw UsageError("give either --checkpoint or --ensemble");
    if (!ensemble.empty()) return train::load_members(train::load_manifest(ensemble), D);
    std::vector<hanna::ModelParams> out;
    for (const auto& c : checkpoints) out.push_back(load_model(c, D));
    return out;
  }
};

struct TrainingInputs {
  train::TrainingConfigFile config;
  data::Dataset dataset;
  data::FoldSplit folds;
  EmbeddingTable embeddings{0};
  data::AntoineTable antoine;

  explicit TrainingInputs(const std::string& path) : config(train::load_training_config(path)) {
    for (const auto* p : {&config.dataset, &config.folds, &config.embeddings, &config.antoine}) {
      if (p->empty() || !fs::exists(*p)) throw UsageError("training config names a missing file: '" + p->string() + "'");
    }
    dataset = data::load_dataset(config.dataset);
    folds = data::load_folds(config.folds);
    embeddings = load_embeddings(config.embeddings);
    const auto coeffs = thermo::load_antoine(config.antoine);
    antoine = data::antoine_table(coeffs);
  }

  const data::SplitSets& sets() const { return folds.sets(config.fold); }

  surrogate::SurrogateParams surrogate() const {
    if (config.surrogate.empty() || !fs::exists(config.surrogate))
      throw UsageError("training config names a missing surrogate: '" + config.surrogate.string() + "'");
    return surrogate::load_surrogate(config.surrogate);
  }
};

// Execution is single-threaded, which satisfies any cap; only the value is checked.
void check_thread_cap() {
  const char* v = std::getenv("GIBBSNET_THREADS");
  if (v == nullptr) return;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (end == v || *end != '\0' || n < 1) throw UsageError(std::string("GIBBSNET_THREADS must be a positive integer, got '") + v + "'");
}

void print_epoch(std::ostream& out, const train::EpochLog& l) {
  out << "epoch " << std::setw(3) << l.epoch << "  lr " << std::setprecision(4) << l.lr << "  loss " << l.train_loss
      << "  val " << l.val_loss << "  masked LLE " << l.masked_lle << "  lipschitz " << l.lipschitz_product
      << std::endl;
}

void write_history(const std::vector<train::EpochLog>& h, const std::string& path) {
  write_to(path, std::cout, [&](std::ostream& o) {
    o << "epoch,lr,train_loss,vle,aci,lle,gibbs,val_loss,lipschitz_product,masked_lle\n";
    o << std::setprecision(17);
    for (const auto& l : h)
      o << l.epoch << ',' << l.lr << ',' << l.train_loss << ',' << l.vle << ',' << l.aci << ',' << l.lle << ','
        << l.gibbs << ',' << l.val_loss << ',' << l.lipschitz_product << ',' << l.masked_lle << '\n';
  });
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Thermodynamically consistent excess Gibbs energy networks on a synthetic world", "gibbsnet"};
  app.require_subcommand(1);
  bool deterministic = false;
  app.add_flag("--deterministic", deterministic, "Bit-exact reproduction mode (execution is single-threaded throughout)");
  std::function<void()> action;

  // world gen
  auto* world_cmd = app.add_subcommand("world", "Synthetic world")->require_subcommand(1);
  auto* world_gen = world_cmd->add_subcommand("gen", "Generate a world: config, embeddings and Antoine files");
  std::string wg_config, wg_out;
  std::uint64_t wg_seed = 0;
  int wg_components = 0, wg_dim = 0;
  world_gen->add_option("--config", wg_config, "Start from this world config")->check(CLI::ExistingFile);
  auto* wg_seed_opt = world_gen->add_option("--seed", wg_seed, "World seed");
  auto* wg_comp_opt = world_gen->add_option("--components", wg_components, "Number of components");
  auto* wg_dim_opt = world_gen->add_option("--embedding-dim", wg_dim, "Embedding dimension");
  world_gen->add_option("--out", wg_out, "Output directory")->required();
  world_gen->callback([&] {
    action = [&] {
      world::WorldConfig cfg = wg_config.empty() ? world::WorldConfig{} : world::load_world_config(wg_config);
      if (wg_seed_opt->count()) cfg.seed = wg_seed;
      if (wg_comp_opt->count()) cfg.n_components = wg_components;
      if (wg_dim_opt->count()) cfg.embedding_dim = wg_dim;
      cfg.validate();
      const auto w = world::make_world(cfg);
      fs::create_directories(wg_out);
      world::save_world_config(cfg, fs::path(wg_out) / "world.json");
      save_embeddings(w.embeddings, fs::path(wg_out) / "embeddings.jsonl");
      thermo::save_antoine(w.antoine, fs::path(wg_out) / "antoine.json");
      out << "world seed " << cfg.seed << ": " << cfg.n_components << " components, D = " << cfg.embedding_dim
          << ", written to " << wg_out << '\n';
    };
  });

  // data gen / data split
  auto* data_cmd = app.add_subcommand("data", "Datasets and splits")->require_subcommand(1);
  auto* data_gen = data_cmd->add_subcommand("gen", "Sample VLE, ACI and LLE data from a world");
  std::string dg_world, dg_out;
  data_gen->add_option("--world", dg_world, "World config (world.json)")->required()->check(CLI::ExistingFile);
  data_gen->add_option("--out", dg_out, "Output dataset (JSON lines)")->required();
  data_gen->callback([&] {
    action = [&] {
      const auto w = world::make_world(world::load_world_config(dg_world));
      const auto res = data::sample_datasets(w);
      data::save_dataset(res.dataset, dg_out);
      const auto c = res.dataset.counts();
      out << "VLE " << c.vle << ", ACI " << c.aci << ", LLE " << c.lle << " points in "
          << data::systems_of(res.dataset).size() << " systems (" << res.stats.systems_with_gap
          << " with a miscibility gap)\n";
    };
  });
  auto* data_split = data_cmd->add_subcommand("split", "System-wise 10-fold split");
  std::string ds_data, ds_out;
  std::uint64_t ds_seed = 0;
  data_split->add_option("--data", ds_data, "Dataset")->required()->check(CLI::ExistingFile);
  data_split->add_option("--seed", ds_seed, "Split seed");
  data_split->add_option("--out", ds_out, "Output folds file")->required();
  data_split->callback([&] {
    action = [&] {
      const auto split = data::split_folds(data::systems_of(data::load_dataset(ds_data)), ds_seed);
      data::save_folds(split, ds_out);
      out << "10 folds over " << split.fold_of.size() << " systems written to " << ds_out << '\n';
    };
  });

  // surrogate train
  auto* sur_cmd = app.add_subcommand("surrogate", "Surrogate LLE solver")->require_subcommand(1);
  auto* sur_train = sur_cmd->add_subcommand("train", "Train the surrogate on oracle CEM labels");
  std::string st_world, st_data, st_folds, st_out;
  int st_fold = 0, st_epochs = 200;
  std::size_t st_extra = 6000;
  std::uint64_t st_seed = 0;
  sur_train->add_option("--world", st_world, "World config")->required()->check(CLI::ExistingFile);
  sur_train->add_option("--data", st_data, "Dataset")->required()->check(CLI::ExistingFile);
  sur_train->add_option("--folds", st_folds, "Folds file")->required()->check(CLI::ExistingFile);
  sur_train->add_option("--fold", st_fold, "Fold (-1 for the full split)");
  sur_train->add_option("--extra", st_extra, "Extra state points beyond one per LLE point");
  sur_train->add_option("--epochs", st_epochs, "Epochs");
  sur_train->add_option("--seed", st_seed, "Seed");
  sur_train->add_option("--out", st_out, "Output surrogate checkpoint")->required();
  sur_train->callback([&] {
    action = [&] {
      const auto w = world::make_world(world::load_world_config(st_world));
      const auto ds = data::load_dataset(st_data);
      const auto sets = data::load_folds(st_folds).sets(st_fold);
      const auto labels = surrogate::generate_labels(data::surrogate_requests(w, ds, st_extra, st_seed));
      const auto split = data::split_samples(labels.samples, sets);
      surrogate::TrainConfig tc;
      tc.epochs = st_epochs;
      tc.seed = st_seed;
      const auto res = surrogate::train_surrogate(split.train, split.val, tc);
      surrogate::save_surrogate(res.params, st_out);
      out << labels.samples.size() << " labelled curves (" << labels.dropped_no_gap << " without gap, "
          << labels.dropped_unrefined << " unrefined dropped); train " << split.train.size() << ", val "
          << split.val.size() << ", test " << split.test.size() << '\n';
      const auto& held = split.test.empty() ? split.val : split.test;
      out << "best epoch " << res.best_epoch << ", held-out MAE "
          << (held.empty() ? std::nan("") : surrogate::mean_absolute_error(res.params, held)) << '\n';
    };
  });

  // train / train-ensemble
  auto* train_cmd = app.add_subcommand("train", "Train one model");
  std::string tr_config, tr_out, tr_history;
  std::uint64_t tr_seed = 0;
  int tr_epochs = 0;
  double tr_wlips = 0.0, tr_wlle = 0.0, tr_wgibbs = 0.0;
  bool tr_quiet = false;
  train_cmd->add_option("--config", tr_config, "Training config (JSON)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", tr_out, "Output checkpoint")->required();
  train_cmd->add_option("--history", tr_history, "Per-epoch CSV");
  auto* tr_seed_opt = train_cmd->add_option("--seed", tr_seed, "Override the config seed");
  auto* tr_epochs_opt = train_cmd->add_option("--epochs", tr_epochs, "Override the number of epochs");
  auto* tr_wlips_opt = train_cmd->add_option("--w-lips", tr_wlips, "Override the Lipschitz weight");
  auto* tr_wlle_opt = train_cmd->add_option("--w-lle", tr_wlle, "Override the LLE weight");
  auto* tr_wgibbs_opt = train_cmd->add_option("--w-gibbs", tr_wgibbs, "Override the Gibbs weight");
  train_cmd->add_flag("--quiet", tr_quiet, "No per-epoch output");
  train_cmd->callback([&] {
    action = [&] {
      TrainingInputs in(tr_config);
      auto& cfg = in.config;
      if (tr_seed_opt->count()) cfg.seed = tr_seed;
      if (tr_epochs_opt->count()) cfg.loss.epochs = tr_epochs;
      if (tr_wlips_opt->count()) cfg.loss.w_Lips = tr_wlips;
      if (tr_wlle_opt->count()) cfg.loss.w_LLE = tr_wlle;
      if (tr_wgibbs_opt->count()) cfg.loss.w_Gibbs = tr_wgibbs;
      cfg.loss.validate();
      const auto td = train::prepare_training_data(in.dataset, in.sets(), in.embeddings, in.antoine);
      train::ProgressFn progress;
      if (!tr_quiet) progress = [&](const train::EpochLog& l) { print_epoch(out, l); };
      const auto res = train::train_model(td, in.surrogate(), cfg.loss, cfg.seed, progress);
      save_model(res.best, tr_out);
      if (!tr_history.empty()) write_history(res.history, tr_history);
      out << "best epoch " << res.best_epoch << ", validation loss " << std::setprecision(6) << res.best_val_loss
          << ", written to " << tr_out << '\n';
    };
  });

  auto* ens_cmd = app.add_subcommand("train-ensemble", "Train ensemble members with seeds 0..n-1");
  std::string en_config, en_out;
  int en_members = 0;
  bool en_quiet = false;
  ens_cmd->add_option("--config", en_config, "Training config (JSON)")->required()->check(CLI::ExistingFile);
  ens_cmd->add_option("--out", en_out, "Output directory")->required();
  auto* en_members_opt = ens_cmd->add_option("--members", en_members, "Override the ensemble size");
  ens_cmd->add_flag("--quiet", en_quiet, "No per-epoch output");
  ens_cmd->callback([&] {
    action = [&] {
      TrainingInputs in(en_config);
      if (en_members_opt->count()) in.config.loss.ensemble_size = en_members;
      in.config.loss.validate();
      const auto td = train::prepare_training_data(in.dataset, in.sets(), in.embeddings, in.antoine);
      train::ProgressFn progress;
      if (!en_quiet) progress = [&](const train::EpochLog& l) { print_epoch(out, l); };
      const auto m = train::train_ensemble(td, in.surrogate(), in.config.loss, en_out, progress);
      for (const auto& e : m.members)
        out << "member seed " << e.seed << ": best epoch " << e.best_epoch << ", validation loss " << e.val_loss << '\n';
    };
  });

  // predict gamma / txy / binodal
  auto* pred_cmd = app.add_subcommand("predict", "Predictions from a trained model")->require_subcommand(1);
  ModelOptions pg_model, pt_model, pb_model;
  std::string pg_comps, pg_x, pg_out;
  double pg_T = 0.0;
  auto* pred_gamma = pred_cmd->add_subcommand("gamma", "ln gamma and g^E/RT as JSON");
  pg_model.add(pred_gamma);
  pred_gamma->add_option("--components", pg_comps, "Comma-separated component ids")->required();
  pred_gamma->add_option("--x", pg_x, "Mole fractions (N - 1 or N values)")->required();
  pred_gamma->add_option("--T", pg_T, "Temperature in K")->required();
  pred_gamma->add_option("--out", pg_out, "Output file (default stdout)");
  pred_gamma->callback([&] {
    action = [&] {
      const auto table = load_embeddings(pg_model.embeddings);
      const auto members = pg_model.members(table.dimension());
      const auto comps = split(pg_comps, ',');
      const auto x = parse_composition(pg_x, comps.size());
      thermo::MixtureState state{comps, x, pg_T};
      state.validate();
      const auto p = train::ensemble_predict(members, table.rows(comps), x, pg_T);
      const json j = {{"components", comps}, {"x", x}, {"T", pg_T}, {"ln_gamma", p.ln_gamma}, {"gE_RT", p.gE}};
      write_to(pg_out, out, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
    };
  });

  std::string pt_comps, pt_antoine, pt_out;
  double pt_T = 0.0;
  auto* pred_txy = pred_cmd->add_subcommand("txy", "Isothermal p-x-y bubble line as CSV");
  pt_model.add(pred_txy);
  pred_txy->add_option("--antoine", pt_antoine, "Antoine file")->required()->check(CLI::ExistingFile);
  pred_txy->add_option("--components", pt_comps, "Two component ids")->required();
  pred_txy->add_option("--T", pt_T, "Temperature in K")->required();
  pred_txy->add_option("--out", pt_out, "Output CSV (default stdout)");
  pred_txy->callback([&] {
    action = [&] {
      const auto comps = split(pt_comps, ',');
      if (comps.size() != 2) throw UsageError("p-x-y needs exactly two components");
      const auto table = data::antoine_table(thermo::load_antoine(pt_antoine));
      std::vector<thermo::AntoineCoefficients> pair;
      for (const auto& c : comps) {
        const auto it = table.find(c);
        if (it == table.end()) throw DataError("no Antoine coefficients for " + c);
        pair.push_back(it->second);
      }
      auto emb = load_embeddings(pt_model.embeddings);
      auto members = pt_model.members(emb.dimension());
      const eval::EnsembleModel model(std::move(members), std::move(emb));
      const auto rows = thermo::isothermal_pxy(
          [&](const std::vector<double>& x, double T) { return model.ln_gamma(comps, x, T); }, pair, pt_T);
      write_to(pt_out, out, [&](std::ostream& o) { thermo::write_pxy_csv(rows, o); });
    };
  });

  std::string pb_comps, pb_range, pb_out;
  auto* pred_bin = pred_cmd->add_subcommand("binodal", "LLE binodal over a temperature range as CSV");
  pb_model.add(pred_bin);
  pred_bin->add_option("--components", pb_comps, "Two component ids")->required();
  pred_bin->add_option("--T-range", pb_range, "lo:hi:step in K")->required();
  pred_bin->add_option("--out", pb_out, "Output CSV (default stdout)");
  pred_bin->callback([&] {
    action = [&] {
      const auto comps = split(pb_comps, ',');
      if (comps.size() != 2) throw UsageError("a binodal needs exactly two components");
      const auto T = parse_range(pb_range);
      const auto table = load_embeddings(pb_model.embeddings);
      const eval::EnsembleModel model(pb_model.members(table.dimension()), table);
      const auto scan = cem::binodal_scan(model.binary(comps[0], comps[1]), T);
      write_to(pb_out, out, [&](std::ostream& o) { cem::write_binodal_csv(scan, o); });
    };
  });

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Test-set metrics and reports");
  std::string ev_config, ev_csv, ev_json, ev_set = "test";
  std::vector<std::string> ev_checkpoints;
  std::string ev_ensemble;
  bool ev_no_baseline = false;
  eval_cmd->add_option("--config", ev_config, "Training config naming data, folds and fold")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--checkpoint", ev_checkpoints, "Model checkpoint (repeat for an ensemble)")->check(CLI::ExistingFile);
  eval_cmd->add_option("--ensemble", ev_ensemble, "Ensemble manifest")->check(CLI::ExistingFile);
  eval_cmd->add_option("--set", ev_set, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));
  eval_cmd->add_option("--csv", ev_csv, "Per-point CSV");
  eval_cmd->add_option("--json", ev_json, "Summary JSON");
  eval_cmd->add_flag("--no-baseline", ev_no_baseline, "Skip the ideal-solution baseline");
  eval_cmd->callback([&] {
    action = [&] {
      TrainingInputs in(ev_config);
      ModelOptions mo{ev_checkpoints, ev_ensemble, ""};
      const eval::EnsembleModel model(mo.members(in.embeddings.dimension()), in.embeddings);
      const auto part = data::partition(in.dataset, in.sets());
      const auto& pts = ev_set == "train" ? part.train : ev_set == "val" ? part.val : part.test;
      if (pts.empty()) throw DataError("the " + ev_set + " split of this fold is empty");
      const auto recs = eval::evaluate_points(model, pts, in.antoine);
      const auto rep = eval::summarize(recs);
      std::optional<eval::Report> base;
      if (!ev_no_baseline) base = eval::summarize(eval::evaluate_points(eval::IdealModel{}, pts, in.antoine));
      if (!ev_csv.empty()) eval::write_points_csv(recs, fs::path(ev_csv));
      if (!ev_json.empty()) eval::write_report_json(rep, base ? &*base : nullptr, fs::path(ev_json));
      out << std::setprecision(4);
      for (auto kind : {data::Kind::VLE, data::Kind::ACI}) {
        const auto& s = rep.summary(kind);
        out << data::kind_name(kind) << ": median MAE_sys " << s.box.median << " over " << s.systems.size()
            << " systems";
        if (base) out << " (ideal " << base->summary(kind).box.median << ")";
        out << '\n';
      }
      out << "LLE: median MAE_sys " << rep.lle.box.median << ", detection rate " << rep.detection_rate << " on "
          << rep.lle_points << " points\n";
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return e.get_exit_code() == 0 ? 0 : static_cast<int>(ErrorKind::Usage);
  }
  if (!action) return static_cast<int>(ErrorKind::Usage);
  try {
    check_thread_cap();
    action();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::Data);
  }
  return 0;
}

}  // namespace gibbsnet::cli
