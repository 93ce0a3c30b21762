#include "getral/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "getral/checkpoint.hpp"
#include "getral/config.hpp"
#include "getral/dataset.hpp"
#include "getral/gradcheck_suite.hpp"
#include "getral/model.hpp"
#include "getral/synth.hpp"
#include "getral/trainer.hpp"

namespace getral {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public Error {
 public:
  using Error::Error;
};

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  return f;
}

template <typename T>
std::vector<T> pick(const std::vector<T>& all, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(all[i]);
  return out;
}

struct TrainArgs {
  std::string data;
  std::string valid_data;
  std::string embeddings;
  std::string out_dir;
  std::string config_file;
  std::size_t folds = 0;
  bool quiet = false;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
};

struct FoldOutcome {
  TrainResult result;
  std::vector<Prediction> valid_predictions;
};

// Trains one model and writes checkpoint, history and metrics into `dir`.
FoldOutcome train_one(const std::vector<ClaimInstance>& train_raw, const std::vector<ClaimInstance>& valid_raw,
                      TrainConfig config, const TrainArgs& args, bool embed_dim_set, const fs::path& dir,
                      std::ostream& err) {
  ModelBundle bundle;
  bundle.lexicon = Lexicon::build(train_raw);
  Rng master(config.seed);
  Rng embed_rng = master.fork(11);
  Rng init_rng = master.fork(12);

  EmbeddingTable table;
  if (!args.embeddings.empty()) {
    table = load_embeddings(args.embeddings, bundle.lexicon.words, embed_rng);
    if (embed_dim_set && config.model.embed_dim != table.dim()) {
      throw UsageError("--embed-dim " + std::to_string(config.model.embed_dim) + " conflicts with the " +
                       std::to_string(table.dim()) + "-dimensional embeddings file");
    }
    config.model.embed_dim = table.dim();
  } else {
    table = random_embeddings(bundle.lexicon.words, config.model.embed_dim, embed_rng);
  }
  config.validate();
  bundle.config = config;
  bundle.params = ModelParams::init(config.model, bundle.lexicon, table, init_rng);

  std::ostream* log = args.quiet ? nullptr : &err;
  const auto train_set = encode_dataset(train_raw, bundle.lexicon, config.model, &err);
  const auto valid_set = encode_dataset(valid_raw, bundle.lexicon, config.model, &err);
  if (train_set.empty() || valid_set.empty()) throw Error("no usable instances in the training or validation split");

  FoldOutcome outcome;
  outcome.result = train(bundle.params, train_set, valid_set, config, log);
  outcome.valid_predictions = predict(bundle.params, config.model, valid_set);

  fs::create_directories(dir);
  const json metrics = to_json(outcome.result.best_valid);
  bundle.metric = {{"valid_f1_macro", outcome.result.best_valid.f1_macro},
                   {"best_epoch", outcome.result.best_epoch}};
  save_model(dir / "model.gtrl", bundle);
  {
    auto f = open_out(dir / "history.csv");
    write_history_csv(f, outcome.result.history);
  }
  {
    auto f = open_out(dir / "metrics.json");
    f << metrics.dump(2) << '\n';
  }
  return outcome;
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  ConfigValues file_values;
  if (!args.config_file.empty()) file_values = read_config_file(args.config_file);
  ConfigValues flag_values;
  for (const auto& [key, opt] : args.options)
    if (opt->count() > 0) flag_values[key] = args.values.at(key);
  TrainConfig config = resolve_config(TrainConfig{}, file_values, flag_values);
  const bool embed_dim_set = file_values.contains("embed-dim") || flag_values.contains("embed-dim");

  const std::vector<ClaimInstance> data = load_dataset(args.data);
  const fs::path dir = args.out_dir;

  if (args.folds > 0) {
    std::vector<int> labels;
    for (const auto& d : data) labels.push_back(d.label);
    const auto folds = stratified_folds(labels, args.folds, config.seed);
    std::vector<int> preds;
    std::vector<int> truth;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      const FoldOutcome o = train_one(pick(data, folds[f].train), pick(data, folds[f].valid), config, args,
                                      embed_dim_set, dir / ("fold-" + std::to_string(f)), err);
      for (const auto& p : o.valid_predictions) {
        preds.push_back(p.predicted);
        truth.push_back(p.label);
      }
    }
    const json pooled = to_json(compute_metrics(preds, truth));
    auto f = open_out(dir / "metrics.json");
    f << pooled.dump(2) << '\n';
    out << pooled.dump(2) << '\n';
    return 0;
  }

  std::vector<ClaimInstance> train_raw;
  std::vector<ClaimInstance> valid_raw;
  if (!args.valid_data.empty()) {
    train_raw = data;
    valid_raw = load_dataset(args.valid_data);
  } else {
    for (const auto& d : data) {
      if (d.split == "valid") valid_raw.push_back(d);
      else if (d.split != "test") train_raw.push_back(d);
    }
    if (valid_raw.empty()) {
      std::vector<int> labels;
      for (const auto& d : train_raw) labels.push_back(d.label);
      const Split s = stratified_split(labels, config.valid_fraction, config.seed);
      valid_raw = pick(train_raw, s.valid);
      train_raw = pick(train_raw, s.train);
    }
  }
  const FoldOutcome o = train_one(train_raw, valid_raw, config, args, embed_dim_set, dir, err);
  out << to_json(o.result.best_valid).dump(2) << '\n';
  return 0;
}

std::vector<EncodedInstance> encode_for(const ModelBundle& bundle, const std::string& data, std::ostream& err) {
  const auto raw = load_dataset(data);
  auto encoded = encode_dataset(raw, bundle.lexicon, bundle.config.model, &err);
  if (encoded.empty()) throw Error("no usable instances in " + data);
  return encoded;
}

int cmd_eval(const std::string& checkpoint, const std::string& data, std::ostream& out, std::ostream& err) {
  ModelBundle bundle = load_model(checkpoint);
  const auto encoded = encode_for(bundle, data, err);
  out << to_json(evaluate(bundle.params, bundle.config.model, encoded)).dump(2) << '\n';
  return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& data, const std::string& output,
                std::ostream& out, std::ostream& err) {
  ModelBundle bundle = load_model(checkpoint);
  const auto encoded = encode_for(bundle, data, err);
  std::ofstream file;
  std::ostream* sink = &out;
  if (!output.empty()) {
    file = open_out(output);
    sink = &file;
  }
  for (const auto& p : predict(bundle.params, bundle.config.model, encoded)) {
    json j;
    j["id"] = p.id;
    j["label"] = p.label;
    j["predicted"] = p.predicted;
    j["y_hat"] = {p.p_true, p.p_fake};
    j["doc_alpha"] = p.doc_alpha;
    *sink << j.dump() << '\n';
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, double step, double tol, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  const auto cases = run_gradcheck_suite(seed, step, tol);
  std::size_t failed = 0;
  char line[512];
  for (const auto& c : cases) {
    std::snprintf(line, sizeof line, "%-4s %-40s max rel err %.3e over %zu coords\n", c.report.pass ? "ok" : "FAIL",
                  c.name.c_str(), c.report.max_rel_err, c.report.coordinates);
    out << line;
    if (!c.report.pass) {
      out << "     worst: " << c.report.worst << '\n';
      ++failed;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::snprintf(line, sizeof line, "%zu/%zu checks passed in %.2f s\n", cases.size() - failed, cases.size(), secs);
  out << line;
  return failed == 0 ? 0 : 1;
}

int cmd_synth(const SynthOptions& opts, const std::string& output, std::ostream& out) {
  const auto corpus = synthetic_corpus(opts);
  if (output.empty()) {
    write_dataset(out, corpus);
  } else {
    save_dataset(output, corpus);
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Evidence-based fake news detection with refined claim and evidence graphs", "getral"};
  app.require_subcommand(1);

  TrainArgs targs;
  auto* train_cmd = app.add_subcommand("train", "Train a model; writes model.gtrl, history.csv and metrics.json");
  train_cmd->add_option("--data", targs.data, "JSONL dataset")->required();
  train_cmd->add_option("--valid-data", targs.valid_data, "Explicit validation JSONL");
  train_cmd->add_option("--embeddings", targs.embeddings, "Text embedding file (word v1 ... vd)");
  train_cmd->add_option("--out-dir", targs.out_dir, "Output directory")->required();
  train_cmd->add_option("--config", targs.config_file, "key = value config file");
  auto* folds_opt = train_cmd->add_option("--folds", targs.folds, "Stratified K-fold cross validation");
  train_cmd->add_flag("--quiet", targs.quiet, "No per-epoch log");
  for (const auto& key : config_keys()) {
    targs.values[key];
    targs.options[key] = train_cmd->add_option("--" + key, targs.values[key], "Overrides config '" + key + "'");
  }
  folds_opt->excludes("--valid-data");

  std::string checkpoint;
  std::string data;
  std::string output;
  auto* eval_cmd = app.add_subcommand("eval", "Print metrics of a checkpoint on a dataset as JSON");
  eval_cmd->add_option("--checkpoint", checkpoint)->required();
  eval_cmd->add_option("--data", data)->required();

  auto* predict_cmd = app.add_subcommand("predict", "Write per-instance probabilities and evidence attention");
  predict_cmd->add_option("--checkpoint", checkpoint)->required();
  predict_cmd->add_option("--data", data)->required();
  predict_cmd->add_option("--out", output, "JSONL output (default stdout)");

  std::uint64_t gc_seed = 2024;
  double gc_step = 1e-5;
  double gc_tol = 1e-4;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  gc_cmd->add_option("--seed", gc_seed);
  gc_cmd->add_option("--step", gc_step);
  gc_cmd->add_option("--tol", gc_tol);

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth-data", "Write the synthetic keyword corpus as JSONL");
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--n", synth.count);
  synth_cmd->add_option("--distractor-rate", synth.distractor_rate);
  synth_cmd->add_flag("--publishers", synth.publishers, "Attach random publishers to evidences");
  synth_cmd->add_option("--out", output, "Output file (default stdout)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* sub = nullptr;
    for (const CLI::App* s : app.get_subcommands()) sub = s;
    err << (sub ? sub->help() : app.help());
    return e.get_exit_code() != 0 ? e.get_exit_code() : 2;
  }

  try {
    if (*train_cmd) return cmd_train(targs, out, err);
    if (*eval_cmd) return cmd_eval(checkpoint, data, out, err);
    if (*predict_cmd) return cmd_predict(checkpoint, data, output, out, err);
    if (*gc_cmd) return cmd_gradcheck(gc_seed, gc_step, gc_tol, out);
    if (*synth_cmd) return cmd_synth(synth, output, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace getral
