// SPDX-License-Identifier: Apache-2.0

#include "scd/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "scd/checkpoint.hpp"
#include "scd/corpus.hpp"
#include "scd/gradcheck.hpp"
#include "scd/metrics.hpp"

namespace scd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

json RunConfig::to_json() const {
  return json{{"data", data},
              {"out", out},
              {"split", split},
              {"checkpoint", checkpoint},
              {"seed", seed},
              {"max_vocab", max_vocab},
              {"grid", grid},
              {"model", model.to_json()},
              {"train", train.to_json()},
              {"synth", synth.to_json()}};
}

RunConfig RunConfig::from_json(const json& j) {
  static const char* const kKeys[] = {"data",      "out",  "split", "checkpoint", "seed",
                                      "max_vocab", "grid", "model", "train",      "synth"};
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(kKeys), std::end(kKeys), key) == std::end(kKeys)) {
      throw UsageError("unknown config key '" + key + "'");
    }
  }
  RunConfig c;
  c.data = j.value("data", c.data);
  c.out = j.value("out", c.out);
  c.split = j.value("split", c.split);
  c.checkpoint = j.value("checkpoint", c.checkpoint);
  c.seed = j.value("seed", c.seed);
  c.max_vocab = j.value("max_vocab", c.max_vocab);
  c.grid = j.value("grid", c.grid);
  if (j.contains("model")) c.model = experiment::ModelSpec::from_json(j.at("model"));
  if (j.contains("train")) c.train = training::TrainConfig::from_json(j.at("train"));
  if (j.contains("synth")) c.synth = synthgen::SynthSpec::from_json(j.at("synth"));
  return c;
}

namespace {

struct Flags {
  std::string config, data, out, split, checkpoint, variant, subset = "test";
  std::string contexts, variants, seeds, signal;
  std::uint64_t seed = 0;
  std::size_t context_size = 0, dim = 0, epochs = 0, episodes = 0;
  double lr = 0.0, overlap = 0.0;
  bool grid = false;
};

void add_common_options(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "JSON run configuration");
  sub->add_option("--seed", f.seed, "Seed for splits, synthetic data and training");
  sub->add_option("--variant", f.variant, "Model kind: a variant name, logreg, dnn or random_guess");
  sub->add_option("--context-size", f.context_size, "Context sentences per side beyond the critical one");
  sub->add_option("--out", f.out, "Output directory");
  sub->add_option("--data", f.data, "Transcript file (JSON lines)");
  sub->add_option("--dim", f.dim, "Hidden and attention size");
  sub->add_option("--epochs", f.epochs, "Maximum training epochs");
  sub->add_option("--lr", f.lr, "Learning rate");
}

bool given(const CLI::App* sub, const std::string& name) {
  try {
    return sub->get_option(name)->count() > 0;
  } catch (const CLI::OptionNotFound&) {
    return false;
  }
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

template <typename U>
std::vector<U> parse_numbers(const std::string& text, const char* what) {
  std::vector<U> out;
  for (const auto& item : split_list(text)) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || item.front() == '-') throw UsageError(std::string("invalid ") + what + " '" + item + "'");
    out.push_back(static_cast<U>(v));
  }
  if (out.empty()) throw UsageError(std::string("empty ") + what + " list");
  return out;
}

RunConfig resolve(const CLI::App* sub, const Flags& f) {
  RunConfig c;
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw UsageError("cannot open config '" + f.config + "'");
    try {
      c = RunConfig::from_json(json::parse(in));
    } catch (const json::exception& e) {
      throw UsageError("invalid config '" + f.config + "': " + e.what());
    } catch (const std::invalid_argument& e) {
      throw UsageError("invalid config '" + f.config + "': " + e.what());
    }
  }
  if (given(sub, "--seed")) c.seed = f.seed;
  if (given(sub, "--variant")) c.model.kind = f.variant;
  if (given(sub, "--context-size")) c.model.context_size = f.context_size;
  if (given(sub, "--out")) c.out = f.out;
  if (given(sub, "--data")) c.data = f.data;
  if (given(sub, "--dim")) c.model.dim = c.model.attention_dim = f.dim;
  if (given(sub, "--epochs")) c.train.max_epochs = f.epochs;
  if (given(sub, "--lr")) c.train.lr = f.lr;
  if (given(sub, "--grid")) c.grid = f.grid;
  if (given(sub, "--split")) c.split = f.split;
  if (given(sub, "--checkpoint")) c.checkpoint = f.checkpoint;
  if (given(sub, "--episodes")) c.synth.n_episodes = f.episodes;
  if (given(sub, "--overlap")) c.synth.overlap = f.overlap;
  if (given(sub, "--signal")) {
    if (f.signal != "on" && f.signal != "off") throw UsageError("--signal takes on or off");
    c.synth.context_signal = f.signal == "on";
  }
  c.train.seed = c.seed;
  c.synth.seed = c.seed;
  if (!experiment::is_known_kind(c.model.kind)) throw UsageError("unknown model kind '" + c.model.kind + "'");
  try {
    c.train.validate();
    c.synth.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("invalid config: ") + e.what());
  }
  return c;
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing ") + what + " path");
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " not found: " + path);
}

fs::path output_dir(const RunConfig& c) {
  if (c.out.empty()) throw UsageError("missing --out directory");
  fs::create_directories(c.out);
  return fs::path(c.out);
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<corpus::Episode> read_episodes(const RunConfig& c) {
  require_file(c.data, "transcript file");
  return corpus::parse_transcripts(c.data);
}

experiment::Dataset load_dataset(const RunConfig& c) {
  auto episodes = read_episodes(c);
  if (!c.split.empty()) {
    require_file(c.split, "split manifest");
    return experiment::prepare(episodes, corpus::SplitManifest::load(c.split), c.max_vocab);
  }
  return experiment::prepare(episodes, c.seed, c.max_vocab);
}

std::size_t window_of(const json& description) {
  if (description.at("kind") == "neural") return description.at("model").at("context_size").get<std::size_t>() + 1;
  return 1;
}

checkpoint::LoadedModel open_checkpoint(const RunConfig& c) {
  require_file(c.checkpoint, "checkpoint");
  return checkpoint::load_model(c.checkpoint);
}

// ---- subcommands -----------------------------------------------------------

int cmd_prepare(const RunConfig& c, std::ostream& out) {
  const auto data = load_dataset(c);
  const auto dir = output_dir(c);
  data.split.save((dir / "split.json").string());
  write_json(dir / "vocab.json", data.vocab.to_json());
  write_json(dir / "run_config.json", c.to_json());
  const auto train_ex = corpus::extract_examples(data.train, 1);
  out << "episodes: " << data.train.size() << " train / " << data.val.size() << " val / " << data.test.size()
      << " test\n"
      << "vocabulary: " << data.vocab.size() << " entries\n"
      << "train decision points: " << train_ex.size() << " (change rate " << std::fixed << std::setprecision(3)
      << corpus::positive_rate(train_ex) << ")\n";
  return kExitOk;
}

int cmd_synth(const RunConfig& c, std::ostream& out) {
  const auto dir = output_dir(c);
  const auto episodes = synthgen::generate(c.synth);
  corpus::write_transcripts(episodes, (dir / "transcripts.jsonl").string());
  write_json(dir / "run_config.json", c.to_json());
  std::size_t utterances = 0;
  for (const auto& ep : episodes) utterances += ep.utterances.size();
  out << "wrote " << episodes.size() << " episodes, " << utterances << " utterances to "
      << (dir / "transcripts.jsonl").string() << '\n';
  return kExitOk;
}

json run_json(const experiment::RunResult& r) {
  return json{{"model", r.spec.kind},        {"context_size", r.spec.context_size}, {"seed", r.seed},
              {"lr", r.config.lr},           {"dropout", r.config.dropout},         {"best_epoch", r.best_epoch},
              {"best_val_f1", r.best_val_f1}, {"seconds", r.seconds},               {"test", r.test.to_json()}};
}

json history_json(const std::vector<training::EpochRecord>& history) {
  json out = json::array();
  for (const auto& h : history) {
    out.push_back(
        {{"epoch", h.epoch}, {"train_loss", h.train_loss}, {"val_loss", h.val_loss}, {"val_f1", h.val_f1}});
  }
  return out;
}

int cmd_train(const RunConfig& c, std::ostream& out, std::ostream& err) {
  if (c.model.kind == "random_guess") throw UsageError("random_guess has nothing to train; use sweep");
  const auto data = load_dataset(c);
  const auto dir = output_dir(c);
  err << "training " << c.model.kind << " (context " << c.model.context_size << ", "
      << (c.grid ? "grid search" : "fixed config") << ")\n";
  auto result = experiment::run(data, c.model, c.train, c.grid);

  json ckpt_config{{"vocab", data.vocab.to_json()}, {"train", result.config.to_json()}, {"run", c.to_json()}};
  checkpoint::save_model(*result.model, ckpt_config, (dir / "model.ckpt").string());
  write_json(dir / "history.json", history_json(result.history));
  write_json(dir / "metrics.json", run_json(result));
  write_json(dir / "run_config.json", c.to_json());
  data.split.save((dir / "split.json").string());

  out << "best epoch " << result.best_epoch << " (val F1 " << std::fixed << std::setprecision(4)
      << result.best_val_f1 << ", lr " << result.config.lr << ", dropout " << result.config.dropout << ")\n"
      << "test metrics:\n"
      << result.test.to_table();
  return kExitOk;
}

int cmd_eval(const RunConfig& c, const std::string& subset, std::ostream& out) {
  auto loaded = open_checkpoint(c);
  auto episodes = read_episodes(c);
  if (!c.split.empty()) {
    require_file(c.split, "split manifest");
    const auto manifest = corpus::SplitManifest::load(c.split);
    const std::vector<std::string>* ids = subset == "train" ? &manifest.train
                                          : subset == "val" ? &manifest.val
                                          : subset == "test" ? &manifest.test
                                                             : nullptr;
    if (!ids) throw UsageError("--subset must be train, val or test");
    episodes = corpus::select_episodes(episodes, *ids);
  }
  corpus::assign_tokens(episodes, corpus::Vocabulary::from_json(loaded.config.at("vocab")));
  const auto examples = corpus::extract_examples(episodes, window_of(loaded.config.at("model")));
  if (examples.empty()) throw std::runtime_error("no decision points to evaluate");
  const auto scored = training::score(*loaded.model, examples);
  out << scored.report.to_json().dump() << '\n' << scored.report.to_table();
  if (!c.out.empty()) write_json(output_dir(c) / "metrics.json", scored.report.to_json());
  return kExitOk;
}

int cmd_predict(const RunConfig& c, std::ostream& out) {
  auto loaded = open_checkpoint(c);
  auto episodes = read_episodes(c);
  corpus::assign_tokens(episodes, corpus::Vocabulary::from_json(loaded.config.at("vocab")));
  const std::size_t t = window_of(loaded.config.at("model"));

  std::ofstream file;
  std::ostream* sink = &out;
  if (!c.out.empty()) {
    file.open(output_dir(c) / "predictions.tsv");
    if (!file) throw std::runtime_error("cannot write predictions");
    sink = &file;
  }
  *sink << "episode_id\tposition\tp_change\tpredicted\n";
  for (const auto& ep : episodes) {
    const auto windows = corpus::extract_windows(ep, t);
    const auto p = model::predict_proba<float>(*loaded.model, windows);
    for (std::size_t i = 0; i < windows.size(); ++i) {
      *sink << windows[i].episode_id << '\t' << windows[i].position << '\t' << std::fixed << std::setprecision(6)
            << p[i] << '\t' << (metrics::decide(p[i]) == corpus::Label::change ? "change" : "no_change") << '\n';
    }
  }
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& c, std::ostream& out) {
  gradcheck::Report report;
  if (c.model.kind == "logreg" || c.model.kind == "dnn") {
    report = gradcheck::check_ngram(c.model.kind, 8, c.seed);
  } else if (c.model.kind == "random_guess") {
    throw UsageError("random_guess has no gradients");
  } else {
    report = gradcheck::check_model(gradcheck::tiny_config(model::variant_from_string(c.model.kind)), c.seed);
  }
  out << std::left << std::setw(24) << "parameter" << std::right << std::setw(8) << "size" << std::setw(14)
      << "max rel err" << '\n';
  for (const auto& p : report.params) {
    out << std::left << std::setw(24) << p.name << std::right << std::setw(8) << p.size << std::setw(14)
        << std::scientific << std::setprecision(3) << p.max_rel_error << '\n';
  }
  out << "max relative error: " << std::scientific << std::setprecision(3) << report.max_rel_error << " over "
      << report.coordinates << " coordinates (" << std::fixed << std::setprecision(2) << report.seconds << " s)\n";
  if (!c.out.empty()) write_json(output_dir(c) / "gradcheck.json", report.to_json());
  return report.max_rel_error < gradcheck::kTolerance ? kExitOk : kExitFailure;
}

bool uses_context(const std::string& kind) {
  return kind == "non_hierarchical" || kind == "hierarchical" || kind == "static_attention" ||
         kind == "dynamic_attention" || kind == "hierarchical_static_attn" || kind == "hierarchical_dynamic_attn";
}

int cmd_sweep(const RunConfig& c, const Flags& f, const CLI::App* sub, std::ostream& out, std::ostream& err) {
  std::vector<std::string> kinds;
  if (given(sub, "--variants")) {
    kinds = split_list(f.variants);
  } else if (given(sub, "--contexts") || given(sub, "--variant")) {
    kinds = {c.model.kind};
  } else {
    kinds = experiment::all_kinds();
  }
  for (const auto& k : kinds)
    if (!experiment::is_known_kind(k)) throw UsageError("unknown model kind '" + k + "'");
  const auto contexts = given(sub, "--contexts") ? parse_numbers<std::size_t>(f.contexts, "context size")
                                                 : std::vector<std::size_t>{c.model.context_size};
  const auto seeds =
      given(sub, "--seeds") ? parse_numbers<std::uint64_t>(f.seeds, "seed") : std::vector<std::uint64_t>{c.seed};

  std::vector<experiment::ModelSpec> specs;
  for (const auto& k : kinds) {
    experiment::ModelSpec s = c.model;
    s.kind = k;
    if (uses_context(k)) {
      for (auto ctx : contexts) {
        s.context_size = ctx;
        specs.push_back(s);
      }
    } else {
      s.context_size = 0;
      specs.push_back(s);
    }
  }

  experiment::DatasetProvider provider;
  if (!c.data.empty()) {
    auto episodes = std::make_shared<std::vector<corpus::Episode>>(read_episodes(c));
    const auto data = std::make_shared<experiment::Dataset>(experiment::prepare(*episodes, c.seed, c.max_vocab));
    provider = [data](std::uint64_t) { return *data; };
  } else {
    provider = [&c](std::uint64_t seed) {
      auto spec = c.synth;
      spec.seed = seed;
      return experiment::prepare(synthgen::generate(spec), seed, c.max_vocab);
    };
  }

  const auto runs = experiment::sweep(provider, specs, seeds, c.train, c.grid, [&err](const auto& r) {
    err << "  " << r.spec.kind << " context " << r.spec.context_size << " seed " << r.seed << ": test F1 "
        << std::fixed << std::setprecision(4) << r.test.f1 << " (" << std::setprecision(1) << r.seconds << " s)\n";
  });
  const auto rows = experiment::summarize(runs);
  out << experiment::render_summary(rows);

  if (!c.out.empty()) {
    json runs_json = json::array();
    for (const auto& r : runs) runs_json.push_back(run_json(r));
    write_json(output_dir(c) / "sweep.json",
               json{{"config", c.to_json()}, {"runs", runs_json}, {"summary", experiment::summary_json(rows)}});
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Speaker change detection on dialog transcripts"};
  app.require_subcommand(1);
  Flags f;

  auto* prepare = app.add_subcommand("prepare", "Split episodes and build the vocabulary");
  auto* synth = app.add_subcommand("synth", "Write a synthetic transcript corpus");
  auto* train = app.add_subcommand("train", "Train one model and save a checkpoint");
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on labeled transcripts");
  auto* predict = app.add_subcommand("predict", "Per-decision-point probabilities as TSV");
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  auto* sweep = app.add_subcommand("sweep", "Train a set of models and compare them");
  for (auto* sub : {prepare, synth, train, eval, predict, grad, sweep}) add_common_options(sub, f);

  for (auto* sub : {prepare, train, eval, sweep}) sub->add_option("--split", f.split, "Split manifest (JSON)");
  for (auto* sub : {eval, predict}) sub->add_option("--checkpoint", f.checkpoint, "Model checkpoint");
  eval->add_option("--subset", f.subset, "train, val or test (with --split)");
  for (auto* sub : {train, sweep}) sub->add_flag("--grid", f.grid, "Search the learning-rate × dropout grid");
  for (auto* sub : {synth, sweep}) {
    sub->add_option("--episodes", f.episodes, "Synthetic episodes");
    sub->add_option("--overlap", f.overlap, "Shared fraction of persona vocabularies");
    sub->add_option("--signal", f.signal, "Context marker: on or off");
  }
  sweep->add_option("--contexts", f.contexts, "Comma-separated context sizes");
  sweep->add_option("--variants", f.variants, "Comma-separated model kinds");
  sweep->add_option("--seeds", f.seeds, "Comma-separated seeds");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  const CLI::App* sub = app.get_subcommands().front();
  try {
    const RunConfig config = resolve(sub, f);
    if (sub == prepare) return cmd_prepare(config, out);
    if (sub == synth) return cmd_synth(config, out);
    if (sub == train) return cmd_train(config, out, err);
    if (sub == eval) return cmd_eval(config, f.subset, out);
    if (sub == predict) return cmd_predict(config, out);
    if (sub == grad) return cmd_gradcheck(config, out);
    return cmd_sweep(config, f, sub, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace scd::cli
