// SPDX-License-Identifier: Apache-2.0

#include "scd/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <random>
#include <sstream>
#include <stdexcept>

#include "scd/baselines.hpp"

namespace scd::experiment {

using nlohmann::json;

Dataset prepare(const std::vector<corpus::Episode>& episodes, const corpus::SplitManifest& split,
                std::size_t max_vocab) {
  Dataset d;
  d.split = split;
  d.train = corpus::select_episodes(episodes, split.train);
  d.val = corpus::select_episodes(episodes, split.val);
  d.test = corpus::select_episodes(episodes, split.test);
  d.vocab = corpus::build_vocab(d.train, max_vocab);
  corpus::assign_tokens(d.train, d.vocab);
  corpus::assign_tokens(d.val, d.vocab);
  corpus::assign_tokens(d.test, d.vocab);
  return d;
}

Dataset prepare(const std::vector<corpus::Episode>& episodes, std::uint64_t split_seed, std::size_t max_vocab) {
  return prepare(episodes, corpus::split_by_episode(episodes, split_seed), max_vocab);
}

json ModelSpec::to_json() const {
  return json{{"kind", kind},
              {"dim", dim},
              {"attention_dim", attention_dim},
              {"context_size", context_size},
              {"dnn_hidden", dnn_hidden}};
}

ModelSpec ModelSpec::from_json(const json& j) {
  ModelSpec s;
  s.kind = j.value("kind", s.kind);
  s.dim = j.value("dim", s.dim);
  s.attention_dim = j.value("attention_dim", s.attention_dim);
  s.context_size = j.value("context_size", s.context_size);
  s.dnn_hidden = j.value("dnn_hidden", s.dnn_hidden);
  if (!is_known_kind(s.kind)) throw std::invalid_argument("unknown model kind '" + s.kind + "'");
  return s;
}

std::vector<std::string> all_kinds() {
  std::vector<std::string> kinds{"random_guess", "logreg", "dnn"};
  for (auto v : model::all_variants()) kinds.push_back(model::to_string(v));
  return kinds;
}

bool is_known_kind(const std::string& kind) {
  const auto kinds = all_kinds();
  return std::find(kinds.begin(), kinds.end(), kind) != kinds.end() || kind == "hierarchical_static_attn" ||
         kind == "hierarchical_dynamic_attn";
}

namespace {

bool is_ngram(const std::string& kind) { return kind == "logreg" || kind == "dnn"; }

std::size_t window_of(const ModelSpec& spec) {
  return spec.kind == "random_guess" || is_ngram(spec.kind) ? 1 : spec.context_size + 1;
}

}  // namespace

std::unique_ptr<model::Classifier<float>> make_model(const ModelSpec& spec, const Dataset& data, double dropout,
                                                     std::uint64_t seed) {
  if (spec.kind == "logreg") {
    return std::make_unique<baselines::LogRegModel<float>>(baselines::NgramFeatureSpace::build(data.train));
  }
  if (spec.kind == "dnn") {
    return std::make_unique<baselines::DnnModel<float>>(baselines::NgramFeatureSpace::build(data.train),
                                                        spec.dnn_hidden, dropout, seed);
  }
  if (spec.kind == "random_guess") throw std::invalid_argument("random_guess has no trainable model");
  model::ModelConfig config;
  config.dim = spec.dim;
  config.attention_dim = spec.attention_dim;
  config.context_size = spec.context_size;
  config.vocab_size = data.vocab.size();
  config.dropout = dropout;
  config.variant = model::variant_from_string(spec.kind);
  return std::make_unique<model::ScdModel<float>>(config, seed);
}

RunResult run(const Dataset& data, const ModelSpec& spec, const training::TrainConfig& config, bool grid) {
  const auto started = std::chrono::steady_clock::now();
  const std::size_t t = window_of(spec);
  const auto train_set = corpus::extract_examples(data.train, t);
  const auto val_set = corpus::extract_examples(data.val, t);
  const auto test_set = corpus::extract_examples(data.test, t);
  if (test_set.empty()) throw std::invalid_argument("test split has no decision points");

  RunResult out;
  out.spec = spec;
  out.seed = config.seed;
  out.config = config;

  if (spec.kind == "random_guess") {
    const double rate = corpus::positive_rate(train_set);
    std::mt19937_64 rng(config.seed);
    std::vector<corpus::Label> predicted, gold;
    for (const auto& ex : test_set) {
      predicted.push_back(baselines::random_guess(rate, rng));
      gold.push_back(ex.label);
    }
    out.test = metrics::evaluate(predicted, gold);
  } else {
    const training::ModelFactory<float> factory = [&](const training::TrainConfig& c) {
      return make_model(spec, data, c.dropout, c.seed);
    };
    training::TrainResult<float> result;
    if (grid) {
      auto searched = training::grid_search<float>(factory, train_set, val_set, config);
      result = std::move(searched.best);
    } else {
      auto model = factory(config);
      result = training::train<float>(*model, train_set, val_set, config);
    }
    out.config = result.config;
    out.best_val_f1 = result.best_val_f1;
    out.best_epoch = result.best_epoch;
    out.history = result.history;
    out.model = std::move(result.best);
    out.test = training::score(*out.model, test_set).report;
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

std::vector<SummaryRow> summarize(const std::vector<RunResult>& runs) {
  std::vector<SummaryRow> rows;
  for (const auto& r : runs) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const SummaryRow& row) {
      return row.kind == r.spec.kind && row.context_size == r.spec.context_size;
    });
    if (it == rows.end()) {
      rows.push_back({r.spec.kind, r.spec.context_size, 0, 0, 0, 0, 0, r.test.f1, r.test.f1});
      it = rows.end() - 1;
    }
    it->runs += 1;
    it->accuracy += r.test.accuracy;
    it->precision += r.test.precision;
    it->recall += r.test.recall;
    it->f1 += r.test.f1;
    it->f1_min = std::min(it->f1_min, r.test.f1);
    it->f1_max = std::max(it->f1_max, r.test.f1);
  }
  for (auto& row : rows) {
    const auto n = static_cast<double>(row.runs);
    row.accuracy /= n;
    row.precision /= n;
    row.recall /= n;
    row.f1 /= n;
  }
  return rows;
}

std::string render_summary(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(20) << "model" << std::right << std::setw(8) << "context" << std::setw(6) << "runs"
      << std::setw(8) << "acc" << std::setw(8) << "P" << std::setw(8) << "R" << std::setw(8) << "F1"
      << std::setw(16) << "F1 range" << '\n';
  out << std::fixed << std::setprecision(1);
  for (const auto& r : rows) {
    std::ostringstream range;
    range << std::fixed << std::setprecision(1) << 100 * r.f1_min << "-" << 100 * r.f1_max;
    out << std::left << std::setw(20) << r.kind << std::right << std::setw(8) << r.context_size << std::setw(6)
        << r.runs << std::setw(8) << 100 * r.accuracy << std::setw(8) << 100 * r.precision << std::setw(8)
        << 100 * r.recall << std::setw(8) << 100 * r.f1 << std::setw(16) << range.str() << '\n';
  }
  return out.str();
}

json summary_json(const std::vector<SummaryRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"model", r.kind},
                   {"context_size", r.context_size},
                   {"runs", r.runs},
                   {"accuracy", r.accuracy},
                   {"precision", r.precision},
                   {"recall", r.recall},
                   {"f1", r.f1},
                   {"f1_min", r.f1_min},
                   {"f1_max", r.f1_max}});
  }
  return out;
}

double mean_f1(const std::vector<SummaryRow>& rows, const std::string& kind, std::size_t context_size) {
  for (const auto& r : rows)
    if (r.kind == kind && r.context_size == context_size) return r.f1;
  throw std::out_of_range("no summary row for " + kind + " at context size " + std::to_string(context_size));
}

std::vector<RunResult> sweep(const DatasetProvider& datasets, const std::vector<ModelSpec>& specs,
                             const std::vector<std::uint64_t>& seeds, const training::TrainConfig& config, bool grid,
                             const RunObserver& observer) {
  std::vector<RunResult> runs;
  for (auto seed : seeds) {
    const Dataset data = datasets(seed);
    training::TrainConfig c = config;
    c.seed = seed;
    for (const auto& spec : specs) {
      runs.push_back(run(data, spec, c, grid));
      if (observer) observer(runs.back());
    }
  }
  return runs;
}

}  // namespace scd::experiment
