// SPDX-License-Identifier: Apache-2.0
//
// Dataset preparation and single training runs for every model kind, plus
// seed-averaged comparison tables. Shared by the CLI and the acceptance runs.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "scd/corpus.hpp"
#include "scd/metrics.hpp"
#include "scd/model.hpp"
#include "scd/training.hpp"

namespace scd::experiment {

struct Dataset {
  corpus::Vocabulary vocab;
  corpus::SplitManifest split;
  std::vector<corpus::Episode> train, val, test;  // tokens assigned
};

/// Seeded episode split, then a vocabulary from the training episodes only.
Dataset prepare(const std::vector<corpus::Episode>& episodes, std::uint64_t split_seed,
                std::size_t max_vocab = corpus::Vocabulary::kDefaultMaxSize);
/// Same with an existing split manifest.
Dataset prepare(const std::vector<corpus::Episode>& episodes, const corpus::SplitManifest& split,
                std::size_t max_vocab = corpus::Vocabulary::kDefaultMaxSize);

/// `kind` is a model variant name, "logreg", "dnn" or "random_guess".
struct ModelSpec {
  std::string kind = "static_attention";
  std::size_t dim = 200;
  std::size_t attention_dim = 200;
  std::size_t context_size = 0;
  std::size_t dnn_hidden = 200;

  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
};

bool is_known_kind(const std::string& kind);
/// Every kind in table order.
std::vector<std::string> all_kinds();

struct RunResult {
  ModelSpec spec;
  std::uint64_t seed = 0;
  training::TrainConfig config;  // selected configuration
  metrics::MetricsReport test;
  double best_val_f1 = 0.0;
  std::size_t best_epoch = 0;
  std::vector<training::EpochRecord> history;
  double seconds = 0.0;
  std::unique_ptr<model::Classifier<float>> model;  // empty for random_guess
};

/// Fresh untrained classifier for a spec; vocabulary and training episodes
/// size the embedding and the n-gram space.
std::unique_ptr<model::Classifier<float>> make_model(const ModelSpec& spec, const Dataset& data, double dropout,
                                                     std::uint64_t seed);

/// Trains on data.train, selects on data.val, reports on data.test. With
/// `grid` the four (lr, dropout) pairs are searched; otherwise `config` is
/// used as is.
RunResult run(const Dataset& data, const ModelSpec& spec, const training::TrainConfig& config, bool grid = false);

struct SummaryRow {
  std::string kind;
  std::size_t context_size = 0;
  std::size_t runs = 0;
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
  double f1_min = 0.0, f1_max = 0.0;
};

/// Means over runs sharing (kind, context size), in first-seen order.
std::vector<SummaryRow> summarize(const std::vector<RunResult>& runs);
std::string render_summary(const std::vector<SummaryRow>& rows);
nlohmann::json summary_json(const std::vector<SummaryRow>& rows);

/// Looks up the mean F1 of a (kind, context size) row; throws if absent.
double mean_f1(const std::vector<SummaryRow>& rows, const std::string& kind, std::size_t context_size);

using DatasetProvider = std::function<Dataset(std::uint64_t seed)>;
using RunObserver = std::function<void(const RunResult&)>;

/// Every spec on every seed; the provider yields the dataset of a seed and
/// the training seed equals the run seed.
std::vector<RunResult> sweep(const DatasetProvider& datasets, const std::vector<ModelSpec>& specs,
                             const std::vector<std::uint64_t>& seeds, const training::TrainConfig& config,
                             bool grid = false, const RunObserver& observer = {});

}  // namespace scd::experiment
