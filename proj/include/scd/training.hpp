// SPDX-License-Identifier: Apache-2.0
//
// Adam, the mini-batch cross-entropy loop with validation-based early
// stopping, and the 2×2 learning-rate × dropout grid.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "json.hpp"
#include "scd/corpus.hpp"
#include "scd/metrics.hpp"
#include "scd/model.hpp"
#include "scd/numcore.hpp"

namespace scd::training {

using model::Classifier;
using num::Parameter;

struct TrainConfig {
  std::size_t batch_size = 100;
  double lr = 3e-4;
  double dropout = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t max_epochs = 30;
  std::size_t patience = 3;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults.
  static TrainConfig from_json(const nlohmann::json& j);
};

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update over `params`, then zeroes their grads.
/// The state is sized on first use and must keep seeing the same parameters.
template <typename T>
void adam_step(AdamState<T>& state, std::span<Parameter<T>* const> params, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_f1 = 0.0;
};

/// Mean cross-entropy and metrics of a model on a labeled set, eval mode.
struct SplitScore {
  double loss = 0.0;
  metrics::MetricsReport report;
  std::vector<double> p_change;
};

template <typename T>
SplitScore score(Classifier<T>& model, std::span<const corpus::DecisionExample> examples,
                 std::size_t batch_size = 100);

template <typename T>
struct TrainResult {
  std::unique_ptr<Classifier<T>> best;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_f1 = 0.0;
  TrainConfig config;
};

/// Called after every epoch with the model in its current state; return
/// false to stop.
template <typename T>
using EpochHook = std::function<bool(const EpochRecord&, Classifier<T>&)>;

/// Seeded shuffles, one Adam step per batch, validation after every epoch.
/// The kept model has the highest validation F1, ties going to the lower
/// validation loss; training stops after `patience` epochs without either.
/// With an empty validation set the last epoch is kept.
template <typename T>
TrainResult<T> train(Classifier<T>& model, std::span<const corpus::DecisionExample> train_set,
                     std::span<const corpus::DecisionExample> val_set, const TrainConfig& config,
                     const EpochHook<T>& hook = {});

template <typename T>
using ModelFactory = std::function<std::unique_ptr<Classifier<T>>(const TrainConfig&)>;

struct GridEntry {
  TrainConfig config;
  double best_val_f1 = 0.0;
  std::size_t best_epoch = 0;
};

template <typename T>
struct GridResult {
  std::vector<GridEntry> entries;
  std::size_t best_index = 0;
  TrainResult<T> best;
};

/// The four (lr, dropout) pairs in evaluation order.
std::vector<TrainConfig> grid_configs(const TrainConfig& base);

/// Trains one fresh model per grid point and keeps the best by validation F1.
template <typename T>
GridResult<T> grid_search(const ModelFactory<T>& factory, std::span<const corpus::DecisionExample> train_set,
                          std::span<const corpus::DecisionExample> val_set, const TrainConfig& base);

}  // namespace scd::training
