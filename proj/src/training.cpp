// SPDX-License-Identifier: Apache-2.0

#include "scd/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace scd::training {

using nlohmann::json;

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0,1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0,1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("Adam epsilon must be positive");
  if (max_epochs == 0) throw std::invalid_argument("max_epochs must be positive");
  if (patience == 0) throw std::invalid_argument("patience must be at least 1");
}

json TrainConfig::to_json() const {
  return json{{"batch_size", batch_size}, {"lr", lr},         {"dropout", dropout},
              {"beta1", beta1},           {"beta2", beta2},   {"eps", eps},
              {"max_epochs", max_epochs}, {"patience", patience}, {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.dropout = j.value("dropout", c.dropout);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

template <typename T>
void adam_step(AdamState<T>& state, std::span<Parameter<T>* const> params, double lr, double beta1, double beta2,
               double eps) {
  if (state.step == 0 && state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->size(), T(0));
      state.v.emplace_back(p->size(), T(0));
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: state tracks " + std::to_string(state.m.size()) + " parameters, got " +
                                std::to_string(params.size()));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != p.size()) throw std::invalid_argument("adam_step: moment shape mismatch for " + p.name());
    auto value = p.value();
    auto grad = p.grad();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = grad[i];
      const double mi = beta1 * m[i] + (1.0 - beta1) * g;
      const double vi = beta2 * v[i] + (1.0 - beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      value[i] = static_cast<T>(value[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + eps));
    }
    p.zero_grad();
  }
}

namespace {

std::vector<int> labels_of(std::span<const corpus::DecisionExample* const> batch) {
  std::vector<int> labels;
  labels.reserve(batch.size());
  for (const auto* ex : batch) labels.push_back(static_cast<int>(ex->label));
  return labels;
}

}  // namespace

template <typename T>
SplitScore score(Classifier<T>& model, std::span<const corpus::DecisionExample> examples, std::size_t batch_size) {
  if (examples.empty()) throw std::invalid_argument("score: no examples");
  SplitScore out;
  std::vector<metrics::Prediction> predictions;
  predictions.reserve(examples.size());
  double loss_sum = 0.0;
  std::vector<const corpus::DecisionExample*> batch;
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const std::size_t end = std::min(examples.size(), start + batch_size);
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(&examples[i]);
    const auto logp = num::log_softmax(model.logits(nullptr, batch, model::ForwardMode{}));
    for (std::size_t r = 0; r < batch.size(); ++r) {
      const auto label = static_cast<std::size_t>(batch[r]->label);
      loss_sum -= static_cast<double>(logp.at(r, label));
      const double p = std::exp(static_cast<double>(logp.at(r, 1)));
      out.p_change.push_back(p);
      predictions.push_back({p, batch[r]->label});
    }
  }
  out.loss = loss_sum / static_cast<double>(examples.size());
  out.report = metrics::evaluate(predictions);
  return out;
}

template <typename T>
TrainResult<T> train(Classifier<T>& model, std::span<const corpus::DecisionExample> train_set,
                     std::span<const corpus::DecisionExample> val_set, const TrainConfig& config,
                     const EpochHook<T>& hook) {
  config.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");

  std::mt19937_64 shuffle_rng(config.seed);
  std::mt19937_64 dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const model::ForwardMode mode{true, &dropout_rng};

  auto params = model.parameters();
  num::zero_grads<T>(params);
  AdamState<T> adam;

  TrainResult<T> result;
  result.config = config;
  double best_val_loss = 0.0;
  std::size_t since_best = 0;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<const corpus::DecisionExample*> batch;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train_set[order[i]]);
      const auto labels = labels_of(batch);
      num::Tape<T> tape;
      const auto loss = num::nll_loss(num::log_softmax(model.logits(&tape, batch, mode)),
                                      std::span<const int>(labels));
      tape.backward(loss);
      adam_step<T>(adam, params, config.lr, config.beta1, config.beta2, config.eps);
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(batch.size());
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(train_set.size());
    bool improved = true;
    if (!val_set.empty()) {
      const auto val = score(model, val_set, config.batch_size);
      record.val_loss = val.loss;
      record.val_f1 = val.report.f1;
      improved = !result.best || record.val_f1 > result.best_val_f1 ||
                 (record.val_f1 == result.best_val_f1 && record.val_loss < best_val_loss);
    }
    result.history.push_back(record);
    if (improved) {
      result.best = model.clone();
      result.best_epoch = epoch;
      result.best_val_f1 = record.val_f1;
      best_val_loss = record.val_loss;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (hook && !hook(record, model)) break;
    if (since_best >= config.patience) break;
  }
  return result;
}

std::vector<TrainConfig> grid_configs(const TrainConfig& base) {
  std::vector<TrainConfig> out;
  for (double lr : {3e-4, 9e-4}) {
    for (double dropout : {0.1, 0.3}) {
      TrainConfig c = base;
      c.lr = lr;
      c.dropout = dropout;
      out.push_back(c);
    }
  }
  return out;
}

template <typename T>
GridResult<T> grid_search(const ModelFactory<T>& factory, std::span<const corpus::DecisionExample> train_set,
                          std::span<const corpus::DecisionExample> val_set, const TrainConfig& base) {
  GridResult<T> out;
  bool have_best = false;
  for (const auto& config : grid_configs(base)) {
    auto model = factory(config);
    auto result = train<T>(*model, train_set, val_set, config);
    out.entries.push_back({config, result.best_val_f1, result.best_epoch});
    if (!have_best || result.best_val_f1 > out.best.best_val_f1) {
      out.best_index = out.entries.size() - 1;
      out.best = std::move(result);
      have_best = true;
    }
  }
  return out;
}

#define SCD_TRAINING_INSTANTIATE(T)                                                                          \
  template void adam_step<T>(AdamState<T>&, std::span<Parameter<T>* const>, double, double, double, double); \
  template SplitScore score<T>(Classifier<T>&, std::span<const corpus::DecisionExample>, std::size_t);       \
  template TrainResult<T> train<T>(Classifier<T>&, std::span<const corpus::DecisionExample>,                 \
                                   std::span<const corpus::DecisionExample>, const TrainConfig&,             \
                                   const EpochHook<T>&);                                                     \
  template GridResult<T> grid_search<T>(const ModelFactory<T>&, std::span<const corpus::DecisionExample>,    \
                                        std::span<const corpus::DecisionExample>, const TrainConfig&);

SCD_TRAINING_INSTANTIATE(float)
SCD_TRAINING_INSTANTIATE(double)

#undef SCD_TRAINING_INSTANTIATE

}  // namespace scd::training
