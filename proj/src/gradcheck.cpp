// SPDX-License-Identifier: Apache-2.0

#include "scd/gradcheck.hpp"

#include <chrono>
#include <random>

#include "scd/baselines.hpp"

namespace scd::gradcheck {

using nlohmann::json;

json Report::to_json() const {
  json params_json = json::array();
  for (const auto& p : params)
    params_json.push_back({{"name", p.name}, {"size", p.size}, {"max_rel_error", p.max_rel_error}});
  return json{{"max_rel_error", max_rel_error},
              {"coordinates", coordinates},
              {"seconds", seconds},
              {"params", std::move(params_json)}};
}

model::ModelConfig tiny_config(model::Variant variant) {
  model::ModelConfig c;
  c.dim = 8;
  c.attention_dim = 8;
  c.context_size = 1;
  c.vocab_size = 20;
  c.dropout = 0.0;
  c.variant = variant;
  return c;
}

namespace {

corpus::Sentence random_sentence(std::mt19937_64& rng, std::size_t vocab, double pad_rate) {
  if (std::bernoulli_distribution(pad_rate)(rng)) return {corpus::kPad};
  corpus::Sentence s(std::uniform_int_distribution<std::size_t>(1, 5)(rng));
  std::uniform_int_distribution<corpus::TokenId> token(2, static_cast<corpus::TokenId>(vocab - 1));
  for (auto& tok : s) tok = token(rng);
  return s;
}

std::vector<corpus::DecisionExample> random_batch(std::mt19937_64& rng, std::size_t batch, std::size_t t,
                                                  std::size_t vocab, double pad_rate) {
  std::vector<corpus::DecisionExample> out(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < t; ++j) {
      // The critical sentences are never padding.
      const double rate = j + 1 == t ? 0.0 : pad_rate;
      out[b].prev_sentences.push_back(random_sentence(rng, vocab, rate));
      out[b].next_sentences.push_back(random_sentence(rng, vocab, rate));
    }
    out[b].label = b % 2 ? corpus::Label::change : corpus::Label::no_change;
  }
  return out;
}

Report compare(model::Classifier<double>& model, const std::vector<corpus::DecisionExample>& examples) {
  const auto started = std::chrono::steady_clock::now();
  std::vector<const corpus::DecisionExample*> batch;
  std::vector<int> labels;
  for (const auto& ex : examples) {
    batch.push_back(&ex);
    labels.push_back(static_cast<int>(ex.label));
  }
  auto loss_of = [&](num::Tape<double>* tape) {
    return num::nll_loss(num::log_softmax(model.logits(tape, batch, model::ForwardMode{})),
                         std::span<const int>(labels));
  };

  auto params = model.parameters();
  num::zero_grads<double>(params);
  num::Tape<double> tape;
  tape.backward(loss_of(&tape));

  Report report;
  const std::function<double()> f = [&] { return loss_of(nullptr).item(); };
  for (auto* p : params) {
    const std::vector<double> analytic(p->grad().begin(), p->grad().end());
    const auto numeric = num::finite_diff_grad<double>(f, *p, kStep);
    const double err = num::max_relative_error<double>(analytic, numeric);
    report.params.push_back({p->name(), p->size(), err});
    report.max_rel_error = std::max(report.max_rel_error, err);
    report.coordinates += p->size();
  }
  num::zero_grads<double>(params);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

void randomize(num::Parameter<double>& p, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& v : p.value()) v = u(rng);
}

}  // namespace

Report check_model(const model::ModelConfig& config, std::uint64_t seed, std::size_t batch) {
  model::ScdModel<double> m(config, seed);
  std::mt19937_64 rng(seed + 1);
  for (auto* p : m.parameters()) {
    const auto& name = p->name();
    const bool bias = name.size() > 2 && (name.ends_with(".b") || name.ends_with(".bg"));
    if (bias || name.starts_with("classifier.")) randomize(*p, rng, 0.5);
  }
  const auto examples = random_batch(rng, batch, config.window(), config.vocab_size, 0.2);
  return compare(m, examples);
}

Report check_ngram(const std::string& kind, std::size_t hidden, std::uint64_t seed, std::size_t batch) {
  constexpr std::size_t kVocab = 12;
  std::mt19937_64 rng(seed);
  corpus::Episode ep;
  for (int i = 0; i < 8; ++i) {
    corpus::Utterance u;
    u.tokens = random_sentence(rng, kVocab, 0.0);
    ep.utterances.push_back(u);
  }
  auto space = baselines::NgramFeatureSpace::build(std::span<const corpus::Episode>(&ep, 1));
  const auto examples = random_batch(rng, batch, 1, kVocab, 0.0);

  if (kind == "logreg") {
    baselines::LogRegModel<double> m(std::move(space));
    randomize(m.weights(), rng, 0.5);
    return compare(m, examples);
  }
  if (kind == "dnn") {
    baselines::DnnModel<double> m(std::move(space), hidden, 0.0, seed);
    for (auto* p : m.parameters()) randomize(*p, rng, 0.5);
    return compare(m, examples);
  }
  throw std::invalid_argument("gradient check supports logreg and dnn baselines, not '" + kind + "'");
}

}  // namespace scd::gradcheck
