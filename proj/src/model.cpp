// SPDX-License-Identifier: Apache-2.0

#include "scd/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "scd/baselines.hpp"

namespace scd::model {

using nlohmann::json;

namespace {

struct VariantName {
  Variant variant;
  const char* name;
};

constexpr VariantName kVariantNames[] = {
    {Variant::no_context, "no_context"},
    {Variant::non_hierarchical, "non_hierarchical"},
    {Variant::hierarchical, "hierarchical"},
    {Variant::static_attention, "static_attention"},
    {Variant::dynamic_attention, "dynamic_attention"},
    {Variant::cnn_no_context, "cnn_no_context"},
};

bool uses_word_lstm(Variant v) { return v != Variant::cnn_no_context; }
bool uses_sentence_lstm(Variant v) {
  return v == Variant::hierarchical || v == Variant::static_attention || v == Variant::dynamic_attention;
}
bool uses_attention(Variant v) { return v == Variant::static_attention || v == Variant::dynamic_attention; }

}  // namespace

std::string to_string(Variant v) {
  for (const auto& vn : kVariantNames)
    if (vn.variant == v) return vn.name;
  throw std::invalid_argument("unknown variant");
}

Variant variant_from_string(const std::string& name) {
  for (const auto& vn : kVariantNames)
    if (name == vn.name) return vn.variant;
  if (name == "hierarchical_static_attn") return Variant::static_attention;
  if (name == "hierarchical_dynamic_attn") return Variant::dynamic_attention;
  throw std::invalid_argument("unknown model variant '" + name + "'");
}

std::vector<Variant> all_variants() {
  std::vector<Variant> out;
  for (const auto& vn : kVariantNames) out.push_back(vn.variant);
  return out;
}

std::size_t ModelConfig::classifier_input() const noexcept {
  return uses_attention(variant) ? 4 * dim : 2 * dim;
}

void ModelConfig::validate() const {
  if (dim == 0) throw std::invalid_argument("model dim must be positive");
  if (attention_dim == 0) throw std::invalid_argument("attention dim must be positive");
  if (vocab_size < 2) throw std::invalid_argument("vocabulary must hold at least PAD and UNK");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0,1)");
}

json ModelConfig::to_json() const {
  return json{{"dim", dim},
              {"attention_dim", attention_dim},
              {"context_size", context_size},
              {"vocab_size", vocab_size},
              {"dropout", dropout},
              {"variant", to_string(variant)}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  c.dim = j.at("dim").get<std::size_t>();
  c.attention_dim = j.at("attention_dim").get<std::size_t>();
  c.context_size = j.at("context_size").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.variant = variant_from_string(j.at("variant").get<std::string>());
  c.validate();
  return c;
}

// ---- LSTM ------------------------------------------------------------------

template <typename T>
LstmCellParams<T>::LstmCellParams(const std::string& prefix, std::size_t input_dim, std::size_t dim)
    : W(prefix + ".W", {3 * dim, input_dim}),
      U(prefix + ".U", {3 * dim, dim}),
      b(prefix + ".b", {3 * dim}),
      Wg(prefix + ".Wg", {dim, input_dim}),
      Ug(prefix + ".Ug", {dim, dim}),
      bg(prefix + ".bg", {dim}) {}

template <typename T>
std::vector<Parameter<T>*> LstmCellParams<T>::all() {
  return {&W, &U, &b, &Wg, &Ug, &bg};
}

template <typename T>
LstmCell<T> Binder<T>::operator()(LstmCellParams<T>& p) const {
  return {(*this)(p.W), (*this)(p.U), (*this)(p.b), (*this)(p.Wg), (*this)(p.Ug), (*this)(p.bg)};
}

template <typename T>
LstmState<T> lstm_step(const LstmCell<T>& cell, const Tensor<T>& x, const LstmState<T>& prev) {
  const std::size_t d = cell.dim();
  if (prev.h.shape().back() != d || prev.c.shape() != prev.h.shape()) {
    throw num::DimensionError("lstm_step: state " + num::to_string(prev.h.shape()) + "/" +
                              num::to_string(prev.c.shape()) + " does not match hidden size " + std::to_string(d));
  }
  const Tensor<T> gates = num::sigmoid(num::add(num::affine(x, cell.W, cell.b), num::affine(prev.h, cell.U)));
  const std::size_t axis = gates.rank() - 1;
  const Tensor<T> i = num::slice(gates, axis, 0, d);
  const Tensor<T> f = num::slice(gates, axis, d, 2 * d);
  const Tensor<T> o = num::slice(gates, axis, 2 * d, 3 * d);
  const Tensor<T> g = num::tanh(num::add(num::affine(x, cell.Wg, cell.bg), num::affine(prev.h, cell.Ug)));
  Tensor<T> c = num::add(num::mul(i, g), num::mul(prev.c, f));
  Tensor<T> h = num::mul(o, num::tanh(c));
  return {std::move(h), std::move(c)};
}

template <typename T>
LstmState<T> zero_state(std::size_t rows, std::size_t dim) {
  return {Tensor<T>::zeros({rows, dim}), Tensor<T>::zeros({rows, dim})};
}

template <typename T>
Tensor<T> encode_sentences(const LstmCell<T>& cell, const Tensor<T>& embedding,
                           std::span<const corpus::Sentence* const> sentences) {
  if (sentences.empty()) throw std::invalid_argument("encode_sentences: no sentences");
  const std::size_t n = sentences.size();
  std::size_t longest = 0;
  for (const auto* s : sentences) {
    if (s->empty()) throw std::invalid_argument("encode_sentence: empty sentence");
    longest = std::max(longest, s->size());
  }
  LstmState<T> state = zero_state<T>(n, cell.dim());
  std::vector<std::size_t> ids(n);
  std::vector<std::uint8_t> active(n);
  for (std::size_t step = 0; step < longest; ++step) {
    bool all_active = true;
    for (std::size_t r = 0; r < n; ++r) {
      const auto& s = *sentences[r];
      active[r] = step < s.size();
      all_active = all_active && active[r];
      ids[r] = static_cast<std::size_t>(active[r] ? s[step] : corpus::kPad);
    }
    const Tensor<T> x = num::gather_rows(embedding, std::span<const std::size_t>(ids));
    LstmState<T> next = lstm_step(cell, x, state);
    if (all_active) {
      state = std::move(next);
    } else {
      state = {num::select_rows<T>(active, next.h, state.h), num::select_rows<T>(active, next.c, state.c)};
    }
  }
  return state.h;
}

template <typename T>
Tensor<T> encode_sentence(const LstmCell<T>& cell, const Tensor<T>& embedding, const corpus::Sentence& tokens) {
  const corpus::Sentence* one = &tokens;
  return num::reshape(encode_sentences(cell, embedding, std::span<const corpus::Sentence* const>(&one, 1)),
                      {cell.dim()});
}

template <typename T>
ContextEncoding<T> encode_context(const LstmCell<T>& cell, std::span<const Tensor<T>> side) {
  if (side.empty()) throw num::DimensionError("encode_context: expected at least one sentence vector");
  LstmState<T> state = zero_state<T>(side[0].dim(0), cell.dim());
  ContextEncoding<T> out;
  out.states.reserve(side.size());
  for (const auto& x : side) {
    state = lstm_step(cell, x, state);
    out.states.push_back(state.h);
  }
  out.critical = out.states.back();
  return out;
}

// ---- attention -------------------------------------------------------------

template <typename T>
AttentionParams<T>::AttentionParams(std::size_t attention_dim, std::size_t dim)
    : W_a("attention.W_a", {attention_dim, 2 * dim}), u_a("attention.u_a", {attention_dim}) {}

template <typename T>
std::vector<Parameter<T>*> AttentionParams<T>::all() {
  return {&W_a, &u_a};
}

template <typename T>
Tensor<T> attention_scores(const Attention<T>& att, const Tensor<T>& query, std::span<const Tensor<T>> keys) {
  if (keys.empty()) throw num::DimensionError("attention: no keys");
  const Tensor<T> u = num::reshape(att.u_a, {1, att.u_a.size()});
  std::vector<Tensor<T>> scores;
  scores.reserve(keys.size());
  for (const auto& key : keys) {
    if (key.shape() != query.shape()) {
      throw num::DimensionError("attention: key " + num::to_string(key.shape()) + " does not match query " +
                                num::to_string(query.shape()));
    }
    const Tensor<T> hidden = num::tanh(num::affine(num::concat<T>({query, key}, 1), att.W_a));
    scores.push_back(num::affine(hidden, u));
  }
  return num::concat<T>(std::span<const Tensor<T>>(scores), 1);
}

template <typename T>
AttentionResult<T> attend_with_scores(const Tensor<T>& scores, std::span<const Tensor<T>> keys) {
  if (scores.rank() != 2 || scores.dim(1) != keys.size()) {
    throw num::DimensionError("attention: scores " + num::to_string(scores.shape()) + " do not match " +
                              std::to_string(keys.size()) + " keys");
  }
  AttentionResult<T> out;
  out.alpha = num::softmax(scores);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    Tensor<T> part = num::scale_rows(keys[i], num::slice(out.alpha, 1, i, i + 1));
    out.m = i == 0 ? part : num::add(out.m, part);
  }
  return out;
}

template <typename T>
AttentionResult<T> static_attention(const Attention<T>& att, const Tensor<T>& query,
                                    std::span<const Tensor<T>> keys) {
  return attend_with_scores(attention_scores(att, query, keys), keys);
}

template <typename T>
FoldParams<T>::FoldParams(std::size_t dim) : W("fold.W", {dim, 2 * dim}), b("fold.b", {dim}) {}

template <typename T>
std::vector<Parameter<T>*> FoldParams<T>::all() {
  return {&W, &b};
}

namespace {

template <typename T>
Tensor<T> recurrent_fold(const Fold<T>& fold, const std::vector<Tensor<T>>& vectors) {
  Tensor<T> r = vectors.front();
  for (std::size_t i = 1; i < vectors.size(); ++i) {
    const Tensor<T> z = num::sigmoid(num::affine(num::concat<T>({vectors[i], r}, 1), fold.W, fold.b));
    r = num::add(r, num::mul(z, num::sub(vectors[i], r)));
  }
  return r;
}

}  // namespace

template <typename T>
DynamicAttentionResult<T> dynamic_attention(const Attention<T>& att, const Fold<T>& fold,
                                            std::span<const Tensor<T>> prev_states,
                                            std::span<const Tensor<T>> next_states) {
  if (prev_states.empty() || prev_states.size() != next_states.size()) {
    throw num::DimensionError("dynamic_attention: sides hold " + std::to_string(prev_states.size()) + " and " +
                              std::to_string(next_states.size()) + " states");
  }
  DynamicAttentionResult<T> out;
  std::vector<Tensor<T>> m_prev, m_next;
  for (std::size_t i = 0; i < prev_states.size(); ++i) {
    auto p = static_attention(att, prev_states[i], next_states);
    auto f = static_attention(att, next_states[i], prev_states);
    out.alpha_prev.push_back(p.alpha);
    out.alpha_next.push_back(f.alpha);
    m_prev.push_back(p.m);
    m_next.push_back(f.m);
  }
  out.m_prev = recurrent_fold(fold, m_prev);
  out.m_next = recurrent_fold(fold, m_next);
  return out;
}

// ---- parameters ------------------------------------------------------------

template <typename T>
ModelParams<T>::ModelParams(const ModelConfig& config)
    : embedding("embedding", {config.vocab_size, config.dim}),
      classifier_W("classifier.W", {2, config.classifier_input()}),
      classifier_b("classifier.b", {2}) {
  config.validate();
  const std::size_t d = config.dim;
  if (uses_word_lstm(config.variant)) word_lstm.emplace("word_lstm", d, d);
  if (uses_sentence_lstm(config.variant)) sentence_lstm.emplace("sentence_lstm", d, d);
  if (uses_attention(config.variant)) attention.emplace(config.attention_dim, d);
  if (config.variant == Variant::dynamic_attention) fold.emplace(d);
  if (config.variant == Variant::cnn_no_context) {
    conv_W.emplace("conv.W", num::Shape{d, 3 * d});
    conv_b.emplace("conv.b", num::Shape{d});
  }
}

template <typename T>
std::vector<Parameter<T>*> ModelParams<T>::all() {
  std::vector<Parameter<T>*> out{&embedding};
  auto append = [&out](std::vector<Parameter<T>*> more) { out.insert(out.end(), more.begin(), more.end()); };
  if (word_lstm) append(word_lstm->all());
  if (sentence_lstm) append(sentence_lstm->all());
  if (attention) append(attention->all());
  if (fold) append(fold->all());
  if (conv_W) out.push_back(&*conv_W);
  if (conv_b) out.push_back(&*conv_b);
  out.push_back(&classifier_W);
  out.push_back(&classifier_b);
  return out;
}

std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t d = c.dim, da = c.attention_dim;
  const std::size_t lstm = 4 * d * d + 4 * d * d + 4 * d;
  std::size_t n = c.vocab_size * d;
  if (uses_word_lstm(c.variant)) n += lstm;
  if (uses_sentence_lstm(c.variant)) n += lstm;
  if (uses_attention(c.variant)) n += da * 2 * d + da;
  if (c.variant == Variant::dynamic_attention) n += 2 * d * d + d;
  if (c.variant == Variant::cnn_no_context) n += 3 * d * d + d;
  n += 2 * c.classifier_input() + 2;
  return n;
}

namespace {

bool is_bias(const std::string& name) {
  auto ends_with = [&](const std::string& suffix) {
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return ends_with(".b") || ends_with(".bg");
}

}  // namespace

template <typename T>
void initialize(ModelParams<T>& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-0.08, 0.08);
  for (auto* p : params.all()) {
    const bool zero = is_bias(p->name()) || p->name().rfind("classifier.", 0) == 0;
    for (auto& v : p->value()) v = zero ? T(0) : static_cast<T>(uniform(rng));
    p->zero_grad();
  }
}

// ---- ScdModel --------------------------------------------------------------

namespace {

template <typename T>
struct ForwardResult {
  Tensor<T> logits;
  std::optional<AttentionResult<T>> prev_attention;  // critical prev query over next states
  std::optional<AttentionResult<T>> next_attention;
};

template <typename T>
ForwardResult<T> run_forward(const ModelConfig& config, ModelParams<T>& params, Tape<T>* tape,
                             std::span<const corpus::DecisionExample* const> batch, const ForwardMode& mode) {
  if (batch.empty()) throw std::invalid_argument("forward: empty batch");
  const std::size_t B = batch.size();
  const std::size_t t = config.window();
  for (const auto* ex : batch) {
    if (ex->prev_sentences.size() != t || ex->next_sentences.size() != t) {
      throw std::invalid_argument("example windows hold " + std::to_string(ex->prev_sentences.size()) + "/" +
                                  std::to_string(ex->next_sentences.size()) + " sentences, model expects " +
                                  std::to_string(t));
    }
  }
  const bool drop = mode.training && config.dropout > 0.0;
  if (drop && !mode.rng) throw std::invalid_argument("training forward needs an RNG for dropout");
  auto maybe_dropout = [&](const Tensor<T>& x) { return drop ? num::dropout(x, config.dropout, *mode.rng) : x; };

  Binder<T> bind(tape);
  const Tensor<T> embedding = bind(params.embedding);
  ForwardResult<T> out;
  Tensor<T> features;

  switch (config.variant) {
    case Variant::no_context:
    case Variant::cnn_no_context: {
      std::vector<const corpus::Sentence*> sentences(2 * B);
      for (std::size_t b = 0; b < B; ++b) {
        sentences[b] = &batch[b]->prev_sentences.back();
        sentences[B + b] = &batch[b]->next_sentences.back();
      }
      const Tensor<T> encoded =
          config.variant == Variant::cnn_no_context
              ? baselines::cnn_encode(bind(*params.conv_W), bind(*params.conv_b), embedding,
                                      std::span<const corpus::Sentence* const>(sentences))
              : encode_sentences(bind(*params.word_lstm), embedding,
                                 std::span<const corpus::Sentence* const>(sentences));
      features = num::concat<T>({num::slice(encoded, 0, 0, B), num::slice(encoded, 0, B, 2 * B)}, 1);
      break;
    }
    case Variant::non_hierarchical:
      features = baselines::non_hierarchical_encode(bind(*params.word_lstm), embedding, batch);
      break;
    case Variant::hierarchical:
    case Variant::static_attention:
    case Variant::dynamic_attention: {
      // Row (side·t + j)·B + b holds sentence j of example b, so each
      // (side, position) block is a contiguous slice.
      std::vector<const corpus::Sentence*> sentences(2 * t * B);
      for (std::size_t j = 0; j < t; ++j) {
        for (std::size_t b = 0; b < B; ++b) {
          sentences[j * B + b] = &batch[b]->prev_sentences[j];
          sentences[(t + j) * B + b] = &batch[b]->next_sentences[j];
        }
      }
      const Tensor<T> encoded = maybe_dropout(encode_sentences(
          bind(*params.word_lstm), embedding, std::span<const corpus::Sentence* const>(sentences)));
      std::vector<Tensor<T>> prev_in, next_in;
      for (std::size_t j = 0; j < t; ++j) {
        prev_in.push_back(num::slice(encoded, 0, j * B, (j + 1) * B));
        next_in.push_back(num::slice(encoded, 0, (t + j) * B, (t + j + 1) * B));
      }
      const LstmCell<T> cell = bind(*params.sentence_lstm);
      const auto prev = encode_context(cell, std::span<const Tensor<T>>(prev_in));
      const auto next = encode_context(cell, std::span<const Tensor<T>>(next_in));

      if (config.variant == Variant::hierarchical) {
        features = num::concat<T>({prev.critical, next.critical}, 1);
      } else {
        const Attention<T> att{bind(params.attention->W_a), bind(params.attention->u_a)};
        if (config.variant == Variant::static_attention) {
          auto m_prev = static_attention(att, prev.critical, std::span<const Tensor<T>>(next.states));
          auto m_next = static_attention(att, next.critical, std::span<const Tensor<T>>(prev.states));
          features = num::concat<T>({prev.critical, next.critical, m_prev.m, m_next.m}, 1);
          out.prev_attention = std::move(m_prev);
          out.next_attention = std::move(m_next);
        } else {
          const Fold<T> fold{bind(params.fold->W), bind(params.fold->b)};
          auto dyn = dynamic_attention(att, fold, std::span<const Tensor<T>>(prev.states),
                                       std::span<const Tensor<T>>(next.states));
          features = num::concat<T>({prev.critical, next.critical, dyn.m_prev, dyn.m_next}, 1);
        }
      }
      break;
    }
  }
  out.logits = num::affine(maybe_dropout(features), bind(params.classifier_W), bind(params.classifier_b));
  return out;
}

}  // namespace

template <typename T>
ScdModel<T>::ScdModel(const ModelConfig& config, std::uint64_t seed) : config_(config), params_(config) {
  initialize(params_, seed);
}

template <typename T>
Tensor<T> ScdModel<T>::logits(Tape<T>* tape, std::span<const corpus::DecisionExample* const> batch,
                              const ForwardMode& mode) {
  return run_forward(config_, params_, tape, batch, mode).logits;
}

template <typename T>
json ScdModel<T>::describe() const {
  return json{{"kind", "neural"}, {"model", config_.to_json()}};
}

template <typename T>
Decision ScdModel<T>::classify(const corpus::DecisionExample& example) {
  const corpus::DecisionExample* one = &example;
  const Tensor<T> z = logits(nullptr, std::span<const corpus::DecisionExample* const>(&one, 1), ForwardMode{});
  const Tensor<T> p = num::softmax(z);
  return Decision{static_cast<double>(p[1]), {static_cast<double>(z[0]), static_cast<double>(z[1])}};
}

template <typename T>
std::pair<std::vector<double>, std::vector<double>> ScdModel<T>::attention_weights(
    const corpus::DecisionExample& example) {
  if (config_.variant != Variant::static_attention) {
    throw std::logic_error("attention weights are only defined for the static attention variant");
  }
  const corpus::DecisionExample* one = &example;
  auto fwd = run_forward(config_, params_, static_cast<Tape<T>*>(nullptr),
                         std::span<const corpus::DecisionExample* const>(&one, 1), ForwardMode{});
  auto to_doubles = [](const Tensor<T>& t) {
    std::vector<double> v(t.data().begin(), t.data().end());
    return v;
  };
  return {to_doubles(fwd.prev_attention->alpha), to_doubles(fwd.next_attention->alpha)};
}

template <typename T>
std::vector<double> predict_proba(Classifier<T>& model, std::span<const corpus::DecisionExample> examples,
                                  std::size_t batch_size) {
  std::vector<double> out;
  out.reserve(examples.size());
  std::vector<const corpus::DecisionExample*> batch;
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const std::size_t end = std::min(examples.size(), start + batch_size);
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(&examples[i]);
    const Tensor<T> p = num::softmax(model.logits(nullptr, batch, ForwardMode{}));
    for (std::size_t r = 0; r < batch.size(); ++r) out.push_back(static_cast<double>(p.at(r, 1)));
  }
  return out;
}

#define SCD_MODEL_INSTANTIATE(T)                                                                               \
  template struct LstmCellParams<T>;                                                                           \
  template class Binder<T>;                                                                                    \
  template LstmState<T> lstm_step<T>(const LstmCell<T>&, const Tensor<T>&, const LstmState<T>&);               \
  template LstmState<T> zero_state<T>(std::size_t, std::size_t);                                               \
  template Tensor<T> encode_sentences<T>(const LstmCell<T>&, const Tensor<T>&,                                 \
                                         std::span<const corpus::Sentence* const>);                            \
  template Tensor<T> encode_sentence<T>(const LstmCell<T>&, const Tensor<T>&, const corpus::Sentence&);        \
  template ContextEncoding<T> encode_context<T>(const LstmCell<T>&, std::span<const Tensor<T>>);               \
  template struct AttentionParams<T>;                                                                          \
  template Tensor<T> attention_scores<T>(const Attention<T>&, const Tensor<T>&, std::span<const Tensor<T>>);   \
  template AttentionResult<T> attend_with_scores<T>(const Tensor<T>&, std::span<const Tensor<T>>);             \
  template AttentionResult<T> static_attention<T>(const Attention<T>&, const Tensor<T>&,                       \
                                                  std::span<const Tensor<T>>);                                 \
  template struct FoldParams<T>;                                                                               \
  template DynamicAttentionResult<T> dynamic_attention<T>(const Attention<T>&, const Fold<T>&,                 \
                                                          std::span<const Tensor<T>>,                          \
                                                          std::span<const Tensor<T>>);                         \
  template struct ModelParams<T>;                                                                              \
  template void initialize<T>(ModelParams<T>&, std::uint64_t);                                                 \
  template class ScdModel<T>;                                                                                  \
  template std::vector<double> predict_proba<T>(Classifier<T>&, std::span<const corpus::DecisionExample>,      \
                                                std::size_t);

SCD_MODEL_INSTANTIATE(float)
SCD_MODEL_INSTANTIATE(double)

#undef SCD_MODEL_INSTANTIATE

}  // namespace scd::model
