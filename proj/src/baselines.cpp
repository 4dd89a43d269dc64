// SPDX-License-Identifier: Apache-2.0

#include "scd/baselines.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace scd::baselines {

using nlohmann::json;

template <typename T>
Tensor<T> cnn_encode(const Tensor<T>& conv_W, const Tensor<T>& conv_b, const Tensor<T>& embedding,
                     std::span<const corpus::Sentence* const> sentences) {
  if (sentences.empty()) throw std::invalid_argument("cnn_encode: no sentences");
  constexpr std::size_t kWidth = 3;
  const std::size_t n = sentences.size();
  std::vector<std::size_t> padded(n);
  std::size_t longest = 0;
  for (std::size_t r = 0; r < n; ++r) {
    padded[r] = std::max(sentences[r]->size(), kWidth);
    longest = std::max(longest, padded[r]);
  }

  std::vector<Tensor<T>> columns;
  columns.reserve(longest);
  std::vector<std::size_t> ids(n);
  for (std::size_t pos = 0; pos < longest; ++pos) {
    for (std::size_t r = 0; r < n; ++r) {
      const auto& s = *sentences[r];
      ids[r] = pos < s.size() ? static_cast<std::size_t>(s[pos]) : static_cast<std::size_t>(corpus::kPad);
    }
    columns.push_back(num::gather_rows(embedding, std::span<const std::size_t>(ids)));
  }

  // tanh lies in [−1, 1], so −2 never wins the max.
  const Tensor<T> floor = Tensor<T>::full({n, conv_W.dim(0)}, T(-2));
  std::vector<Tensor<T>> windows;
  std::vector<std::uint8_t> valid(n);
  for (std::size_t pos = 0; pos + kWidth <= longest; ++pos) {
    const Tensor<T> x = num::concat<T>({columns[pos], columns[pos + 1], columns[pos + 2]}, 1);
    const Tensor<T> h = num::tanh(num::affine(x, conv_W, conv_b));
    bool all_valid = true;
    for (std::size_t r = 0; r < n; ++r) {
      valid[r] = pos + kWidth <= padded[r];
      all_valid = all_valid && valid[r];
    }
    windows.push_back(all_valid ? h : num::select_rows<T>(valid, h, floor));
  }
  return windows.size() == 1 ? windows.front() : num::maximum(std::span<const Tensor<T>>(windows));
}

template <typename T>
Tensor<T> non_hierarchical_encode(const model::LstmCell<T>& cell, const Tensor<T>& embedding,
                                  std::span<const corpus::DecisionExample* const> batch) {
  const std::size_t B = batch.size();
  std::vector<corpus::Sentence> streams(2 * B);
  for (std::size_t b = 0; b < B; ++b) {
    for (const auto& s : batch[b]->prev_sentences) streams[b].insert(streams[b].end(), s.begin(), s.end());
    for (const auto& s : batch[b]->next_sentences) streams[B + b].insert(streams[B + b].end(), s.begin(), s.end());
  }
  std::vector<const corpus::Sentence*> ptrs;
  ptrs.reserve(streams.size());
  for (const auto& s : streams) ptrs.push_back(&s);
  const Tensor<T> h = model::encode_sentences(cell, embedding, std::span<const corpus::Sentence* const>(ptrs));
  return num::concat<T>({num::slice(h, 0, 0, B), num::slice(h, 0, B, 2 * B)}, 1);
}

// ---- n-gram features -------------------------------------------------------

std::uint64_t NgramFeatureSpace::key(std::span<const corpus::TokenId> ngram) {
  const auto first = static_cast<std::uint64_t>(static_cast<std::uint32_t>(ngram[0]) + 1u) << 32;
  if (ngram.size() == 1) return first;
  return first | static_cast<std::uint32_t>(ngram[1] + 1);
}

NgramFeatureSpace::NgramFeatureSpace(std::vector<std::vector<corpus::TokenId>> ngrams) : ngrams_(std::move(ngrams)) {
  for (std::size_t i = 0; i < ngrams_.size(); ++i) {
    const auto& g = ngrams_[i];
    if (g.empty() || g.size() > 2) throw std::invalid_argument("n-gram must hold one or two tokens");
    if (!index_.emplace(key(g), i).second) throw std::invalid_argument("duplicate n-gram in feature space");
  }
}

NgramFeatureSpace NgramFeatureSpace::build(std::span<const corpus::Episode> train, std::size_t cap) {
  std::map<std::uint64_t, std::pair<std::size_t, std::vector<corpus::TokenId>>> counts;
  auto count = [&](std::span<const corpus::TokenId> g) {
    auto& slot = counts[key(g)];
    if (slot.first++ == 0) slot.second.assign(g.begin(), g.end());
  };
  for (const auto& ep : train) {
    for (const auto& u : ep.utterances) {
      const std::span<const corpus::TokenId> toks(u.tokens);
      for (std::size_t i = 0; i < toks.size(); ++i) {
        count(toks.subspan(i, 1));
        if (i + 1 < toks.size()) count(toks.subspan(i, 2));
      }
    }
  }
  std::vector<std::pair<std::size_t, std::vector<corpus::TokenId>>> ranked;
  ranked.reserve(counts.size());
  for (auto& [k, v] : counts) ranked.push_back(std::move(v));
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  if (ranked.size() > cap) ranked.resize(cap);
  std::vector<std::vector<corpus::TokenId>> ngrams;
  ngrams.reserve(ranked.size());
  for (auto& r : ranked) ngrams.push_back(std::move(r.second));
  return NgramFeatureSpace(std::move(ngrams));
}

std::int64_t NgramFeatureSpace::index(std::span<const corpus::TokenId> ngram) const {
  if (ngram.empty() || ngram.size() > 2) return -1;
  auto it = index_.find(key(ngram));
  return it == index_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

json NgramFeatureSpace::to_json() const { return json{{"ngrams", ngrams_}}; }

NgramFeatureSpace NgramFeatureSpace::from_json(const json& j) {
  return NgramFeatureSpace(j.at("ngrams").get<std::vector<std::vector<corpus::TokenId>>>());
}

NgramFeatureVector ngram_featurize(const corpus::Sentence& prev_critical, const corpus::Sentence& next_critical,
                                   const NgramFeatureSpace& space) {
  NgramFeatureVector out;
  const std::size_t offsets[2] = {0, space.size()};
  const corpus::Sentence* sides[2] = {&prev_critical, &next_critical};
  for (int side = 0; side < 2; ++side) {
    std::map<std::size_t, double> block;
    const std::span<const corpus::TokenId> toks(*sides[side]);
    for (std::size_t i = 0; i < toks.size(); ++i) {
      for (std::size_t n = 1; n <= 2 && i + n <= toks.size(); ++n) {
        const auto idx = space.index(toks.subspan(i, n));
        if (idx >= 0) block[static_cast<std::size_t>(idx)] += 1.0;
      }
    }
    for (const auto& [idx, cnt] : block) out.push_back({offsets[side] + idx, cnt});
  }
  return out;
}

namespace {

/// Features for a batch with the bias entry appended at index 2F.
std::vector<num::Bag> featurize_batch(std::span<const corpus::DecisionExample* const> batch,
                                      const NgramFeatureSpace& space) {
  std::vector<num::Bag> bags;
  bags.reserve(batch.size());
  for (const auto* ex : batch) {
    auto bag = ngram_featurize(ex->prev_sentences.back(), ex->next_sentences.back(), space);
    bag.push_back({2 * space.size(), 1.0});
    bags.push_back(std::move(bag));
  }
  return bags;
}

num::Bag with_bias(const NgramFeatureVector& features, std::size_t bias_index) {
  num::Bag bag = features;
  bag.push_back({bias_index, 1.0});
  return bag;
}

template <typename T>
double p_change(const Tensor<T>& logits) {
  return static_cast<double>(num::softmax(logits).at(0, 1));
}

}  // namespace

// ---- logistic regression ---------------------------------------------------

template <typename T>
LogRegModel<T>::LogRegModel(NgramFeatureSpace space)
    : space_(std::move(space)), weights_("logreg.w", {2 * space_.size() + 1, 1}) {}

namespace {

template <typename T>
Tensor<T> logreg_logits(const Tensor<T>& weights, std::span<const num::Bag> bags) {
  const Tensor<T> z = num::embedding_bag(weights, bags);
  return num::concat<T>({Tensor<T>::zeros({bags.size(), 1}), z}, 1);
}

}  // namespace

template <typename T>
Tensor<T> LogRegModel<T>::logits(Tape<T>* tape, std::span<const corpus::DecisionExample* const> batch,
                                 const ForwardMode&) {
  const auto bags = featurize_batch(batch, space_);
  return logreg_logits(model::Binder<T>(tape)(weights_), std::span<const num::Bag>(bags));
}

template <typename T>
double LogRegModel<T>::forward(const NgramFeatureVector& features) {
  const num::Bag bag = with_bias(features, 2 * space_.size());
  return p_change(logreg_logits(weights_.tensor(), std::span<const num::Bag>(&bag, 1)));
}

template <typename T>
json LogRegModel<T>::describe() const {
  return json{{"kind", "logreg"}, {"features", space_.to_json()}};
}

// ---- DNN -------------------------------------------------------------------

template <typename T>
DnnModel<T>::DnnModel(NgramFeatureSpace space, std::size_t hidden, double dropout, std::uint64_t seed)
    : space_(std::move(space)),
      hidden_(hidden),
      dropout_(dropout),
      W1_("dnn.W1", {2 * space_.size() + 1, hidden}),
      W2_("dnn.W2", {hidden, hidden}),
      b2_("dnn.b2", {hidden}),
      W3_("dnn.W3", {2, hidden}),
      b3_("dnn.b3", {2}) {
  if (hidden == 0) throw std::invalid_argument("DNN hidden width must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0,1)");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-0.08, 0.08);
  for (auto* p : {&W1_, &W2_})
    for (auto& v : p->value()) v = static_cast<T>(uniform(rng));
}

template <typename T>
Tensor<T> DnnModel<T>::logits_from_features(Tape<T>* tape, std::span<const NgramFeatureVector> features,
                                            const ForwardMode& mode) {
  std::vector<num::Bag> bags;
  bags.reserve(features.size());
  for (const auto& f : features) bags.push_back(with_bias(f, 2 * space_.size()));

  const bool drop = mode.training && dropout_ > 0.0;
  if (drop && !mode.rng) throw std::invalid_argument("training forward needs an RNG for dropout");
  auto maybe_dropout = [&](const Tensor<T>& x) { return drop ? num::dropout(x, dropout_, *mode.rng) : x; };

  model::Binder<T> bind(tape);
  Tensor<T> h = maybe_dropout(num::tanh(num::embedding_bag(bind(W1_), std::span<const num::Bag>(bags))));
  h = maybe_dropout(num::tanh(num::affine(h, bind(W2_), bind(b2_))));
  return num::affine(h, bind(W3_), bind(b3_));
}

template <typename T>
Tensor<T> DnnModel<T>::logits(Tape<T>* tape, std::span<const corpus::DecisionExample* const> batch,
                              const ForwardMode& mode) {
  std::vector<NgramFeatureVector> features;
  features.reserve(batch.size());
  for (const auto* ex : batch)
    features.push_back(ngram_featurize(ex->prev_sentences.back(), ex->next_sentences.back(), space_));
  return logits_from_features(tape, features, mode);
}

template <typename T>
double DnnModel<T>::forward(const NgramFeatureVector& features) {
  return p_change(logits_from_features(nullptr, std::span<const NgramFeatureVector>(&features, 1), ForwardMode{}));
}

template <typename T>
json DnnModel<T>::describe() const {
  return json{{"kind", "dnn"}, {"features", space_.to_json()}, {"hidden", hidden_}, {"dropout", dropout_}};
}

// ---- random guess ----------------------------------------------------------

corpus::Label random_guess(double rate, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("guess rate must lie in [0,1]");
  return std::bernoulli_distribution(rate)(rng) ? corpus::Label::change : corpus::Label::no_change;
}

double random_guess_expected_accuracy(double p) { return p * p + (1.0 - p) * (1.0 - p); }

#define SCD_BASELINES_INSTANTIATE(T)                                                                         \
  template Tensor<T> cnn_encode<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                     \
                                   std::span<const corpus::Sentence* const>);                                \
  template Tensor<T> non_hierarchical_encode<T>(const model::LstmCell<T>&, const Tensor<T>&,                 \
                                                std::span<const corpus::DecisionExample* const>);            \
  template class LogRegModel<T>;                                                                             \
  template class DnnModel<T>;

SCD_BASELINES_INSTANTIATE(float)
SCD_BASELINES_INSTANTIATE(double)

#undef SCD_BASELINES_INSTANTIATE

}  // namespace scd::baselines
