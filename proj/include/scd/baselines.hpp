// SPDX-License-Identifier: Apache-2.0
//
// Comparison models: n-gram logistic regression and DNN, the CNN sentence
// encoder, the non-hierarchical context RNN, and random guessing.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "scd/corpus.hpp"
#include "scd/model.hpp"
#include "scd/numcore.hpp"

namespace scd::baselines {

using model::Classifier;
using model::ForwardMode;
using num::Parameter;
using num::Tape;
using num::Tensor;

// ---- neural sentence encoders ----------------------------------------------

/// Window-3 convolution with tanh over embeddings, then max over positions.
/// Sentences shorter than 3 are padded with PAD. → [N×d].
template <typename T>
Tensor<T> cnn_encode(const Tensor<T>& conv_W, const Tensor<T>& conv_b, const Tensor<T>& embedding,
                     std::span<const corpus::Sentence* const> sentences);

/// One word-level LSTM over each side's t sentences concatenated
/// faraway → near; returns [h_prev; h_next] → [B×2d].
template <typename T>
Tensor<T> non_hierarchical_encode(const model::LstmCell<T>& cell, const Tensor<T>& embedding,
                                  std::span<const corpus::DecisionExample* const> batch);

// ---- n-gram features -------------------------------------------------------

/// Unigram and bigram dictionary over token ids, built from training data.
class NgramFeatureSpace {
 public:
  static constexpr std::size_t kDefaultCap = 100000;

  NgramFeatureSpace() = default;
  explicit NgramFeatureSpace(std::vector<std::vector<corpus::TokenId>> ngrams);

  /// Most frequent n-grams of the episodes' utterances; ties by key order.
  static NgramFeatureSpace build(std::span<const corpus::Episode> train, std::size_t cap = kDefaultCap);

  /// Index of an n-gram, or -1 when unseen.
  std::int64_t index(std::span<const corpus::TokenId> ngram) const;
  std::size_t size() const noexcept { return ngrams_.size(); }
  const std::vector<std::vector<corpus::TokenId>>& ngrams() const noexcept { return ngrams_; }

  nlohmann::json to_json() const;
  static NgramFeatureSpace from_json(const nlohmann::json& j);

 private:
  static std::uint64_t key(std::span<const corpus::TokenId> ngram);
  std::vector<std::vector<corpus::TokenId>> ngrams_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

/// Sparse index → count over [prev block | next block], each block of width
/// space.size(). Unseen n-grams are dropped.
using NgramFeatureVector = num::Bag;

NgramFeatureVector ngram_featurize(const corpus::Sentence& prev_critical, const corpus::Sentence& next_critical,
                                   const NgramFeatureSpace& space);

/// σ(w·x + b) as 2-way logits [0, w·x + b]. Weights start at zero.
template <typename T>
class LogRegModel final : public Classifier<T> {
 public:
  explicit LogRegModel(NgramFeatureSpace space);

  std::vector<Parameter<T>*> parameters() override { return {&weights_}; }
  Tensor<T> logits(Tape<T>* tape, std::span<const corpus::DecisionExample* const> batch,
                   const ForwardMode& mode) override;
  nlohmann::json describe() const override;
  std::unique_ptr<Classifier<T>> clone() const override { return std::make_unique<LogRegModel>(*this); }

  /// p_change for one precomputed feature vector.
  double forward(const NgramFeatureVector& features);
  const NgramFeatureSpace& space() const noexcept { return space_; }
  Parameter<T>& weights() noexcept { return weights_; }

 private:
  NgramFeatureSpace space_;
  Parameter<T> weights_;  // [2F+1 × 1], last row is the bias
};

/// Two tanh hidden layers, then a 2-way softmax. Final layer starts at zero.
template <typename T>
class DnnModel final : public Classifier<T> {
 public:
  DnnModel(NgramFeatureSpace space, std::size_t hidden, double dropout, std::uint64_t seed);

  std::vector<Parameter<T>*> parameters() override { return {&W1_, &W2_, &b2_, &W3_, &b3_}; }
  Tensor<T> logits(Tape<T>* tape, std::span<const corpus::DecisionExample* const> batch,
                   const ForwardMode& mode) override;
  nlohmann::json describe() const override;
  std::unique_ptr<Classifier<T>> clone() const override { return std::make_unique<DnnModel>(*this); }

  double forward(const NgramFeatureVector& features);
  Tensor<T> logits_from_features(Tape<T>* tape, std::span<const NgramFeatureVector> features,
                                 const ForwardMode& mode);
  std::size_t hidden() const noexcept { return hidden_; }

 private:
  NgramFeatureSpace space_;
  std::size_t hidden_;
  double dropout_;
  Parameter<T> W1_;  // [2F+1 × h], last row is the bias
  Parameter<T> W2_;  // [h × h]
  Parameter<T> b2_;  // [h]
  Parameter<T> W3_;  // [2 × h]
  Parameter<T> b3_;  // [2]
};

// ---- random guess ----------------------------------------------------------

/// `change` with probability `rate`.
corpus::Label random_guess(double rate, std::mt19937_64& rng);

/// Expected accuracy p² + (1−p)² when guessing at the positive rate p.
double random_guess_expected_accuracy(double p);

}  // namespace scd::baselines
