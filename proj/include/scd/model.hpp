// SPDX-License-Identifier: Apache-2.0
//
// Hierarchical LSTM speaker-change classifier.
//
// A word-level LSTM turns each utterance into a sentence vector (its final
// hidden state). A sentence-level LSTM folds each side of the decision point
// from the farthest utterance to the critical one. With static attention the
// two critical states each attend over the opposite side's states, and the
// classifier reads [s_prev; s_next; m_prev; m_next] through one affine layer
// and a 2-way softmax. All forwards are batched: activations are [B×d].

#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "scd/corpus.hpp"
#include "scd/numcore.hpp"

namespace scd::model {

using num::Parameter;
using num::Tape;
using num::Tensor;

enum class Variant {
  no_context,
  non_hierarchical,
  hierarchical,
  static_attention,
  dynamic_attention,
  cnn_no_context,
};

std::string to_string(Variant v);
/// Throws std::invalid_argument for unknown names.
Variant variant_from_string(const std::string& name);
std::vector<Variant> all_variants();

struct ModelConfig {
  std::size_t dim = 200;
  std::size_t attention_dim = 200;
  std::size_t context_size = 0;
  std::size_t vocab_size = 2;
  double dropout = 0.1;
  Variant variant = Variant::static_attention;

  /// Sentences per side, t = context_size + 1.
  std::size_t window() const noexcept { return context_size + 1; }
  /// Width of the classifier input.
  std::size_t classifier_input() const noexcept;
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Forward-pass switches. Dropout only applies when `training` is set.
struct ForwardMode {
  bool training = false;
  std::mt19937_64* rng = nullptr;
};

/// Anything the training loop can fit: produces [B×2] logits, class 1 = change.
template <typename T>
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::vector<Parameter<T>*> parameters() = 0;
  virtual Tensor<T> logits(Tape<T>* tape, std::span<const corpus::DecisionExample* const> batch,
                           const ForwardMode& mode) = 0;
  /// Everything needed to rebuild the model before loading tensors.
  virtual nlohmann::json describe() const = 0;
  virtual std::unique_ptr<Classifier> clone() const = 0;
};

// ---- LSTM ------------------------------------------------------------------

/// Stacked input/forget/output gates in W, U, b; candidate in Wg, Ug, bg.
template <typename T>
struct LstmCellParams {
  LstmCellParams(const std::string& prefix, std::size_t input_dim, std::size_t dim);

  Parameter<T> W;   // [3d × d_in]
  Parameter<T> U;   // [3d × d]
  Parameter<T> b;   // [3d]
  Parameter<T> Wg;  // [d × d_in]
  Parameter<T> Ug;  // [d × d]
  Parameter<T> bg;  // [d]

  std::vector<Parameter<T>*> all();
};

/// LstmCellParams bound for one forward (tracked or constant).
template <typename T>
struct LstmCell {
  Tensor<T> W, U, b, Wg, Ug, bg;
  std::size_t dim() const { return Ug.dim(1); }
};

template <typename T>
struct LstmState {
  Tensor<T> h;
  Tensor<T> c;
};

/// Tracked views when a tape is given, constant views otherwise.
template <typename T>
class Binder {
 public:
  explicit Binder(Tape<T>* tape) : tape_(tape) {}
  Tensor<T> operator()(Parameter<T>& p) const { return tape_ ? tape_->watch(p) : p.tensor(); }
  LstmCell<T> operator()(LstmCellParams<T>& p) const;

 private:
  Tape<T>* tape_;
};

/// One step: [i;f;o] = σ(Wx + Uh + b); g = tanh(W_g x + U_g h + b_g);
/// c = i⊗g + c_prev⊗f; h = o⊗tanh(c). x may be [d_in] or [B×d_in].
template <typename T>
LstmState<T> lstm_step(const LstmCell<T>& cell, const Tensor<T>& x, const LstmState<T>& prev);

template <typename T>
LstmState<T> zero_state(std::size_t rows, std::size_t dim);

/// Final hidden state of each sentence at its own last token → [N×d].
/// Sentences are padded to the longest one; padded steps leave a row's state
/// untouched, so the result does not depend on batch composition.
template <typename T>
Tensor<T> encode_sentences(const LstmCell<T>& cell, const Tensor<T>& embedding,
                           std::span<const corpus::Sentence* const> sentences);

/// Single-sentence convenience → [d].
template <typename T>
Tensor<T> encode_sentence(const LstmCell<T>& cell, const Tensor<T>& embedding, const corpus::Sentence& tokens);

template <typename T>
struct ContextEncoding {
  std::vector<Tensor<T>> states;  // t × [B×d], faraway → near
  Tensor<T> critical;             // == states.back()
};

/// Sentence-level LSTM from the farthest sentence to the critical one.
template <typename T>
ContextEncoding<T> encode_context(const LstmCell<T>& cell, std::span<const Tensor<T>> side);

// ---- attention -------------------------------------------------------------

template <typename T>
struct AttentionParams {
  AttentionParams(std::size_t attention_dim, std::size_t dim);
  Parameter<T> W_a;  // [d_a × 2d]
  Parameter<T> u_a;  // [d_a]
  std::vector<Parameter<T>*> all();
};

template <typename T>
struct Attention {
  Tensor<T> W_a, u_a;
};

template <typename T>
struct AttentionResult {
  Tensor<T> alpha;  // [B×t]
  Tensor<T> m;      // [B×d]
};

/// Scores ũᵢ = u_aᵀ tanh(W_a [query; keyᵢ]), α = softmax(ũ), m = Σ αᵢ keyᵢ.
template <typename T>
AttentionResult<T> static_attention(const Attention<T>& att, const Tensor<T>& query,
                                    std::span<const Tensor<T>> keys);

/// Same attention from precomputed scores [B×t]; exposed for shift-invariance checks.
template <typename T>
AttentionResult<T> attend_with_scores(const Tensor<T>& scores, std::span<const Tensor<T>> keys);

template <typename T>
Tensor<T> attention_scores(const Attention<T>& att, const Tensor<T>& query, std::span<const Tensor<T>> keys);

/// Gate of the recurrent fold used by dynamic attention.
template <typename T>
struct FoldParams {
  explicit FoldParams(std::size_t dim);
  Parameter<T> W;  // [d × 2d]
  Parameter<T> b;  // [d]
  std::vector<Parameter<T>*> all();
};

template <typename T>
struct Fold {
  Tensor<T> W, b;
};

template <typename T>
struct DynamicAttentionResult {
  Tensor<T> m_prev;
  Tensor<T> m_next;
  std::vector<Tensor<T>> alpha_prev;  // per query position, [B×t] each
  std::vector<Tensor<T>> alpha_next;
};

/// Every position on one side attends over the whole other side; the
/// per-position vectors are folded by r₁ = m₁, rᵢ = rᵢ₋₁ + zᵢ⊗(mᵢ − rᵢ₋₁)
/// with zᵢ = σ(W [mᵢ; rᵢ₋₁] + b). With t = 1 this is static attention.
template <typename T>
DynamicAttentionResult<T> dynamic_attention(const Attention<T>& att, const Fold<T>& fold,
                                            std::span<const Tensor<T>> prev_states,
                                            std::span<const Tensor<T>> next_states);

// ---- full model ------------------------------------------------------------

/// All trainable tensors; components absent for a variant stay empty.
template <typename T>
struct ModelParams {
  explicit ModelParams(const ModelConfig& config);

  Parameter<T> embedding;                           // [V×d]
  std::optional<LstmCellParams<T>> word_lstm;       // all but cnn, d_in = d
  std::optional<LstmCellParams<T>> sentence_lstm;   // hierarchical variants
  std::optional<AttentionParams<T>> attention;      // static / dynamic
  std::optional<FoldParams<T>> fold;                // dynamic
  std::optional<Parameter<T>> conv_W;               // cnn: [d × 3d]
  std::optional<Parameter<T>> conv_b;               // cnn: [d]
  Parameter<T> classifier_W;                        // [2 × k]
  Parameter<T> classifier_b;                        // [2]

  /// Census in a fixed order; names are unique.
  std::vector<Parameter<T>*> all();
};

/// Closed-form parameter count for a config.
std::size_t parameter_count(const ModelConfig& config);

/// Weights and embeddings U(−0.08, 0.08); biases and the classifier layer zero.
template <typename T>
void initialize(ModelParams<T>& params, std::uint64_t seed);

struct Decision {
  double p_change;
  std::array<double, 2> logits;
};

template <typename T>
class ScdModel final : public Classifier<T> {
 public:
  ScdModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  ModelParams<T>& params() noexcept { return params_; }

  std::vector<Parameter<T>*> parameters() override { return params_.all(); }
  Tensor<T> logits(Tape<T>* tape, std::span<const corpus::DecisionExample* const> batch,
                   const ForwardMode& mode) override;
  nlohmann::json describe() const override;
  std::unique_ptr<Classifier<T>> clone() const override { return std::make_unique<ScdModel>(*this); }

  /// Eval-mode probability of `change` for one example.
  Decision classify(const corpus::DecisionExample& example);

  /// Attention weights of the critical queries, eval mode. Requires static attention.
  std::pair<std::vector<double>, std::vector<double>> attention_weights(const corpus::DecisionExample& example);

 private:
  ModelConfig config_;
  ModelParams<T> params_;
};

/// Probability of `change` for every example, eval mode, in batches.
template <typename T>
std::vector<double> predict_proba(Classifier<T>& model, std::span<const corpus::DecisionExample> examples,
                                  std::size_t batch_size = 100);

}  // namespace scd::model
