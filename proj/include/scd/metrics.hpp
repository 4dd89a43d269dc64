// SPDX-License-Identifier: Apache-2.0
//
// Accuracy, precision, recall and F1 with `change` as the positive class.

#pragma once

#include <span>
#include <string>

#include "json.hpp"
#include "scd/corpus.hpp"

namespace scd::metrics {

struct Prediction {
  double p_change = 0.0;
  corpus::Label gold = corpus::Label::no_change;
};

struct MetricsReport {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0;
  double precision = 0.0;  // 0 when nothing is predicted positive
  double recall = 0.0;
  double f1 = 0.0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  nlohmann::json to_json() const;
  /// Two aligned columns, one metric per line.
  std::string to_table() const;
};

/// Argmax of the 2-way softmax: change iff p ≥ 0.5.
inline corpus::Label decide(double p_change) {
  return p_change >= 0.5 ? corpus::Label::change : corpus::Label::no_change;
}

/// 2PR/(P+R), or 0 when P+R = 0.
double f1_score(double precision, double recall);

/// Report from counts alone.
MetricsReport from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn);

/// Throws std::invalid_argument on empty input.
MetricsReport evaluate(std::span<const Prediction> predictions);
MetricsReport evaluate(std::span<const corpus::Label> predicted, std::span<const corpus::Label> gold);

/// Tab-separated rows per decision point: pair, utterances, predicted, gold
/// (with the speaker ids that induce it), and a ✓/✗ mark. A one-utterance
/// episode yields the header only.
std::string render_case_study(const corpus::Episode& episode, std::span<const corpus::Label> predicted);

}  // namespace scd::metrics
