// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic dialogs with recoverable speaker changes.
//
// A global pool of personas shares round(ρ·V) common words; the remaining
// words of each persona's V-word vocabulary are its own. Every episode casts
// `n_speakers` personas, and the speaker switches with probability q per
// step. With the context signal on, a marker word is inserted into the
// utterance two before each change (or a `marker_rate` fraction of them).

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "scd/corpus.hpp"

namespace scd::synthgen {

struct SynthSpec {
  std::size_t n_episodes = 200;
  std::size_t min_utterances = 10;
  std::size_t max_utterances = 30;
  std::size_t min_words = 4;
  std::size_t max_words = 10;
  std::size_t n_speakers = 3;
  std::size_t n_personas = 12;
  std::size_t persona_vocab = 40;
  double overlap = 0.3;  // ρ
  bool context_signal = true;
  double marker_rate = 1.0;
  std::string marker = "anyway";
  double change_prob = 0.25;  // q
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults.
  static SynthSpec from_json(const nlohmann::json& j);
};

/// Words of one persona: the shared words first, then its own.
std::vector<std::string> persona_vocabulary(const SynthSpec& spec, std::size_t persona);

std::vector<corpus::Episode> generate(const SynthSpec& spec);

}  // namespace scd::synthgen
