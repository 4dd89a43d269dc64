// SPDX-License-Identifier: Apache-2.0
//
// Speaker-labeled transcripts: parsing, tokenization, vocabulary, episode
// splits and decision-point extraction.

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace scd::corpus {

using TokenId = std::int32_t;
using Sentence = std::vector<TokenId>;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;

struct Utterance {
  std::string speaker_id;
  std::string text;
  Sentence tokens;

  bool operator==(const Utterance&) const = default;
};

struct Episode {
  std::string episode_id;
  std::vector<Utterance> utterances;

  bool operator==(const Episode&) const = default;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

using WarningSink = std::function<void(const std::string&)>;
void warn_to_stderr(const std::string& message);

/// One JSON object per line: {"episode_id", "utterances": [{"speaker", "text"}]}.
/// Episodes with fewer than two utterances are dropped through `warn`.
std::vector<Episode> parse_transcripts(std::istream& in, const WarningSink& warn = warn_to_stderr);
std::vector<Episode> parse_transcripts(const std::string& path, const WarningSink& warn = warn_to_stderr);

void write_transcripts(std::span<const Episode> episodes, std::ostream& out);
void write_transcripts(std::span<const Episode> episodes, const std::string& path);

/// Lowercase, whitespace split, with , . ? ! " detached. An apostrophe inside
/// a word opens a clitic token ("it's" → it 's); elsewhere it stands alone.
std::vector<std::string> tokenize(const std::string& text);

class Vocabulary {
 public:
  static constexpr std::size_t kDefaultMaxSize = 50000;

  Vocabulary();
  /// Reserved entries first, then `tokens` in id order.
  explicit Vocabulary(const std::vector<std::string>& tokens);

  TokenId id(const std::string& token) const;
  const std::string& token(TokenId id) const;
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  std::size_t size() const noexcept { return tokens_.size(); }
  /// Non-reserved tokens in id order.
  std::vector<std::string> entries() const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Most frequent max_size−2 tokens of the given (training) episodes; ties by
/// lexicographic order.
Vocabulary build_vocab(std::span<const Episode> train, std::size_t max_size = Vocabulary::kDefaultMaxSize);

/// Fills Utterance::tokens; an empty utterance becomes a single UNK.
void assign_tokens(std::vector<Episode>& episodes, const Vocabulary& vocab);

struct SplitManifest {
  std::uint64_t seed = 0;
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;

  bool operator==(const SplitManifest&) const = default;
  nlohmann::json to_json() const;
  static SplitManifest from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static SplitManifest load(const std::string& path);
};

/// Seeded shuffle, then 8:1:1 (val and test get round(n/10), at least one each).
SplitManifest split_by_episode(std::span<const Episode> episodes, std::uint64_t seed);

/// Episodes whose ids appear in `ids`, in `ids` order.
std::vector<Episode> select_episodes(std::span<const Episode> episodes, std::span<const std::string> ids);

enum class Label : int { no_change = 0, change = 1 };

struct DecisionExample {
  /// t sentences, faraway → near; the last entry is the critical sentence.
  std::vector<Sentence> prev_sentences;
  /// t sentences, faraway → near; the last entry is utterance position+1.
  std::vector<Sentence> next_sentences;
  Label label = Label::no_change;
  std::string episode_id;
  /// Decision point between utterances `position` and `position + 1` (0-based).
  std::size_t position = 0;
};

/// Context windows for every consecutive pair, without reading speaker ids.
/// Out-of-episode slots hold the PAD sentence {kPad}.
std::vector<DecisionExample> extract_windows(const Episode& episode, std::size_t t);

/// extract_windows plus labels induced from speaker ids.
std::vector<DecisionExample> extract_examples(const Episode& episode, std::size_t t);

std::vector<DecisionExample> extract_examples(std::span<const Episode> episodes, std::size_t t);

double positive_rate(std::span<const DecisionExample> examples);

}  // namespace scd::corpus
