// SPDX-License-Identifier: Apache-2.0

#include "scd/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

namespace scd::corpus {

using nlohmann::json;

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

void warn_to_stderr(const std::string& message) { std::cerr << "warning: " << message << '\n'; }

std::vector<Episode> parse_transcripts(std::istream& in, const WarningSink& warn) {
  std::vector<Episode> episodes;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;

    Episode ep;
    try {
      json j = json::parse(line);
      ep.episode_id = j.at("episode_id").get<std::string>();
      for (const auto& u : j.at("utterances")) {
        Utterance utt;
        // Speaker ids are optional so unlabeled transcripts parse too.
        if (u.contains("speaker")) utt.speaker_id = u.at("speaker").get<std::string>();
        utt.text = u.at("text").get<std::string>();
        ep.utterances.push_back(std::move(utt));
      }
    } catch (const json::exception& e) {
      throw ParseError(line_no, std::string("malformed transcript record: ") + e.what());
    }
    if (!seen.insert(ep.episode_id).second) throw ParseError(line_no, "duplicate episode_id '" + ep.episode_id + "'");
    if (ep.utterances.size() < 2) {
      if (warn) warn("episode '" + ep.episode_id + "' has fewer than 2 utterances; dropped");
      continue;
    }
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

std::vector<Episode> parse_transcripts(const std::string& path, const WarningSink& warn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open transcript file '" + path + "'");
  return parse_transcripts(in, warn);
}

void write_transcripts(std::span<const Episode> episodes, std::ostream& out) {
  for (const auto& ep : episodes) {
    json utts = json::array();
    for (const auto& u : ep.utterances) utts.push_back({{"speaker", u.speaker_id}, {"text", u.text}});
    out << json{{"episode_id", ep.episode_id}, {"utterances", std::move(utts)}}.dump() << '\n';
  }
}

void write_transcripts(std::span<const Episode> episodes, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write transcript file '" + path + "'");
  write_transcripts(episodes, out);
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) tokens.push_back(std::move(word));
    word.clear();
  };
  auto is_word_char = [](char c) {
    auto u = static_cast<unsigned char>(c);
    return u >= 0x80 || std::isalnum(u);
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (c == ',' || c == '.' || c == '?' || c == '!' || c == '"') {
      flush();
      tokens.emplace_back(1, c);
    } else if (c == '\'') {
      const bool inside = !word.empty() && is_word_char(word.back()) && i + 1 < text.size() &&
                          is_word_char(text[i + 1]);
      flush();
      if (inside) {
        word = "'";
      } else {
        tokens.emplace_back("'");
      }
    } else {
      word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  return tokens;
}

// ---- Vocabulary ------------------------------------------------------------

Vocabulary::Vocabulary() : tokens_{"<pad>", "<unk>"} {
  index_.emplace(tokens_[kPad], kPad);
  index_.emplace(tokens_[kUnk], kUnk);
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) : Vocabulary() {
  for (const auto& tok : tokens) {
    if (index_.count(tok)) throw std::invalid_argument("duplicate vocabulary entry '" + tok + "'");
    index_.emplace(tok, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(tok);
  }
}

TokenId Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }

std::vector<std::string> Vocabulary::entries() const { return {tokens_.begin() + 2, tokens_.end()}; }

json Vocabulary::to_json() const { return json{{"tokens", entries()}}; }

Vocabulary Vocabulary::from_json(const json& j) { return Vocabulary(j.at("tokens").get<std::vector<std::string>>()); }

Vocabulary build_vocab(std::span<const Episode> train, std::size_t max_size) {
  std::map<std::string, std::size_t> counts;
  for (const auto& ep : train)
    for (const auto& u : ep.utterances)
      for (auto& tok : tokenize(u.text)) ++counts[tok];

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // std::map iteration is already lexicographic, so a stable sort by count
  // leaves ties in lexicographic order.
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t keep = max_size > 2 ? std::min(max_size - 2, ranked.size()) : 0;
  std::vector<std::string> tokens;
  tokens.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) tokens.push_back(ranked[i].first);
  return Vocabulary(tokens);
}

void assign_tokens(std::vector<Episode>& episodes, const Vocabulary& vocab) {
  for (auto& ep : episodes) {
    for (auto& u : ep.utterances) {
      u.tokens.clear();
      for (const auto& tok : tokenize(u.text)) u.tokens.push_back(vocab.id(tok));
      if (u.tokens.empty()) u.tokens.push_back(kUnk);
    }
  }
}

// ---- splits ----------------------------------------------------------------

json SplitManifest::to_json() const {
  return json{{"seed", seed}, {"train", train}, {"val", val}, {"test", test}};
}

SplitManifest SplitManifest::from_json(const json& j) {
  SplitManifest m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.train = j.at("train").get<std::vector<std::string>>();
  m.val = j.at("val").get<std::vector<std::string>>();
  m.test = j.at("test").get<std::vector<std::string>>();
  return m;
}

void SplitManifest::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write split manifest '" + path + "'");
  out << to_json().dump(2) << '\n';
}

SplitManifest SplitManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open split manifest '" + path + "'");
  return from_json(json::parse(in));
}

SplitManifest split_by_episode(std::span<const Episode> episodes, std::uint64_t seed) {
  const std::size_t n = episodes.size();
  if (n < 3) throw std::invalid_argument("split_by_episode needs at least 3 episodes, got " + std::to_string(n));
  std::vector<std::string> ids;
  ids.reserve(n);
  for (const auto& ep : episodes) ids.push_back(ep.episode_id);
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  const auto tenth = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(n) / 10.0)));
  const std::size_t n_train = n - 2 * tenth;
  SplitManifest m;
  m.seed = seed;
  m.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  m.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
               ids.begin() + static_cast<std::ptrdiff_t>(n_train + tenth));
  m.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + tenth), ids.end());
  return m;
}

std::vector<Episode> select_episodes(std::span<const Episode> episodes, std::span<const std::string> ids) {
  std::unordered_map<std::string, const Episode*> by_id;
  for (const auto& ep : episodes) by_id.emplace(ep.episode_id, &ep);
  std::vector<Episode> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw std::invalid_argument("episode '" + id + "' not found in transcripts");
    out.push_back(*it->second);
  }
  return out;
}

// ---- decision points -------------------------------------------------------

std::vector<DecisionExample> extract_windows(const Episode& episode, std::size_t t) {
  if (t < 1) throw std::invalid_argument("window size t must be at least 1");
  const Sentence pad{kPad};
  const auto n = static_cast<std::ptrdiff_t>(episode.utterances.size());
  const auto tt = static_cast<std::ptrdiff_t>(t);
  auto sentence_at = [&](std::ptrdiff_t idx) -> Sentence {
    if (idx < 0 || idx >= n) return pad;
    const auto& toks = episode.utterances[static_cast<std::size_t>(idx)].tokens;
    return toks.empty() ? Sentence{kUnk} : toks;
  };

  std::vector<DecisionExample> out;
  if (n < 2) return out;
  out.reserve(static_cast<std::size_t>(n - 1));
  for (std::ptrdiff_t i = 0; i + 1 < n; ++i) {
    DecisionExample ex;
    ex.episode_id = episode.episode_id;
    ex.position = static_cast<std::size_t>(i);
    for (std::ptrdiff_t j = 0; j < tt; ++j) {
      ex.prev_sentences.push_back(sentence_at(i - (tt - 1) + j));
      ex.next_sentences.push_back(sentence_at(i + tt - j));
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<DecisionExample> extract_examples(const Episode& episode, std::size_t t) {
  auto out = extract_windows(episode, t);
  for (auto& ex : out) {
    const auto& a = episode.utterances[ex.position].speaker_id;
    const auto& b = episode.utterances[ex.position + 1].speaker_id;
    ex.label = a != b ? Label::change : Label::no_change;
  }
  return out;
}

std::vector<DecisionExample> extract_examples(std::span<const Episode> episodes, std::size_t t) {
  std::vector<DecisionExample> out;
  for (const auto& ep : episodes) {
    auto part = extract_examples(ep, t);
    std::move(part.begin(), part.end(), std::back_inserter(out));
  }
  return out;
}

double positive_rate(std::span<const DecisionExample> examples) {
  if (examples.empty()) return 0.0;
  auto pos = std::count_if(examples.begin(), examples.end(), [](const auto& e) { return e.label == Label::change; });
  return static_cast<double>(pos) / static_cast<double>(examples.size());
}

}  // namespace scd::corpus
