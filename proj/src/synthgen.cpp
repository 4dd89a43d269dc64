// SPDX-License-Identifier: Apache-2.0

#include "scd/synthgen.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

namespace scd::synthgen {

using nlohmann::json;

void SynthSpec::validate() const {
  if (n_episodes == 0) throw std::invalid_argument("n_episodes must be positive");
  if (min_utterances < 2 || min_utterances > max_utterances) {
    throw std::invalid_argument("utterance range must satisfy 2 <= min <= max");
  }
  if (min_words < 1 || min_words > max_words) throw std::invalid_argument("word range must satisfy 1 <= min <= max");
  if (n_speakers < 2 || n_speakers > n_personas) {
    throw std::invalid_argument("n_speakers must lie in [2, n_personas]");
  }
  if (persona_vocab == 0) throw std::invalid_argument("persona_vocab must be positive");
  if (!(overlap >= 0.0 && overlap <= 1.0)) throw std::invalid_argument("overlap must lie in [0,1]");
  if (!(marker_rate >= 0.0 && marker_rate <= 1.0)) throw std::invalid_argument("marker_rate must lie in [0,1]");
  if (!(change_prob > 0.0 && change_prob < 1.0)) throw std::invalid_argument("change_prob must lie in (0,1)");
  if (marker.empty()) throw std::invalid_argument("marker must be a non-empty word");
}

json SynthSpec::to_json() const {
  return json{{"n_episodes", n_episodes},
              {"min_utterances", min_utterances},
              {"max_utterances", max_utterances},
              {"min_words", min_words},
              {"max_words", max_words},
              {"n_speakers", n_speakers},
              {"n_personas", n_personas},
              {"persona_vocab", persona_vocab},
              {"overlap", overlap},
              {"context_signal", context_signal},
              {"marker_rate", marker_rate},
              {"marker", marker},
              {"change_prob", change_prob},
              {"seed", seed}};
}

SynthSpec SynthSpec::from_json(const json& j) {
  SynthSpec s;
  s.n_episodes = j.value("n_episodes", s.n_episodes);
  s.min_utterances = j.value("min_utterances", s.min_utterances);
  s.max_utterances = j.value("max_utterances", s.max_utterances);
  s.min_words = j.value("min_words", s.min_words);
  s.max_words = j.value("max_words", s.max_words);
  s.n_speakers = j.value("n_speakers", s.n_speakers);
  s.n_personas = j.value("n_personas", s.n_personas);
  s.persona_vocab = j.value("persona_vocab", s.persona_vocab);
  s.overlap = j.value("overlap", s.overlap);
  s.context_signal = j.value("context_signal", s.context_signal);
  s.marker_rate = j.value("marker_rate", s.marker_rate);
  s.marker = j.value("marker", s.marker);
  s.change_prob = j.value("change_prob", s.change_prob);
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

namespace {

std::size_t shared_words(const SynthSpec& spec) {
  return static_cast<std::size_t>(std::llround(spec.overlap * static_cast<double>(spec.persona_vocab)));
}

std::string persona_name(std::size_t persona) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "p%02zu", persona);
  return buf;
}

}  // namespace

std::vector<std::string> persona_vocabulary(const SynthSpec& spec, std::size_t persona) {
  const std::size_t shared = shared_words(spec);
  std::vector<std::string> words;
  words.reserve(spec.persona_vocab);
  for (std::size_t k = 0; k < shared; ++k) words.push_back("c" + std::to_string(k));
  for (std::size_t k = shared; k < spec.persona_vocab; ++k) {
    words.push_back(persona_name(persona) + "w" + std::to_string(k - shared));
  }
  return words;
}

std::vector<corpus::Episode> generate(const SynthSpec& spec) {
  spec.validate();
  std::vector<std::vector<std::string>> vocab;
  for (std::size_t p = 0; p < spec.n_personas; ++p) vocab.push_back(persona_vocabulary(spec, p));

  std::vector<corpus::Episode> episodes;
  episodes.reserve(spec.n_episodes);
  for (std::size_t e = 0; e < spec.n_episodes; ++e) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(e)};
    std::mt19937_64 rng(seq);

    std::vector<std::size_t> pool(spec.n_personas);
    for (std::size_t p = 0; p < pool.size(); ++p) pool[p] = p;
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(spec.n_speakers);

    const std::size_t n_utt =
        std::uniform_int_distribution<std::size_t>(spec.min_utterances, spec.max_utterances)(rng);
    std::vector<std::size_t> speakers(n_utt);
    speakers[0] = std::uniform_int_distribution<std::size_t>(0, spec.n_speakers - 1)(rng);
    std::bernoulli_distribution change(spec.change_prob);
    for (std::size_t i = 1; i < n_utt; ++i) {
      speakers[i] = speakers[i - 1];
      if (change(rng)) {
        const auto step = std::uniform_int_distribution<std::size_t>(1, spec.n_speakers - 1)(rng);
        speakers[i] = (speakers[i - 1] + step) % spec.n_speakers;
      }
    }

    std::vector<std::vector<std::string>> words(n_utt);
    std::uniform_int_distribution<std::size_t> length(spec.min_words, spec.max_words);
    std::uniform_int_distribution<std::size_t> pick(0, spec.persona_vocab - 1);
    for (std::size_t i = 0; i < n_utt; ++i) {
      const auto& v = vocab[pool[speakers[i]]];
      const std::size_t len = length(rng);
      for (std::size_t w = 0; w < len; ++w) words[i].push_back(v[pick(rng)]);
    }

    if (spec.context_signal) {
      std::bernoulli_distribution plant(spec.marker_rate);
      // Change at decision i is between utterances i and i+1; the marker
      // goes into utterance i−1.
      for (std::size_t i = 1; i + 1 < n_utt; ++i) {
        if (speakers[i] == speakers[i + 1] || !plant(rng)) continue;
        auto& target = words[i - 1];
        const auto at = std::uniform_int_distribution<std::size_t>(0, target.size())(rng);
        target.insert(target.begin() + static_cast<std::ptrdiff_t>(at), spec.marker);
      }
    }

    corpus::Episode ep;
    char id[32];
    std::snprintf(id, sizeof id, "synth-%05zu", e);
    ep.episode_id = id;
    for (std::size_t i = 0; i < n_utt; ++i) {
      corpus::Utterance u;
      u.speaker_id = persona_name(pool[speakers[i]]);
      for (std::size_t w = 0; w < words[i].size(); ++w) {
        if (w) u.text += ' ';
        u.text += words[i][w];
      }
      ep.utterances.push_back(std::move(u));
    }
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

}  // namespace scd::synthgen
