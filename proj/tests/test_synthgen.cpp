// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "scd/synthgen.hpp"

namespace {

using namespace scd;
using synthgen::SynthSpec;

std::string dump(const std::vector<corpus::Episode>& eps) {
  std::ostringstream out;
  corpus::write_transcripts(eps, out);
  return out.str();
}

bool has_marker(const corpus::Utterance& u, const std::string& marker) {
  for (const auto& tok : corpus::tokenize(u.text))
    if (tok == marker) return true;
  return false;
}

TEST(PersonaVocabulary, OverlapControlsSharedWords) {
  SynthSpec spec;
  spec.overlap = 0.0;
  auto a = synthgen::persona_vocabulary(spec, 0), b = synthgen::persona_vocabulary(spec, 1);
  std::set<std::string> sa(a.begin(), a.end());
  for (const auto& w : b) EXPECT_EQ(sa.count(w), 0u) << w;
  EXPECT_EQ(a.size(), spec.persona_vocab);

  spec.overlap = 1.0;
  EXPECT_EQ(synthgen::persona_vocabulary(spec, 0), synthgen::persona_vocabulary(spec, 5));

  spec.overlap = 0.3;
  a = synthgen::persona_vocabulary(spec, 2);
  b = synthgen::persona_vocabulary(spec, 3);
  std::size_t common = 0;
  sa = {a.begin(), a.end()};
  for (const auto& w : b) common += sa.count(w);
  EXPECT_EQ(common, 12u);
}

TEST(Generate, LabelRateTracksChangeProbability) {
  SynthSpec spec;
  spec.overlap = 0.0;
  spec.n_episodes = 600;
  spec.seed = 4;
  std::size_t points = 0, changes = 0;
  for (const auto& ep : synthgen::generate(spec)) {
    for (std::size_t i = 0; i + 1 < ep.utterances.size(); ++i, ++points)
      changes += ep.utterances[i].speaker_id != ep.utterances[i + 1].speaker_id;
  }
  ASSERT_GE(points, 10000u);
  EXPECT_NEAR(static_cast<double>(changes) / points, 0.25, 0.02);
}

TEST(Generate, SameSeedSameBytes) {
  SynthSpec spec;
  spec.n_episodes = 20;
  spec.seed = 99;
  EXPECT_EQ(dump(synthgen::generate(spec)), dump(synthgen::generate(spec)));
  auto other = spec;
  other.seed = 100;
  EXPECT_NE(dump(synthgen::generate(spec)), dump(synthgen::generate(other)));
}

TEST(Generate, RoundTripsThroughParser) {
  SynthSpec spec;
  spec.n_episodes = 15;
  const auto eps = synthgen::generate(spec);
  std::istringstream in(dump(eps));
  EXPECT_EQ(corpus::parse_transcripts(in), eps);
}

TEST(Generate, RespectsBounds) {
  SynthSpec spec;
  spec.n_episodes = 50;
  spec.min_utterances = 3;
  spec.max_utterances = 7;
  spec.min_words = 2;
  spec.max_words = 5;
  spec.n_speakers = 4;
  const auto eps = synthgen::generate(spec);
  ASSERT_EQ(eps.size(), 50u);
  std::set<std::string> ids;
  for (const auto& ep : eps) {
    EXPECT_TRUE(ids.insert(ep.episode_id).second);
    EXPECT_GE(ep.utterances.size(), 3u);
    EXPECT_LE(ep.utterances.size(), 7u);
    std::set<std::string> speakers;
    for (const auto& u : ep.utterances) {
      const auto n = corpus::tokenize(u.text).size() - (has_marker(u, spec.marker) ? 1 : 0);
      EXPECT_GE(n, 2u);
      EXPECT_LE(n, 5u);
      speakers.insert(u.speaker_id);
    }
    EXPECT_LE(speakers.size(), 4u);
  }
  EXPECT_EQ(eps.front().episode_id, "synth-00000");
}

TEST(Generate, MarkerSitsTwoUtterancesBeforeEveryChange) {
  SynthSpec spec;
  spec.n_episodes = 40;
  spec.seed = 7;
  for (const auto& ep : synthgen::generate(spec)) {
    const auto& u = ep.utterances;
    for (std::size_t i = 0; i + 1 < u.size(); ++i) {
      const bool change_after = i + 2 < u.size() && u[i + 1].speaker_id != u[i + 2].speaker_id;
      EXPECT_EQ(has_marker(u[i], spec.marker), change_after) << ep.episode_id << " utterance " << i;
    }
    EXPECT_FALSE(has_marker(u.back(), spec.marker));
  }
}

TEST(Generate, SignalOffPlantsNothing) {
  SynthSpec spec;
  spec.n_episodes = 30;
  spec.context_signal = false;
  for (const auto& ep : synthgen::generate(spec))
    for (const auto& u : ep.utterances) EXPECT_FALSE(has_marker(u, spec.marker));
}

TEST(SynthSpec, ValidationAndJson) {
  SynthSpec spec;
  spec.overlap = 0.7;
  spec.marker_rate = 0.5;
  spec.seed = 1234567890123ULL;
  EXPECT_EQ(SynthSpec::from_json(spec.to_json()).to_json(), spec.to_json());
  EXPECT_EQ(SynthSpec::from_json({{"seed", 3}}).n_episodes, 200u);
  for (auto mutate : std::vector<void (*)(SynthSpec&)>{
           [](SynthSpec& s) { s.change_prob = 0.0; }, [](SynthSpec& s) { s.change_prob = 1.0; },
           [](SynthSpec& s) { s.overlap = 1.5; }, [](SynthSpec& s) { s.n_speakers = 1; },
           [](SynthSpec& s) { s.n_speakers = 13; }, [](SynthSpec& s) { s.min_utterances = 1; },
           [](SynthSpec& s) { s.min_words = 11; }, [](SynthSpec& s) { s.n_episodes = 0; }}) {
    SynthSpec bad;
    mutate(bad);
    EXPECT_THROW(bad.validate(), std::invalid_argument);
  }
}

}  // namespace
