// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "scd/metrics.hpp"
#include "test_util.hpp"

namespace {

using namespace scd;
using corpus::Label;
using metrics::Prediction;

constexpr Label Y = Label::change;
constexpr Label N = Label::no_change;

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

TEST(F1, HarmonicMeanOfReportedPair) {
  EXPECT_NEAR(metrics::f1_score(0.815, 0.756), 0.784, 0.0005);
  EXPECT_EQ(metrics::f1_score(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(metrics::f1_score(1.0, 1.0), 1.0);
}

TEST(Evaluate, AllCorrect) {
  const std::vector<Prediction> p{{0.9, Y}, {0.1, N}, {0.5, Y}};
  const auto r = metrics::evaluate(p);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.precision, 1.0);
  EXPECT_EQ(r.recall, 1.0);
  EXPECT_EQ(r.f1, 1.0);
}

TEST(Evaluate, NoPredictedPositivesGivesZeroPrecision) {
  const std::vector<Label> pred{N, N, N};
  const std::vector<Label> gold{Y, N, Y};
  const auto r = metrics::evaluate(pred, gold);
  EXPECT_EQ(r.precision, 0.0);
  EXPECT_EQ(r.recall, 0.0);
  EXPECT_EQ(r.f1, 0.0);
  EXPECT_EQ(r.fn, 2u);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0 / 3.0);
}

TEST(Evaluate, ThresholdIsInclusiveHalf) {
  EXPECT_EQ(metrics::decide(0.5), Y);
  EXPECT_EQ(metrics::decide(0.4999999), N);
}

TEST(Evaluate, RejectsEmptyAndMisaligned) {
  EXPECT_THROW(metrics::evaluate(std::vector<Prediction>{}), std::invalid_argument);
  EXPECT_THROW(metrics::evaluate(std::vector<Label>{Y}, std::vector<Label>{Y, N}), std::invalid_argument);
}

TEST(Evaluate, MatchesNaiveRecountOnRandomSets) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 60;
    std::vector<Prediction> preds(n);
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (auto& p : preds) {
      p.p_change = std::uniform_real_distribution<double>(0, 1)(rng);
      p.gold = rng() % 2 ? Y : N;
      const bool pos = p.p_change >= 0.5, g = p.gold == Y;
      tp += pos && g;
      fp += pos && !g;
      tn += !pos && !g;
      fn += !pos && g;
    }
    const auto r = metrics::evaluate(preds);
    ASSERT_EQ(r.tp, tp);
    ASSERT_EQ(r.fp, fp);
    ASSERT_EQ(r.tn, tn);
    ASSERT_EQ(r.fn, fn);
    ASSERT_EQ(r.total(), n);
    const double P = tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
    const double R = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
    ASSERT_EQ(r.accuracy, static_cast<double>(tp + tn) / n);
    ASSERT_EQ(r.precision, P);
    ASSERT_EQ(r.recall, R);
    ASSERT_EQ(r.f1, P + R > 0 ? 2 * P * R / (P + R) : 0.0);
    if (P + R > 0) {
      EXPECT_GE(r.f1, std::min(P, R) - 1e-15);
      EXPECT_LE(r.f1, std::max(P, R) + 1e-15);
    }
  }
}

TEST(Evaluate, SwappingClassesSwapsCountRoles) {
  const std::vector<Label> pred{Y, Y, N, N, Y, N};
  const std::vector<Label> gold{Y, N, N, Y, Y, N};
  auto flip = [](std::vector<Label> v) {
    for (auto& l : v) l = l == Y ? N : Y;
    return v;
  };
  const auto a = metrics::evaluate(pred, gold);
  const auto b = metrics::evaluate(flip(pred), flip(gold));
  EXPECT_EQ(a.tp, b.tn);
  EXPECT_EQ(a.fp, b.fn);
  EXPECT_EQ(a.accuracy, b.accuracy);
}

TEST(MetricsReport, JsonAndTable) {
  const auto r = metrics::from_counts(3, 1, 5, 1);
  const auto j = r.to_json();
  for (const char* key : {"accuracy", "precision", "recall", "f1", "tp", "fp", "tn", "fn"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["tp"], 3);
  EXPECT_DOUBLE_EQ(j["precision"].get<double>(), 0.75);
  const auto table = lines(r.to_table());
  EXPECT_GE(table.size(), 4u);
  EXPECT_NE(r.to_table().find("f1"), std::string::npos);
}

corpus::Episode snippet() {
  return testkit::make_episode(
      "case", {{"crimson", "there 's no question the deficit halts on both sides of the aisles ."},
               {"crimson", "cbo , wall street , everyone will have a say into this , including workers and future retirees ."},
               {"blue", "and your saying it 's both parties ?"},
               {"crimson", "absolutely ."},
               {"peru", "the key , though , is the first six months ."},
               {"peru", "you say it 's not going to get through in these first couple months ."}});
}

TEST(CaseStudy, MarksSingleErrorAtPairFourFive) {
  const std::vector<Label> predicted{N, Y, Y, N, N};
  const auto rows = lines(metrics::render_case_study(snippet(), predicted));
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0], "pair\tutterances\tpredicted\tgold\tcorrect");
  int wrong = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].find("✗") != std::string::npos) {
      ++wrong;
      EXPECT_EQ(rows[i].rfind("4-5\tabsolutely . || the key", 0), 0u) << rows[i];
      EXPECT_NE(rows[i].find("\tNo\tYes (crimson->peru)\t"), std::string::npos);
    }
  }
  EXPECT_EQ(wrong, 1);
}

TEST(CaseStudy, AllCorrectAndDegenerateEpisodes) {
  const std::vector<Label> gold{N, Y, Y, Y, N};
  for (const auto& row : lines(metrics::render_case_study(snippet(), gold)))
    EXPECT_EQ(row.find("✗"), std::string::npos);
  const auto solo = testkit::make_episode("solo", {{"a", "hi"}});
  EXPECT_EQ(lines(metrics::render_case_study(solo, {})).size(), 1u);
  EXPECT_THROW(metrics::render_case_study(snippet(), std::vector<Label>{N}), std::invalid_argument);
}

}  // namespace
