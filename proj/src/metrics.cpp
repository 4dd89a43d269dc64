// SPDX-License-Identifier: Apache-2.0

#include "scd/metrics.hpp"

#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace scd::metrics {

using corpus::Label;

double f1_score(double precision, double recall) {
  const double denom = precision + recall;
  return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

MetricsReport from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
  MetricsReport r;
  r.tp = tp;
  r.fp = fp;
  r.tn = tn;
  r.fn = fn;
  const auto d = [](std::size_t x) { return static_cast<double>(x); };
  const std::size_t total = tp + fp + tn + fn;
  r.accuracy = total ? d(tp + tn) / d(total) : 0.0;
  r.precision = tp + fp ? d(tp) / d(tp + fp) : 0.0;
  r.recall = tp + fn ? d(tp) / d(tp + fn) : 0.0;
  r.f1 = f1_score(r.precision, r.recall);
  return r;
}

namespace {

struct Counts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  void add(Label predicted, Label gold) {
    const bool p = predicted == Label::change;
    const bool g = gold == Label::change;
    if (p && g) ++tp;
    else if (p) ++fp;
    else if (g) ++fn;
    else ++tn;
  }
};

}  // namespace

MetricsReport evaluate(std::span<const Prediction> predictions) {
  if (predictions.empty()) throw std::invalid_argument("evaluate: no predictions");
  Counts c;
  for (const auto& p : predictions) c.add(decide(p.p_change), p.gold);
  return from_counts(c.tp, c.fp, c.tn, c.fn);
}

MetricsReport evaluate(std::span<const Label> predicted, std::span<const Label> gold) {
  if (predicted.empty()) throw std::invalid_argument("evaluate: no predictions");
  if (predicted.size() != gold.size()) {
    throw std::invalid_argument("evaluate: " + std::to_string(predicted.size()) + " predictions for " +
                                std::to_string(gold.size()) + " gold labels");
  }
  Counts c;
  for (std::size_t i = 0; i < predicted.size(); ++i) c.add(predicted[i], gold[i]);
  return from_counts(c.tp, c.fp, c.tn, c.fn);
}

nlohmann::json MetricsReport::to_json() const {
  return {{"accuracy", accuracy}, {"precision", precision}, {"recall", recall}, {"f1", f1},
          {"tp", tp},             {"fp", fp},               {"tn", tn},         {"fn", fn}};
}

std::string MetricsReport::to_table() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  auto row = [&out](const char* name, auto value) { out << std::left << std::setw(10) << name << value << '\n'; };
  row("accuracy", accuracy);
  row("precision", precision);
  row("recall", recall);
  row("f1", f1);
  row("tp", tp);
  row("fp", fp);
  row("tn", tn);
  row("fn", fn);
  return out.str();
}

std::string render_case_study(const corpus::Episode& episode, std::span<const Label> predicted) {
  const std::size_t points = episode.utterances.size() > 0 ? episode.utterances.size() - 1 : 0;
  if (predicted.size() != points) {
    throw std::invalid_argument("case study: " + std::to_string(predicted.size()) + " predictions for " +
                                std::to_string(points) + " decision points");
  }
  auto yes_no = [](Label l) { return l == Label::change ? "Yes" : "No"; };
  std::ostringstream out;
  out << "pair\tutterances\tpredicted\tgold\tcorrect\n";
  for (std::size_t i = 0; i < points; ++i) {
    const auto& a = episode.utterances[i];
    const auto& b = episode.utterances[i + 1];
    const Label gold = a.speaker_id != b.speaker_id ? Label::change : Label::no_change;
    out << i + 1 << '-' << i + 2 << '\t' << a.text << " || " << b.text << '\t' << yes_no(predicted[i]) << '\t'
        << yes_no(gold) << " (" << a.speaker_id << "->" << b.speaker_id << ")\t"
        << (predicted[i] == gold ? "✓" : "✗") << '\n';
  }
  return out.str();
}

}  // namespace scd::metrics
