#include "crackscope/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "crackscope/error.hpp"

namespace crackscope {

ConfusionMatrix confusion(const std::vector<Label>& predicted, const std::vector<Label>& actual) {
  if (predicted.size() != actual.size())
    throw DataError("confusion: " + std::to_string(predicted.size()) + " predictions vs " +
                    std::to_string(actual.size()) + " labels");
  if (predicted.empty()) throw DataError("confusion: empty input");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (actual[i] == Label::P)
      ++(predicted[i] == Label::P ? cm.tp : cm.fn);
    else
      ++(predicted[i] == Label::P ? cm.fp : cm.tn);
  }
  return cm;
}

ConfusionMatrix confusion(const std::vector<PredictionRow>& rows,
                          const std::vector<Label>& actual) {
  std::vector<Label> predicted;
  predicted.reserve(rows.size());
  for (const auto& r : rows) predicted.push_back(r.label);
  return confusion(predicted, actual);
}

MetricsReport report(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw DataError("report: empty confusion matrix");
  auto ratio = [](std::uint64_t num, std::uint64_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  MetricsReport r;
  r.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  r.precision = ratio(cm.tp, cm.tp + cm.fp);
  r.recall = ratio(cm.tp, cm.tp + cm.fn);
  r.recallNpv = ratio(cm.tn, cm.tn + cm.fn);
  auto f1_of = [&](std::optional<double> rec) -> std::optional<double> {
    if (!r.precision || !rec) return std::nullopt;
    const double s = *r.precision + *rec;
    if (s == 0.0) return std::nullopt;
    return 2.0 * *r.precision * *rec / s;
  };
  r.f1 = f1_of(r.recall);
  r.f1Npv = f1_of(r.recallNpv);
  return r;
}

MetricsReport report_macro(const ConfusionMatrix& cm) {
  const MetricsReport asP = report(cm);
  const MetricsReport asN = report(ConfusionMatrix{cm.tn, cm.fn, cm.tp, cm.fp});
  auto mean = [](const std::optional<double>& a,
                 const std::optional<double>& b) -> std::optional<double> {
    if (!a || !b) return std::nullopt;
    return (*a + *b) / 2.0;
  };
  MetricsReport out;
  out.accuracy = asP.accuracy;  // symmetric
  out.precision = mean(asP.precision, asN.precision);
  out.recall = mean(asP.recall, asN.recall);
  out.recallNpv = mean(asP.recallNpv, asN.recallNpv);
  out.f1 = mean(asP.f1, asN.f1);
  out.f1Npv = mean(asP.f1Npv, asN.f1Npv);
  return out;
}

RocCurve roc(const std::vector<double>& scores, const std::vector<Label>& labels) {
  if (scores.size() != labels.size()) throw DataError("roc: scores/labels length mismatch");
  std::uint64_t nP = 0, nN = 0;
  for (Label l : labels) (l == Label::P ? nP : nN)++;
  if (nP == 0 || nN == 0) throw DataError("roc: both classes must be present");

  // Per unique score (descending): counts of positives / negatives at it.
  std::map<double, std::pair<std::uint64_t, std::uint64_t>, std::greater<double>> byScore;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw DataError("roc: non-finite score");
    auto& e = byScore[scores[i]];
    (labels[i] == Label::P ? e.first : e.second)++;
  }

  RocCurve curve;
  curve.thresholds.reserve(byScore.size() + 2);
  curve.fpr.reserve(byScore.size() + 2);
  curve.tpr.reserve(byScore.size() + 2);

  std::uint64_t tpc = 0, fpc = 0;
  std::uint64_t trapezoidTwice = 0;  // sum of dFP*(TP_before + TP_after)
  auto push = [&](double threshold) {
    curve.thresholds.push_back(threshold);
    curve.fpr.push_back(static_cast<double>(fpc) / static_cast<double>(nN));
    curve.tpr.push_back(static_cast<double>(tpc) / static_cast<double>(nP));
  };

  push(byScore.begin()->first + 1.0);  // sentinel above max: nothing predicted P
  for (const auto& [score, counts] : byScore) {
    const std::uint64_t tpBefore = tpc;
    tpc += counts.first;
    trapezoidTwice += counts.second * (tpBefore + tpc);
    fpc += counts.second;
    push(score);
  }
  push(curve.thresholds.back() - 1.0);  // sentinel below min: everything P

  curve.auc = static_cast<double>(trapezoidTwice) / (2.0 * static_cast<double>(nP) *
                                                     static_cast<double>(nN));
  return curve;
}

double auc_mann_whitney(const std::vector<double>& scores, const std::vector<Label>& labels) {
  if (scores.size() != labels.size())
    throw DataError("auc_mann_whitney: scores/labels length mismatch");
  std::uint64_t nP = 0, nN = 0;
  for (Label l : labels) (l == Label::P ? nP : nN)++;
  if (nP == 0 || nN == 0) throw DataError("auc_mann_whitney: both classes must be present");

  std::map<double, std::pair<std::uint64_t, std::uint64_t>> byScore;  // ascending
  for (std::size_t i = 0; i < scores.size(); ++i) {
    auto& e = byScore[scores[i]];
    (labels[i] == Label::P ? e.first : e.second)++;
  }
  std::uint64_t uTwice = 0;  // 2*(P-above-N pairs) + ties
  std::uint64_t negBelow = 0;
  for (const auto& [score, counts] : byScore) {
    uTwice += counts.first * (2 * negBelow + counts.second);
    negBelow += counts.second;
  }
  return static_cast<double>(uTwice) /
         (2.0 * static_cast<double>(nP) * static_cast<double>(nN));
}

namespace {

std::string opt_str(const std::optional<double>& v) {
  if (!v) return "absent";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", *v);
  return buf;
}

}  // namespace

std::string format_report_text(const MetricsReport& r) {
  std::string out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "accuracy: %.10g\n", r.accuracy);
  out += buf;
  out += "precision: " + opt_str(r.precision) + "\n";
  out += "recall: " + opt_str(r.recall) + "\n";
  out += "recall_npv: " + opt_str(r.recallNpv) + "\n";
  out += "f1: " + opt_str(r.f1) + "\n";
  out += "f1_npv: " + opt_str(r.f1Npv) + "\n";
  return out;
}

std::string format_report_json(const MetricsReport& r) {
  auto field = [](const char* name, const std::optional<double>& v) {
    std::string s = std::string("  \"") + name + "\": ";
    if (!v) return s + "null";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return s + buf;
  };
  std::string out = "{\n";
  out += field("accuracy", r.accuracy) + ",\n";
  out += field("precision", r.precision) + ",\n";
  out += field("recall", r.recall) + ",\n";
  out += field("recall_npv", r.recallNpv) + ",\n";
  out += field("f1", r.f1) + ",\n";
  out += field("f1_npv", r.f1Npv) + "\n";
  out += "}\n";
  return out;
}

std::string format_roc_csv(const RocCurve& curve) {
  std::string out = "threshold,fpr,tpr\n";
  char buf[96];
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g\n", curve.thresholds[i], curve.fpr[i],
                  curve.tpr[i]);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "# auc,%.10g\n", curve.auc);
  out += buf;
  return out;
}

}  // namespace crackscope
