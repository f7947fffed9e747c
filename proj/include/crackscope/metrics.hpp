#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "crackscope/classify.hpp"
#include "crackscope/dataset.hpp"

namespace crackscope {

struct ConfusionMatrix {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::uint64_t total() const { return tp + fp + tn + fn; }
};

// Zero-denominator ratios are absent, never reported as 0. Two recall
// conventions are carried: the usual TP/(TP+FN) and the negative-predictive
// TN/(TN+FN) variant, each with its matching F1.
struct MetricsReport {
  double accuracy = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;     // TP / (TP + FN)
  std::optional<double> recallNpv;  // TN / (TN + FN)
  std::optional<double> f1;
  std::optional<double> f1Npv;
};

struct RocCurve {
  std::vector<double> thresholds;  // descending; sentinels beyond both ends
  std::vector<double> fpr;         // non-decreasing, starts 0 ends 1
  std::vector<double> tpr;
  double auc = 0.0;
};

ConfusionMatrix confusion(const std::vector<Label>& predicted,
                          const std::vector<Label>& actual);
ConfusionMatrix confusion(const std::vector<PredictionRow>& rows,
                          const std::vector<Label>& actual);

MetricsReport report(const ConfusionMatrix& cm);

// Macro average over both class views (P-as-positive and N-as-positive);
// a metric is absent if it is absent for either view.
MetricsReport report_macro(const ConfusionMatrix& cm);

// Threshold sweep over the unique scores (score >= T predicts positive) plus
// sentinels beyond both extremes; AUC by the trapezoidal rule over the
// staircase, accumulated in integers so it is exact.
RocCurve roc(const std::vector<double>& scores, const std::vector<Label>& labels);

// Rank-based AUC: (P-above-N pairs + half ties) / (|P|*|N|). Independent of
// the sweep; equals RocCurve::auc exactly.
double auc_mann_whitney(const std::vector<double>& scores, const std::vector<Label>& labels);

std::string format_report_text(const MetricsReport& r);
std::string format_report_json(const MetricsReport& r);
// CSV (threshold, FPR, TPR) rows plus a trailing "# auc,<value>" line.
std::string format_roc_csv(const RocCurve& curve);

}  // namespace crackscope
