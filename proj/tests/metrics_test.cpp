#include "crackscope/metrics.hpp"

#include <cmath>

#include "doctest.h"

#include "crackscope/error.hpp"
#include "support.hpp"

using namespace crackscope;

TEST_CASE("confusion counts") {
  std::vector<Label> actual, predicted;
  for (int i = 0; i < 10; ++i) {
    actual.push_back(Label::P);
    predicted.push_back(Label::P);
  }
  for (int i = 0; i < 10; ++i) {
    actual.push_back(Label::N);
    predicted.push_back(Label::N);
  }
  const ConfusionMatrix perfect = confusion(predicted, actual);
  CHECK(perfect.tp == 10);
  CHECK(perfect.fp == 0);
  CHECK(perfect.tn == 10);
  CHECK(perfect.fn == 0);

  const ConfusionMatrix allP = confusion(std::vector<Label>(20, Label::P), actual);
  CHECK(allP.tp == 10);
  CHECK(allP.fp == 10);
  CHECK(allP.tn == 0);
  CHECK(allP.fn == 0);

  CHECK_THROWS_AS(confusion(std::vector<Label>{}, std::vector<Label>{}), DataError);
  CHECK_THROWS_AS(confusion(std::vector<Label>{Label::P}, actual), DataError);
}

TEST_CASE("report evaluates both recall conventions") {
  const MetricsReport r = report(ConfusionMatrix{50, 5, 40, 5});
  CHECK(r.accuracy == doctest::Approx(0.90));
  CHECK(*r.recall == doctest::Approx(50.0 / 55.0));
  CHECK(*r.recallNpv == doctest::Approx(40.0 / 45.0));
  CHECK(*r.precision == doctest::Approx(50.0 / 55.0));

  // zero denominators stay absent
  const MetricsReport none = report(ConfusionMatrix{0, 0, 10, 0});
  CHECK(!none.precision.has_value());
  CHECK(!none.recall.has_value());
  CHECK(none.accuracy == doctest::Approx(1.0));

  // integer identity
  const ConfusionMatrix cm{7, 3, 11, 2};
  const MetricsReport rep = report(cm);
  CHECK(std::llround(rep.accuracy * static_cast<double>(cm.total())) ==
        static_cast<long long>(cm.tp + cm.tn));
}

TEST_CASE("macro report averages both class views") {
  const ConfusionMatrix cm{50, 5, 40, 5};
  const MetricsReport macro = report_macro(cm);
  CHECK(macro.accuracy == doctest::Approx(0.90));
  // precision averaged over P-positive (50/55) and N-positive (40/45) views
  CHECK(*macro.precision == doctest::Approx((50.0 / 55.0 + 40.0 / 45.0) / 2.0));
  CHECK(*macro.recall == doctest::Approx((50.0 / 55.0 + 40.0 / 45.0) / 2.0));

  // absent in one view stays absent
  const MetricsReport oneSided = report_macro(ConfusionMatrix{0, 0, 10, 0});
  CHECK(!oneSided.precision.has_value());
}

TEST_CASE("roc endpoints and degenerate shapes") {
  // perfect separation
  std::vector<double> scores{0.9, 0.8, 0.7, 0.2, 0.1};
  std::vector<Label> labels{Label::P, Label::P, Label::P, Label::N, Label::N};
  const RocCurve perfect = roc(scores, labels);
  CHECK(perfect.auc == 1.0);
  CHECK(perfect.fpr.front() == 0.0);
  CHECK(perfect.tpr.front() == 0.0);
  CHECK(perfect.fpr.back() == 1.0);
  CHECK(perfect.tpr.back() == 1.0);
  for (std::size_t i = 1; i < perfect.fpr.size(); ++i)
    CHECK(perfect.fpr[i] >= perfect.fpr[i - 1]);

  // identical scores
  const RocCurve flat = roc({0.5, 0.5, 0.5, 0.5}, {Label::P, Label::N, Label::P, Label::N});
  CHECK(flat.auc == 0.5);

  CHECK_THROWS_AS(roc({0.1, 0.2}, {Label::P, Label::P}), DataError);
}

TEST_CASE("trapezoid AUC equals the rank statistic exactly") {
  Rng rng(Seed{314});
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<double> scores;
    std::vector<Label> labels;
    const int n = 50 + static_cast<int>(rng.next_below(100));
    for (int i = 0; i < n; ++i) {
      // coarse quantization forces plenty of ties
      scores.push_back(std::floor(rng.next_unit() * 8.0) / 8.0);
      labels.push_back(rng.next_bool() ? Label::P : Label::N);
    }
    std::size_t p = 0;
    for (Label l : labels) p += l == Label::P;
    if (p == 0 || p == labels.size()) continue;
    CHECK(roc(scores, labels).auc == auc_mann_whitney(scores, labels));
  }
}

TEST_CASE("auc invariances") {
  Rng rng(Seed{271});
  std::vector<double> scores;
  std::vector<Label> labels;
  for (int i = 0; i < 200; ++i) {
    scores.push_back(rng.next_gauss() + (i % 2 == 0 ? 1.0 : 0.0));
    labels.push_back(i % 2 == 0 ? Label::P : Label::N);
  }
  const double base = roc(scores, labels).auc;

  // strictly increasing transform
  std::vector<double> warped = scores;
  for (double& s : warped) s = std::exp(0.7 * s) + 3.0;
  CHECK(roc(warped, labels).auc == base);

  // label swap mirrors the statistic
  std::vector<Label> swapped = labels;
  for (Label& l : swapped) l = l == Label::P ? Label::N : Label::P;
  CHECK(roc(scores, swapped).auc == doctest::Approx(1.0 - base).epsilon(1e-12));
}

TEST_CASE("gaussian separation reproduces the closed-form AUC") {
  Rng rng(Seed{161803});
  std::vector<double> scores;
  std::vector<Label> labels;
  for (int i = 0; i < 100000; ++i) {
    const bool positive = i % 2 == 0;
    scores.push_back(rng.next_gauss() + (positive ? 2.0 : 0.0));
    labels.push_back(positive ? Label::P : Label::N);
  }
  // Phi(2 / sqrt(2)) = 0.92135
  const double expected = 0.5 * std::erfc(-2.0 / (std::sqrt(2.0) * std::sqrt(2.0)));
  CHECK(roc(scores, labels).auc == doctest::Approx(expected).epsilon(0.011));
}

TEST_CASE("report formatting carries absent markers") {
  const MetricsReport none = report(ConfusionMatrix{0, 0, 10, 0});
  const std::string text = format_report_text(none);
  CHECK(text.find("precision: absent") != std::string::npos);
  const std::string json = format_report_json(none);
  CHECK(json.find("\"precision\": null") != std::string::npos);

  const RocCurve flat = roc({0.5, 0.5}, {Label::P, Label::N});
  const std::string csv = format_roc_csv(flat);
  CHECK(csv.rfind("threshold,fpr,tpr\n", 0) == 0);
  CHECK(csv.find("# auc,0.5") != std::string::npos);
}
