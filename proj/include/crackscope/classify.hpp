#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "crackscope/dataset.hpp"
#include "crackscope/raster.hpp"

namespace crackscope {

// Binary class probabilities; probP + probN == 1.
struct Prediction {
  double probP = 0.0;
  double probN = 1.0;

  // Ties go to P: in screening, a false positive is cheaper than a miss.
  Label label() const { return probP >= probN ? Label::P : Label::N; }
};

// Otsu threshold: the split k in [0, 255] (classes <= k and > k) maximizing
// between-class variance. Comparisons use exact integer arithmetic so the
// result matches exhaustive search bit-for-bit; tied maximizers are resolved
// to the floor of their average. A constant histogram yields that intensity.
int otsu_threshold(const std::array<std::uint64_t, 256>& histogram);

struct AdtParams {
  // Minimum count of pixels below the Otsu threshold to call a tile cracked.
  // The literal rule (1) scores near chance on noisy surfaces; exposed so
  // callers can tighten it.
  std::uint64_t thetaPix = 1;
};

// Adaptive-threshold baseline: grayscale, Otsu, count pixels strictly below
// the threshold; P when the count reaches thetaPix. Constant tiles are N.
Prediction adt_classify(const Raster& tile, const AdtParams& params = {});

using TileClassifier = std::function<Prediction(const Raster&)>;

struct PredictionRow {
  std::size_t recordIndex = 0;
  double probP = 0.0;
  double probN = 1.0;
  Label label = Label::N;
};

// Classifies every record of the manifest; rows keep the manifest order.
// jobs > 1 fans records out to worker threads (classifiers are pure).
std::vector<PredictionRow> predict_dataset(const TileClassifier& classifier,
                                           const DatasetManifest& manifest, int jobs = 1);

// Tab-separated (recordIndex, probP, probN, label), one header line.
std::string format_predictions(const std::vector<PredictionRow>& rows);
std::vector<PredictionRow> parse_predictions(const std::string& text);

}  // namespace crackscope
