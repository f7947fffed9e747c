#pragma once

#include <optional>
#include <string>
#include <vector>

#include "crackscope/crackstats.hpp"
#include "crackscope/dataset.hpp"
#include "crackscope/raster.hpp"
#include "crackscope/rng.hpp"

namespace crackscope {

struct CrackPlanEntry {
  double positionAlongAxisPx = 0.0;  // centerline position along the loading axis
  double onsetStrain = 0.0;          // crack appears once the schedule reaches this
  double maxOpeningUm = 60.0;        // opening (and rendered darkness) once active
  double wavinessPx = 6.0;           // centerline sine amplitude
};

// Everything needed to render a deterministic synthetic specimen sequence
// with known crack geometry. Ground truth is exact by construction, which is
// what the end-to-end recovery checks measure against.
struct SpecimenSpec {
  int widthPx = 681;
  int heightPx = 1362;
  double mmPerPixel = 0.05;
  Axis loadingAxis = Axis::Y;  // cracks render transverse to this
  double backgroundMean = 180.0;
  double backgroundNoiseStd = 6.0;
  double speckleDensity = 0.0;  // fraction of surface under paint speckles
  int window = 227;
  std::vector<CrackPlanEntry> crackPlan;
  std::vector<double> strainSchedule;
  Seed seed;
};

struct FrameTruth {
  int activeCrackCount = 0;
  double lvdtDisplacementMm = 0.0;       // sum of active openings
  std::optional<double> acwUm;           // mean active opening
  double cdPerM = 0.0;                   // activeCrackCount / gauge length
  std::vector<CrackPolyline> polylines;  // exact centerlines, frame pixels
  std::vector<std::vector<bool>> windowLabels;  // [row][col], true = P
};

struct SequenceResult {
  std::vector<Raster> frames;
  std::vector<FrameMeta> meta;
  std::vector<FrameTruth> truth;
  double gaugeLengthM = 0.0;
};

// One frame per schedule entry. Cracks with onsetStrain <= strain are drawn
// as dark wavy lines; lvdt displacement is the exact sum of their openings.
SequenceResult gen_sequence(const SpecimenSpec& spec);

struct TileTruth {
  bool hasCrack = false;
  double centroidX = 0.0, centroidY = 0.0;  // crack centroid in tile pixels
};

// perClass P tiles (one crack through the central region) and perClass N
// tiles (background only), labels exact, pixels in memory.
DatasetManifest gen_tiles(const SpecimenSpec& spec, std::size_t perClass, Seed seed,
                          std::vector<TileTruth>* truthOut = nullptr);

// Exact classifier for speckle-free synthetic frames: rendered cracks sit far
// below the background noise floor, so "any pixel darker than cutoff" equals
// the planted ground truth as long as crack centerlines keep clear of tile
// borders. The SpecimenSpec overload uses backgroundMean - 8*noiseStd.
TileClassifier darkness_classifier(double intensityCutoff, std::uint64_t minPixels = 1);
TileClassifier darkness_classifier(const SpecimenSpec& spec);

std::string format_truth_json(const SequenceResult& result);

}  // namespace crackscope
