#include "crackscope/synthgen.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "crackscope/error.hpp"

namespace crackscope {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Substream tags; geometry never shares a stream with surface texture so
// speckle settings cannot shift crack placement.
constexpr std::uint64_t kSurfaceStream = 0;
constexpr std::uint64_t kCrackStreamBase = 1;
constexpr std::uint64_t kFrameNoiseBase = 0x10000;
constexpr std::uint64_t kTileStreamBase = 0x100000;

struct CrackGeometry {
  double position = 0.0;
  double amplitude = 0.0;
  double period = 0.0;
  double phase = 0.0;
  double openingUm = 0.0;

  double centerline(double sweep) const {
    return position + amplitude * std::sin(kTwoPi * sweep / period + phase);
  }
};

struct SurfaceTexture {
  double mottleAmp = 0.0;
  double mottleWaveX = 1.0, mottleWaveY = 1.0;
  double mottlePhaseX = 0.0, mottlePhaseY = 0.0;
  struct Speckle {
    int x, y, radius;
    std::uint8_t darkness;
  };
  std::vector<Speckle> speckles;
};

SurfaceTexture make_surface(const SpecimenSpec& spec, int w, int h, Rng rng) {
  SurfaceTexture tex;
  tex.mottleAmp = spec.backgroundNoiseStd * 0.8;
  tex.mottleWaveX = rng.next_range(w / 3.0, w * 1.5);
  tex.mottleWaveY = rng.next_range(h / 3.0, h * 1.5);
  tex.mottlePhaseX = rng.next_range(0.0, kTwoPi);
  tex.mottlePhaseY = rng.next_range(0.0, kTwoPi);
  if (spec.speckleDensity > 0.0) {
    // Discs of radius 1-2 px; count chosen so covered area matches density.
    const double avgArea = 7.0;
    const std::size_t count = static_cast<std::size_t>(
        spec.speckleDensity * static_cast<double>(w) * h / avgArea);
    tex.speckles.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      SurfaceTexture::Speckle s;
      s.x = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(w)));
      s.y = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(h)));
      s.radius = 1 + static_cast<int>(rng.next_below(2));
      s.darkness = static_cast<std::uint8_t>(20 + rng.next_below(40));
      tex.speckles.push_back(s);
    }
  }
  return tex;
}

CrackGeometry make_geometry(const CrackPlanEntry& plan, Rng rng) {
  CrackGeometry g;
  g.position = plan.positionAlongAxisPx;
  g.amplitude = plan.wavinessPx;
  g.period = rng.next_range(80.0, 160.0);
  g.phase = rng.next_range(0.0, kTwoPi);
  g.openingUm = plan.maxOpeningUm;
  return g;
}

// Crack cross-section: multiplicative Gaussian dip around the centerline.
// Depth saturates at 90% once the opening reaches 40 um so thin early cracks
// render fainter.
void draw_crack(Raster& frame, const CrackGeometry& g, Axis loadingAxis, double mmPerPixel) {
  const double widthPx = std::max(0.7, g.openingUm / 1000.0 / mmPerPixel / 2.0);
  const double depth = 0.9 * std::min(1.0, g.openingUm / 40.0);
  const int reach = static_cast<int>(std::ceil(3.0 * widthPx)) + 1;
  const int sweepExtent = loadingAxis == Axis::Y ? frame.width : frame.height;
  const int crossExtent = loadingAxis == Axis::Y ? frame.height : frame.width;
  for (int s = 0; s < sweepExtent; ++s) {
    const double center = g.centerline(s);
    const int lo = std::max(0, static_cast<int>(std::floor(center)) - reach);
    const int hi = std::min(crossExtent - 1, static_cast<int>(std::ceil(center)) + reach);
    for (int t = lo; t <= hi; ++t) {
      const double d = t - center;
      const double factor = 1.0 - depth * std::exp(-d * d / (2.0 * widthPx * widthPx));
      std::uint8_t& px = loadingAxis == Axis::Y ? frame.at(s, t) : frame.at(t, s);
      px = clamp_u8(px * factor);
    }
  }
}

Raster render_background(const SpecimenSpec& spec, int w, int h, const SurfaceTexture& tex,
                         Rng& noise) {
  Raster frame(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double mottle =
          tex.mottleAmp * (std::cos(kTwoPi * x / tex.mottleWaveX + tex.mottlePhaseX) +
                           std::cos(kTwoPi * y / tex.mottleWaveY + tex.mottlePhaseY)) /
          2.0;
      frame.at(x, y) =
          clamp_u8(spec.backgroundMean + mottle + spec.backgroundNoiseStd * noise.next_gauss());
    }
  for (const auto& s : tex.speckles) {
    for (int dy = -s.radius; dy <= s.radius; ++dy)
      for (int dx = -s.radius; dx <= s.radius; ++dx) {
        if (dx * dx + dy * dy > s.radius * s.radius) continue;
        const int x = s.x + dx, y = s.y + dy;
        if (x < 0 || x >= w || y < 0 || y >= h) continue;
        frame.at(x, y) = std::min(frame.at(x, y), s.darkness);
      }
  }
  return frame;
}

void validate_spec(const SpecimenSpec& spec) {
  if (spec.widthPx < spec.window || spec.heightPx < spec.window)
    throw DataError("specimen smaller than the classification window");
  if (!(spec.mmPerPixel > 0.0)) throw DataError("mmPerPixel must be positive");
  if (!(spec.backgroundNoiseStd >= 0.0) || spec.backgroundMean < 0 || spec.backgroundMean > 255)
    throw DataError("invalid background parameters");
  std::vector<const CrackPlanEntry*> sorted;
  for (const auto& c : spec.crackPlan) sorted.push_back(&c);
  std::sort(sorted.begin(), sorted.end(), [](const CrackPlanEntry* a, const CrackPlanEntry* b) {
    return a->positionAlongAxisPx < b->positionAlongAxisPx;
  });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    const double gap = sorted[i]->positionAlongAxisPx - sorted[i - 1]->positionAlongAxisPx;
    const double needed = sorted[i]->wavinessPx + sorted[i - 1]->wavinessPx + 8.0;
    if (gap <= needed)
      throw DataError("crack plan entries overlap: positions " +
                      std::to_string(sorted[i - 1]->positionAlongAxisPx) + " and " +
                      std::to_string(sorted[i]->positionAlongAxisPx) + " need a gap > " +
                      std::to_string(needed) + " px");
  }
}

CrackPolyline truth_polyline(const CrackGeometry& g, Axis loadingAxis, int sweepExtent,
                             double mmPerPixel) {
  CrackPolyline line;
  line.points.reserve(static_cast<std::size_t>(sweepExtent));
  for (int s = 0; s < sweepExtent; ++s) {
    const double c = g.centerline(s);
    line.points.push_back(loadingAxis == Axis::Y ? PolyPoint{static_cast<double>(s), c}
                                                 : PolyPoint{c, static_cast<double>(s)});
  }
  double len = 0.0;
  for (std::size_t i = 1; i < line.points.size(); ++i)
    len += std::hypot(line.points[i].x - line.points[i - 1].x,
                      line.points[i].y - line.points[i - 1].y);
  line.lengthPx = len;
  if (mmPerPixel > 0.0) line.lengthMm = len * mmPerPixel;
  return line;
}

}  // namespace

SequenceResult gen_sequence(const SpecimenSpec& spec) {
  validate_spec(spec);
  if (spec.strainSchedule.empty()) throw DataError("gen_sequence: empty strain schedule");

  const int w = spec.widthPx, h = spec.heightPx;
  Rng master(spec.seed);
  const SurfaceTexture surface = make_surface(spec, w, h, master.fork(kSurfaceStream));
  std::vector<CrackGeometry> geometry;
  geometry.reserve(spec.crackPlan.size());
  for (std::size_t i = 0; i < spec.crackPlan.size(); ++i)
    geometry.push_back(make_geometry(spec.crackPlan[i], master.fork(kCrackStreamBase + i)));

  SequenceResult result;
  result.gaugeLengthM = (spec.loadingAxis == Axis::Y ? h : w) * spec.mmPerPixel / 1000.0;
  const int rows = h / spec.window, cols = w / spec.window;
  const int sweepExtent = spec.loadingAxis == Axis::Y ? w : h;

  for (std::size_t f = 0; f < spec.strainSchedule.size(); ++f) {
    const double strain = spec.strainSchedule[f];
    Rng noise = master.fork(kFrameNoiseBase + f);
    Raster frame = render_background(spec, w, h, surface, noise);

    FrameTruth truth;
    truth.windowLabels.assign(static_cast<std::size_t>(rows),
                              std::vector<bool>(static_cast<std::size_t>(cols), false));
    double lvdtUm = 0.0;
    for (std::size_t i = 0; i < geometry.size(); ++i) {
      if (spec.crackPlan[i].onsetStrain > strain) continue;
      draw_crack(frame, geometry[i], spec.loadingAxis, spec.mmPerPixel);
      ++truth.activeCrackCount;
      lvdtUm += geometry[i].openingUm;
      truth.polylines.push_back(
          truth_polyline(geometry[i], spec.loadingAxis, sweepExtent, spec.mmPerPixel));
      for (int s = 0; s < sweepExtent; ++s) {
        const double c = geometry[i].centerline(s);
        const int sweepTile = s / spec.window;
        const int crossTile = static_cast<int>(std::floor(c)) / spec.window;
        const int r = spec.loadingAxis == Axis::Y ? crossTile : sweepTile;
        const int col = spec.loadingAxis == Axis::Y ? sweepTile : crossTile;
        if (r >= 0 && r < rows && col >= 0 && col < cols && c >= 0.0)
          truth.windowLabels[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)] = true;
      }
    }
    truth.lvdtDisplacementMm = lvdtUm / 1000.0;
    if (truth.activeCrackCount > 0) truth.acwUm = lvdtUm / truth.activeCrackCount;
    truth.cdPerM = truth.activeCrackCount / result.gaugeLengthM;

    FrameMeta meta;
    meta.frameIndex = static_cast<int>(f);
    meta.appliedStrain = strain;
    meta.loadKn = 0.5 + 50.0 * strain;  // schematic hardening ramp
    meta.lvdtDisplacementMm = truth.lvdtDisplacementMm;
    meta.gaugeLengthM = result.gaugeLengthM;
    meta.mmPerPixel = spec.mmPerPixel;

    result.frames.push_back(std::move(frame));
    result.meta.push_back(meta);
    result.truth.push_back(std::move(truth));
  }
  return result;
}

DatasetManifest gen_tiles(const SpecimenSpec& spec, std::size_t perClass, Seed seed,
                          std::vector<TileTruth>* truthOut) {
  if (perClass < 1) throw DataError("gen_tiles: perClass must be >= 1");
  const int w = spec.window;
  DatasetManifest manifest;
  manifest.window = w;
  if (truthOut) truthOut->clear();

  Rng master(seed);
  const double nominalOpening =
      spec.crackPlan.empty() ? 60.0 : spec.crackPlan.front().maxOpeningUm;

  for (std::size_t t = 0; t < 2 * perClass; ++t) {
    const bool positive = t < perClass;
    Rng rng = master.fork(kTileStreamBase + t);
    SpecimenSpec tileSpec = spec;
    tileSpec.widthPx = tileSpec.heightPx = w;
    const SurfaceTexture surface = make_surface(tileSpec, w, w, rng.fork(kSurfaceStream));
    Rng noise = rng.fork(kFrameNoiseBase);
    Raster tile = render_background(tileSpec, w, w, surface, noise);

    TileTruth truth;
    if (positive) {
      // One crack through the central quarter band: the centroid stays well
      // inside the central 50% box, the eligibility rule for augmentation.
      CrackPlanEntry plan;
      plan.positionAlongAxisPx = w / 2.0 + rng.next_range(-w / 8.0, w / 8.0);
      plan.maxOpeningUm = nominalOpening * rng.next_range(0.8, 1.2);
      plan.wavinessPx = rng.next_range(2.0, 6.0);
      CrackGeometry g = make_geometry(plan, rng.fork(kCrackStreamBase));
      draw_crack(tile, g, Axis::Y, spec.mmPerPixel);
      truth.hasCrack = true;
      double sumC = 0.0;
      for (int s = 0; s < w; ++s) sumC += g.centerline(s);
      truth.centroidX = (w - 1) / 2.0;
      truth.centroidY = sumC / w;
    }

    SegmentRecord rec;
    rec.label = positive ? Label::P : Label::N;
    rec.source = "synth";
    rec.pixels = std::make_shared<Raster>(std::move(tile));
    manifest.records.push_back(std::move(rec));
    if (truthOut) truthOut->push_back(truth);
  }
  return manifest;
}

TileClassifier darkness_classifier(double intensityCutoff, std::uint64_t minPixels) {
  return [intensityCutoff, minPixels](const Raster& tile) {
    const Raster gray = to_grayscale(tile);
    std::uint64_t dark = 0;
    for (std::uint8_t v : gray.samples)
      if (v < intensityCutoff && ++dark >= minPixels) return Prediction{1.0, 0.0};
    return Prediction{0.0, 1.0};
  };
}

TileClassifier darkness_classifier(const SpecimenSpec& spec) {
  return darkness_classifier(spec.backgroundMean - 8.0 * spec.backgroundNoiseStd, 1);
}

std::string format_truth_json(const SequenceResult& result) {
  nlohmann::json root;
  root["gauge_m"] = result.gaugeLengthM;
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t f = 0; f < result.truth.size(); ++f) {
    const FrameTruth& t = result.truth[f];
    nlohmann::json jf;
    jf["frame"] = f;
    jf["strain"] = result.meta[f].appliedStrain;
    jf["active_cracks"] = t.activeCrackCount;
    jf["lvdt_mm"] = t.lvdtDisplacementMm;
    if (t.acwUm)
      jf["acw_um"] = *t.acwUm;
    else
      jf["acw_um"] = nullptr;
    jf["cd_per_m"] = t.cdPerM;
    nlohmann::json lines = nlohmann::json::array();
    for (const CrackPolyline& line : t.polylines) {
      nlohmann::json pts = nlohmann::json::array();
      for (const PolyPoint& p : line.points) pts.push_back({p.x, p.y});
      lines.push_back(std::move(pts));
    }
    jf["polylines"] = std::move(lines);
    nlohmann::json labels = nlohmann::json::array();
    for (const auto& row : t.windowLabels) {
      nlohmann::json jrow = nlohmann::json::array();
      for (bool v : row) jrow.push_back(v ? 1 : 0);
      labels.push_back(std::move(jrow));
    }
    jf["window_labels"] = std::move(labels);
    frames.push_back(std::move(jf));
  }
  root["frames"] = std::move(frames);
  return root.dump(1) + "\n";
}

}  // namespace crackscope
