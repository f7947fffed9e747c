#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "crackscope/classify.hpp"
#include "crackscope/raster.hpp"

namespace crackscope {

// Specimen loading direction in image coordinates; cracks run transverse.
enum class Axis { X, Y };

struct WindowGrid {
  int window = 227;
  int rows = 0, cols = 0;
  std::vector<Label> labels;  // row-major
  std::vector<double> probs;

  Label label_at(int r, int c) const { return labels[static_cast<std::size_t>(r) * cols + c]; }
  double prob_at(int r, int c) const { return probs[static_cast<std::size_t>(r) * cols + c]; }
};

struct PixelRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
};

// Localized cracking zone: 8-connected group of positive windows. Isolated
// positives are excluded (a crack is larger than one window).
struct Lcz {
  std::vector<std::pair<int, int>> cells;  // (row, col), sorted
  int minRow = 0, minCol = 0, maxRow = 0, maxCol = 0;

  PixelRect bounding_box_px(int window) const {
    return {minCol * window, minRow * window, (maxCol + 1) * window, (maxRow + 1) * window};
  }
};

struct PolyPoint {
  double x = 0.0, y = 0.0;
};

struct CrackPolyline {
  std::vector<PolyPoint> points;  // frame pixel coordinates, sweep-ordered
  double lengthPx = 0.0;
  std::optional<double> lengthMm;
};

// Measured context for one frame; the image itself carries no scale or
// displacement, both arrive as test metadata.
struct FrameMeta {
  int frameIndex = 0;
  double appliedStrain = 0.0;
  std::optional<double> loadKn;
  double lvdtDisplacementMm = 0.0;
  double gaugeLengthM = 0.0;
  double mmPerPixel = 0.0;
};

struct TraceParams {
  double k = 1.0;                 // trough depth: below mean - k*std of the patch
  double continuityDeltaPx = 3.0; // max centerline jump per sweep step
  double minLengthPx = 0.0;       // 0 = default 2*window/3
  double contrastLow = 1.0, contrastHigh = 99.0;
};

struct StatsParams {
  int window = 227;
  int scanLines = 5;  // K
  Axis loadingAxis = Axis::Y;
  TraceParams trace;
  int jobs = 1;
};

struct FrameStats {
  double crackNumberReal = 0.0;
  int crackNumberInt = 0;
  std::optional<double> acwUm;  // absent when crackNumberReal < 0.5
  double cdPerM = 0.0;
  std::vector<Lcz> lczs;
  std::vector<CrackPolyline> polylines;
};

struct SeriesRow {
  int frameIndex = 0;
  double strain = 0.0;
  std::optional<double> loadKn;
  double crackNumberReal = 0.0;
  int crackNumberInt = 0;
  std::optional<double> acwUm;
  double cdPerM = 0.0;
};

// Non-overlapping sliding window (stride == window), every tile classified.
WindowGrid window_search(const Raster& raster, const TileClassifier& classifier, int window,
                         int jobs = 1);

// Connected components of P cells under 8-connectivity, singletons dropped,
// ordered by (minRow, minCol).
std::vector<Lcz> group_lcz(const WindowGrid& grid);

// Centerline tracing inside the LCZ: the patch is contrast-stretched, then
// both sweep orientations link sub-threshold intensity minima into chains
// bounded by continuityDeltaPx per step; the orientation with the larger
// total chain length wins. Chains shorter than minLengthPx are dropped.
std::vector<CrackPolyline> trace_cracks(const Raster& raster, const Lcz& lcz, int window,
                                        const TraceParams& params = {},
                                        double mmPerPixel = 0.0);

// Mean number of polyline crossings over K scan lines parallel to the
// loading axis, spread across the region's transverse extent.
double crack_number(const std::vector<CrackPolyline>& polylines, const PixelRect& region,
                    int scanLines, Axis loadingAxis);

// window_search -> group_lcz -> trace_cracks -> crack_number, then
// ACW = lvdt / N (um) and CD = N / gaugeLength (1/m) with the fractional N.
FrameStats frame_stats(const Raster& raster, const TileClassifier& classifier,
                       const FrameMeta& meta, const StatsParams& params);

// Per-frame rows for a strain-ordered sequence; refuses to reorder measured
// data (non-monotone strain is an error).
std::vector<SeriesRow> series_stats(const std::vector<Raster>& frames,
                                    const std::vector<FrameMeta>& metas,
                                    const TileClassifier& classifier,
                                    const StatsParams& params,
                                    std::vector<FrameStats>* details = nullptr);

// CSV: frameIndex,strain,load_kN,crackNumberReal,crackNumberInt,acw_um,cd_per_m
std::string format_series_csv(const std::vector<SeriesRow>& rows);

// JSON list of frames, each a list of polylines in pixel coordinates.
std::string format_pattern_json(const std::vector<std::vector<CrackPolyline>>& perFrame);

// Frame list file: CSV with header
// frameIndex,path,strain,load_kN,lvdt_mm,gauge_m,mm_per_px (load may be empty).
std::vector<std::pair<std::string, FrameMeta>> load_frame_list(
    const std::filesystem::path& path);
std::string format_frame_list(const std::vector<std::pair<std::string, FrameMeta>>& entries);

}  // namespace crackscope
