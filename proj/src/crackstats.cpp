#include "crackscope/crackstats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "crackscope/error.hpp"
#include "crackscope/parallel.hpp"

namespace crackscope {

namespace {

// Sub-threshold local minima along a profile; plateaus resolve to their
// center. Returned positions may be half-integral.
std::vector<double> profile_minima(const std::vector<double>& profile, double threshold) {
  std::vector<double> minima;
  const std::size_t n = profile.size();
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && profile[j + 1] == profile[i]) ++j;  // plateau [i, j]
    const bool leftUp = i == 0 || profile[i - 1] > profile[i];
    const bool rightUp = j + 1 == n || profile[j + 1] > profile[i];
    if (leftUp && rightUp && profile[i] < threshold)
      minima.push_back((static_cast<double>(i) + static_cast<double>(j)) / 2.0);
    i = j + 1;
  }
  return minima;
}

struct Chain {
  std::vector<PolyPoint> points;  // (sweep, cross) while building
  bool active = true;
};

double chain_length(const std::vector<PolyPoint>& pts) {
  double len = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double dx = pts[i].x - pts[i - 1].x;
    const double dy = pts[i].y - pts[i - 1].y;
    len += std::sqrt(dx * dx + dy * dy);
  }
  return len;
}

// Sweep the patch along one axis, link minima into chains with the per-step
// continuity bound. Points come back as (sweepPos, crossPos).
std::vector<std::vector<PolyPoint>> sweep_chains(const Raster& patch, bool sweepColumns,
                                                 double threshold, double delta) {
  const int sweepExtent = sweepColumns ? patch.width : patch.height;
  const int crossExtent = sweepColumns ? patch.height : patch.width;

  std::vector<Chain> chains;
  std::vector<double> profile(crossExtent);
  for (int s = 0; s < sweepExtent; ++s) {
    for (int t = 0; t < crossExtent; ++t)
      profile[t] = sweepColumns ? patch.at(s, t) : patch.at(t, s);
    std::vector<double> minima = profile_minima(profile, threshold);
    std::vector<bool> taken(minima.size(), false);

    // Greedy nearest-extension of chains that reached the previous step.
    for (Chain& chain : chains) {
      if (!chain.active) continue;
      if (chain.points.back().x < static_cast<double>(s) - 1.0) {
        chain.active = false;
        continue;
      }
      int bestIdx = -1;
      double bestDist = delta + 1e-12;
      for (std::size_t m = 0; m < minima.size(); ++m) {
        if (taken[m]) continue;
        const double d = std::abs(minima[m] - chain.points.back().y);
        if (d <= bestDist) {
          bestDist = d;
          bestIdx = static_cast<int>(m);
        }
      }
      if (bestIdx >= 0) {
        taken[static_cast<std::size_t>(bestIdx)] = true;
        chain.points.push_back({static_cast<double>(s), minima[static_cast<std::size_t>(bestIdx)]});
      } else {
        chain.active = false;
      }
    }
    for (std::size_t m = 0; m < minima.size(); ++m)
      if (!taken[m]) chains.push_back({{{static_cast<double>(s), minima[m]}}, true});
  }

  std::vector<std::vector<PolyPoint>> out;
  out.reserve(chains.size());
  for (Chain& chain : chains) out.push_back(std::move(chain.points));
  return out;
}

double endpoint_distance(const PolyPoint& a, const PolyPoint& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

}  // namespace

WindowGrid window_search(const Raster& raster, const TileClassifier& classifier, int window,
                         int jobs) {
  const TileGrid grid = tile_grid(raster, window);
  WindowGrid out;
  out.window = window;
  out.rows = grid.rows;
  out.cols = grid.cols;
  const std::size_t n = static_cast<std::size_t>(grid.rows) * grid.cols;
  out.labels.assign(n, Label::N);
  out.probs.assign(n, 0.0);
  parallel_for(n, jobs, [&](std::size_t i) {
    const int r = static_cast<int>(i) / grid.cols;
    const int c = static_cast<int>(i) % grid.cols;
    const Prediction p = classifier(extract_tile(raster, grid, r, c));
    out.labels[i] = p.label();
    out.probs[i] = p.probP;
  });
  return out;
}

std::vector<Lcz> group_lcz(const WindowGrid& grid) {
  const int rows = grid.rows, cols = grid.cols;
  std::vector<int> component(static_cast<std::size_t>(rows) * cols, -1);
  std::vector<Lcz> zones;

  for (int r0 = 0; r0 < rows; ++r0)
    for (int c0 = 0; c0 < cols; ++c0) {
      const std::size_t start = static_cast<std::size_t>(r0) * cols + c0;
      if (grid.labels[start] != Label::P || component[start] >= 0) continue;
      // flood fill with 8-connectivity
      Lcz zone;
      std::vector<std::pair<int, int>> stack{{r0, c0}};
      component[start] = static_cast<int>(zones.size());
      while (!stack.empty()) {
        const auto [r, c] = stack.back();
        stack.pop_back();
        zone.cells.emplace_back(r, c);
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            if (dr == 0 && dc == 0) continue;
            const int nr = r + dr, nc = c + dc;
            if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) continue;
            const std::size_t ni = static_cast<std::size_t>(nr) * cols + nc;
            if (grid.labels[ni] != Label::P || component[ni] >= 0) continue;
            component[ni] = component[start];
            stack.push_back({nr, nc});
          }
      }
      if (zone.cells.size() < 2) continue;  // isolated positives are noise
      std::sort(zone.cells.begin(), zone.cells.end());
      zone.minRow = zone.maxRow = zone.cells.front().first;
      zone.minCol = zone.maxCol = zone.cells.front().second;
      for (const auto& [r, c] : zone.cells) {
        zone.minRow = std::min(zone.minRow, r);
        zone.maxRow = std::max(zone.maxRow, r);
        zone.minCol = std::min(zone.minCol, c);
        zone.maxCol = std::max(zone.maxCol, c);
      }
      zones.push_back(std::move(zone));
    }
  std::sort(zones.begin(), zones.end(), [](const Lcz& a, const Lcz& b) {
    return std::pair(a.minRow, a.minCol) < std::pair(b.minRow, b.minCol);
  });
  return zones;
}

std::vector<CrackPolyline> trace_cracks(const Raster& raster, const Lcz& lcz, int window,
                                        const TraceParams& params, double mmPerPixel) {
  PixelRect box = lcz.bounding_box_px(window);
  box.x1 = std::min(box.x1, raster.width);
  box.y1 = std::min(box.y1, raster.height);
  if (box.width() < 2 || box.height() < 2) return {};

  const Raster gray = to_grayscale(raster);
  Raster patch(box.width(), box.height(), 1);
  for (int y = 0; y < box.height(); ++y)
    for (int x = 0; x < box.width(); ++x) patch.at(x, y) = gray.at(box.x0 + x, box.y0 + y);
  const Raster enhanced = contrast_stretch(patch, params.contrastLow, params.contrastHigh);

  double mean = 0.0;
  for (std::uint8_t v : enhanced.samples) mean += v;
  mean /= static_cast<double>(enhanced.sample_count());
  double var = 0.0;
  for (std::uint8_t v : enhanced.samples) var += (v - mean) * (v - mean);
  var /= static_cast<double>(enhanced.sample_count());
  const double threshold = mean - params.k * std::sqrt(var);

  const double minLength =
      params.minLengthPx > 0.0 ? params.minLengthPx : 2.0 * window / 3.0;

  auto finalize = [&](std::vector<std::vector<PolyPoint>> chains, bool sweepColumns) {
    std::vector<CrackPolyline> keep;
    for (auto& pts : chains) {
      const double len = chain_length(pts);
      if (len < minLength) continue;
      CrackPolyline line;
      line.points.reserve(pts.size());
      for (const PolyPoint& p : pts) {
        const double sweep = p.x, cross = p.y;
        line.points.push_back(sweepColumns
                                  ? PolyPoint{box.x0 + sweep, box.y0 + cross}
                                  : PolyPoint{box.x0 + cross, box.y0 + sweep});
      }
      line.lengthPx = len;
      if (mmPerPixel > 0.0) line.lengthMm = len * mmPerPixel;
      keep.push_back(std::move(line));
    }
    return keep;
  };

  std::vector<CrackPolyline> columns =
      finalize(sweep_chains(enhanced, true, threshold, params.continuityDeltaPx), true);
  std::vector<CrackPolyline> rowsSwept =
      finalize(sweep_chains(enhanced, false, threshold, params.continuityDeltaPx), false);

  double columnsTotal = 0.0, rowsTotal = 0.0;
  for (const auto& l : columns) columnsTotal += l.lengthPx;
  for (const auto& l : rowsSwept) rowsTotal += l.lengthPx;
  return columnsTotal >= rowsTotal ? std::move(columns) : std::move(rowsSwept);
}

double crack_number(const std::vector<CrackPolyline>& polylines, const PixelRect& region,
                    int scanLines, Axis loadingAxis) {
  if (scanLines < 1) throw DataError("crack_number: need at least one scan line");
  const int transverseExtent = loadingAxis == Axis::Y ? region.width() : region.height();
  if (scanLines > transverseExtent)
    throw DataError("crack_number: " + std::to_string(scanLines) +
                    " scan lines exceed region extent " + std::to_string(transverseExtent));

  std::uint64_t crossings = 0;
  for (int j = 0; j < scanLines; ++j) {
    // Half-integral line positions cannot coincide with integral samples.
    const double frac = (j + 0.5) * static_cast<double>(transverseExtent) / scanLines;
    const double linePos =
        std::floor(frac) + 0.5 + (loadingAxis == Axis::Y ? region.x0 : region.y0);
    for (const CrackPolyline& line : polylines) {
      for (std::size_t i = 1; i < line.points.size(); ++i) {
        const double a = loadingAxis == Axis::Y ? line.points[i - 1].x : line.points[i - 1].y;
        const double b = loadingAxis == Axis::Y ? line.points[i].x : line.points[i].y;
        if ((a <= linePos) != (b <= linePos)) ++crossings;
      }
    }
  }
  return static_cast<double>(crossings) / static_cast<double>(scanLines);
}

namespace {

// Joins polylines whose facing endpoints are within the continuity bound;
// a crack crossing an LCZ border comes back in pieces otherwise.
void merge_adjacent_polylines(std::vector<CrackPolyline>& lines, double delta,
                              double mmPerPixel) {
  bool merged = true;
  while (merged) {
    merged = false;
    for (std::size_t i = 0; i < lines.size() && !merged; ++i)
      for (std::size_t j = i + 1; j < lines.size() && !merged; ++j) {
        auto& a = lines[i].points;
        auto& b = lines[j].points;
        std::vector<PolyPoint> joined;
        if (endpoint_distance(a.back(), b.front()) <= delta) {
          joined = a;
          joined.insert(joined.end(), b.begin(), b.end());
        } else if (endpoint_distance(b.back(), a.front()) <= delta) {
          joined = b;
          joined.insert(joined.end(), a.begin(), a.end());
        } else if (endpoint_distance(a.back(), b.back()) <= delta) {
          joined = a;
          joined.insert(joined.end(), b.rbegin(), b.rend());
        } else if (endpoint_distance(a.front(), b.front()) <= delta) {
          joined.assign(a.rbegin(), a.rend());
          joined.insert(joined.end(), b.begin(), b.end());
        } else {
          continue;
        }
        CrackPolyline line;
        line.points = std::move(joined);
        line.lengthPx = chain_length(line.points);
        if (mmPerPixel > 0.0) line.lengthMm = line.lengthPx * mmPerPixel;
        lines[i] = std::move(line);
        lines.erase(lines.begin() + static_cast<std::ptrdiff_t>(j));
        merged = true;
      }
  }
}

}  // namespace

FrameStats frame_stats(const Raster& raster, const TileClassifier& classifier,
                       const FrameMeta& meta, const StatsParams& params) {
  FrameStats stats;
  const WindowGrid grid = window_search(raster, classifier, params.window, params.jobs);
  stats.lczs = group_lcz(grid);
  for (const Lcz& zone : stats.lczs) {
    std::vector<CrackPolyline> lines =
        trace_cracks(raster, zone, params.window, params.trace, meta.mmPerPixel);
    stats.polylines.insert(stats.polylines.end(), std::make_move_iterator(lines.begin()),
                           std::make_move_iterator(lines.end()));
  }
  merge_adjacent_polylines(stats.polylines, params.trace.continuityDeltaPx, meta.mmPerPixel);

  const PixelRect frameRect{0, 0, raster.width, raster.height};
  stats.crackNumberReal =
      crack_number(stats.polylines, frameRect, params.scanLines, params.loadingAxis);
  stats.crackNumberInt = round_half_up(stats.crackNumberReal);
  if (stats.crackNumberReal >= 0.5)
    stats.acwUm = meta.lvdtDisplacementMm / stats.crackNumberReal * 1000.0;
  if (!(meta.gaugeLengthM > 0.0)) throw DataError("frame_stats: gauge length must be positive");
  stats.cdPerM = stats.crackNumberReal / meta.gaugeLengthM;
  return stats;
}

std::vector<SeriesRow> series_stats(const std::vector<Raster>& frames,
                                    const std::vector<FrameMeta>& metas,
                                    const TileClassifier& classifier, const StatsParams& params,
                                    std::vector<FrameStats>* details) {
  if (frames.empty()) throw DataError("series_stats: empty frame sequence");
  if (frames.size() != metas.size())
    throw DataError("series_stats: frame/meta count mismatch");
  for (std::size_t i = 1; i < metas.size(); ++i)
    if (metas[i].appliedStrain < metas[i - 1].appliedStrain)
      throw DataError("series_stats: strain must be non-decreasing (frame " +
                      std::to_string(i) + "); refusing to reorder measured data");

  std::vector<SeriesRow> rows(frames.size());
  std::vector<FrameStats> stats(frames.size());
  StatsParams inner = params;
  inner.jobs = 1;  // frames fan out instead
  parallel_for(frames.size(), params.jobs, [&](std::size_t i) {
    stats[i] = frame_stats(frames[i], classifier, metas[i], inner);
    rows[i] = SeriesRow{metas[i].frameIndex, metas[i].appliedStrain,   metas[i].loadKn,
                        stats[i].crackNumberReal, stats[i].crackNumberInt, stats[i].acwUm,
                        stats[i].cdPerM};
  });
  if (details) *details = std::move(stats);
  return rows;
}

std::string format_series_csv(const std::vector<SeriesRow>& rows) {
  std::string out = "frameIndex,strain,load_kN,crackNumberReal,crackNumberInt,acw_um,cd_per_m\n";
  char buf[192];
  for (const SeriesRow& r : rows) {
    char load[32] = "";
    if (r.loadKn) std::snprintf(load, sizeof load, "%.10g", *r.loadKn);
    char acw[32] = "";
    if (r.acwUm) std::snprintf(acw, sizeof acw, "%.10g", *r.acwUm);
    std::snprintf(buf, sizeof buf, "%d,%.10g,%s,%.10g,%d,%s,%.10g\n", r.frameIndex, r.strain,
                  load, r.crackNumberReal, r.crackNumberInt, acw, r.cdPerM);
    out += buf;
  }
  return out;
}

std::string format_pattern_json(const std::vector<std::vector<CrackPolyline>>& perFrame) {
  std::string out = "[\n";
  char buf[64];
  for (std::size_t f = 0; f < perFrame.size(); ++f) {
    out += "  [";
    for (std::size_t l = 0; l < perFrame[f].size(); ++l) {
      out += l == 0 ? "[" : ", [";
      for (std::size_t p = 0; p < perFrame[f][l].points.size(); ++p) {
        std::snprintf(buf, sizeof buf, "%s[%.10g,%.10g]", p == 0 ? "" : ",",
                      perFrame[f][l].points[p].x, perFrame[f][l].points[p].y);
        out += buf;
      }
      out += "]";
    }
    out += f + 1 < perFrame.size() ? "],\n" : "]\n";
  }
  out += "]\n";
  return out;
}

std::vector<std::pair<std::string, FrameMeta>> load_frame_list(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open file");
  std::string line;
  if (!std::getline(in, line) || line.rfind("frameIndex,path,", 0) != 0)
    throw DataError(path.string() + ": missing frame-list header");
  std::vector<std::pair<std::string, FrameMeta>> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma == std::string::npos ? comma : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 7)
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 7 fields");
    FrameMeta meta;
    meta.frameIndex = std::stoi(fields[0]);
    meta.appliedStrain = std::stod(fields[2]);
    if (!fields[3].empty()) meta.loadKn = std::stod(fields[3]);
    meta.lvdtDisplacementMm = std::stod(fields[4]);
    meta.gaugeLengthM = std::stod(fields[5]);
    meta.mmPerPixel = std::stod(fields[6]);
    out.emplace_back(fields[1], meta);
  }
  return out;
}

std::string format_frame_list(const std::vector<std::pair<std::string, FrameMeta>>& entries) {
  std::string out = "frameIndex,path,strain,load_kN,lvdt_mm,gauge_m,mm_per_px\n";
  char buf[256];
  for (const auto& [path, meta] : entries) {
    char load[32] = "";
    if (meta.loadKn) std::snprintf(load, sizeof load, "%.10g", *meta.loadKn);
    std::snprintf(buf, sizeof buf, "%d,%s,%.10g,%s,%.10g,%.10g,%.10g\n", meta.frameIndex,
                  path.c_str(), meta.appliedStrain, load, meta.lvdtDisplacementMm,
                  meta.gaugeLengthM, meta.mmPerPixel);
    out += buf;
  }
  return out;
}

}  // namespace crackscope
