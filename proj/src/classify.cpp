#include "crackscope/classify.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "crackscope/error.hpp"
#include "crackscope/parallel.hpp"

namespace crackscope {

namespace {

// Between-class variance at split k is w0*w1*(mu0-mu1)^2, which equals
// A^2/(w0*w1) with A = S0*w1 - S1*w0 (S = intensity sums, w = counts).
// Candidates are compared as fractions via cross-multiplication in 256-bit
// integers, so the maximizer is exact for any histogram mass.
struct SplitScore {
  __int128 a = 0;           // S0*w1 - S1*w0
  std::uint64_t b = 0;      // w0*w1; 0 marks an empty class (variance 0)
};

bool score_less(const SplitScore& x, const SplitScore& y) {
  const bool xZero = x.b == 0 || x.a == 0;
  const bool yZero = y.b == 0 || y.a == 0;
  if (xZero || yZero) return xZero && !yZero;
  // Compare x.a^2 / x.b < y.a^2 / y.b exactly. |a| <= 255*n^2, so a^2 fits
  // unsigned __int128 for any image up to ~2e8 pixels; dividing with
  // remainder instead of cross-multiplying avoids the 256-bit product.
  const unsigned __int128 xa = x.a < 0 ? -static_cast<unsigned __int128>(x.a)
                                       : static_cast<unsigned __int128>(x.a);
  const unsigned __int128 ya = y.a < 0 ? -static_cast<unsigned __int128>(y.a)
                                       : static_cast<unsigned __int128>(y.a);
  const unsigned __int128 lhs = xa * xa;
  const unsigned __int128 rhs = ya * ya;
  const unsigned __int128 ql = lhs / x.b, rl = lhs % x.b;
  const unsigned __int128 qr = rhs / y.b, rr = rhs % y.b;
  if (ql != qr) return ql < qr;
  // Same integer part: compare remainders rl/x.b vs rr/y.b; both factors are
  // below 2^64 so the cross products fit.
  return rl * y.b < rr * x.b;
}

bool score_equal(const SplitScore& x, const SplitScore& y) {
  return !score_less(x, y) && !score_less(y, x);
}

}  // namespace

int otsu_threshold(const std::array<std::uint64_t, 256>& histogram) {
  std::uint64_t total = 0;
  unsigned __int128 sum = 0;
  int lo = -1, hi = -1;
  for (int v = 0; v < 256; ++v) {
    if (histogram[v]) {
      if (lo < 0) lo = v;
      hi = v;
    }
    total += histogram[v];
    sum += static_cast<unsigned __int128>(histogram[v]) * v;
  }
  if (total == 0) throw DataError("otsu_threshold: empty histogram");
  if (lo == hi) return lo;  // constant image

  SplitScore best;
  long bestSum = 0;
  std::uint64_t bestCount = 0;
  std::uint64_t w0 = 0;
  unsigned __int128 s0 = 0;
  for (int k = 0; k < 256; ++k) {
    w0 += histogram[k];
    s0 += static_cast<unsigned __int128>(histogram[k]) * k;
    const std::uint64_t w1 = total - w0;
    SplitScore cur;
    if (w0 > 0 && w1 > 0) {
      cur.a = static_cast<__int128>(s0 * w1) - static_cast<__int128>((sum - s0) * w0);
      cur.b = w0 * w1;
    }
    if (bestCount == 0 || score_less(best, cur)) {
      best = cur;
      bestSum = k;
      bestCount = 1;
    } else if (score_equal(best, cur)) {
      bestSum += k;
      ++bestCount;
    }
  }
  return static_cast<int>(bestSum / static_cast<long>(bestCount));
}

Prediction adt_classify(const Raster& tile, const AdtParams& params) {
  const Raster gray = to_grayscale(tile);
  const auto hist = intensity_histogram(gray);
  const int th = otsu_threshold(hist);
  std::uint64_t below = 0;
  for (int v = 0; v < th; ++v) below += hist[v];
  const bool cracked = below >= params.thetaPix;
  return cracked ? Prediction{1.0, 0.0} : Prediction{0.0, 1.0};
}

std::vector<PredictionRow> predict_dataset(const TileClassifier& classifier,
                                           const DatasetManifest& manifest, int jobs) {
  std::vector<PredictionRow> rows(manifest.records.size());
  parallel_for(manifest.records.size(), jobs, [&](std::size_t i) {
    const Raster tile = resolve_tile(manifest.records[i], manifest.window);
    const Prediction p = classifier(tile);
    rows[i] = PredictionRow{i, p.probP, p.probN, p.label()};
  });
  return rows;
}

std::string format_predictions(const std::vector<PredictionRow>& rows) {
  std::string out = "recordIndex\tprobP\tprobN\tlabel\n";
  char line[96];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%zu\t%.9g\t%.9g\t%c\n", r.recordIndex, r.probP, r.probN,
                  label_char(r.label));
    out += line;
  }
  return out;
}

std::vector<PredictionRow> parse_predictions(const std::string& text) {
  std::vector<PredictionRow> rows;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("recordIndex", 0) != 0)
    throw DataError("predictions table: missing header line");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    PredictionRow r;
    char labelChar = 0;
    if (std::sscanf(line.c_str(), "%zu\t%lf\t%lf\t%c", &r.recordIndex, &r.probP, &r.probN,
                    &labelChar) != 4)
      throw DataError("predictions table: malformed row '" + line + "'");
    r.label = parse_label(labelChar);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace crackscope
