#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "crackscope/raster.hpp"
#include "crackscope/rng.hpp"

namespace testsupport {

// Scratch directory under the system temp root, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    dir_ = std::filesystem::temp_directory_path() /
           ("crackscope_" + tag + "_" + std::to_string(counter_++));
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  const std::filesystem::path& path() const { return dir_; }
  std::filesystem::path file(const std::string& name) const { return dir_ / name; }

 private:
  std::filesystem::path dir_;
  static inline int counter_ = 0;
};

inline crackscope::Raster random_raster(int w, int h, int c, crackscope::Rng& rng) {
  crackscope::Raster r(w, h, c);
  for (auto& s : r.samples) s = static_cast<std::uint8_t>(rng.next_below(256));
  return r;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Otsu oracle: independent brute force over all 256 split points. Variance
// fractions A^2/(w0*w1) are compared by full cross-multiplication in 128-bit
// integers (exact for patches up to ~4e5 pixels), ties averaged like the
// stated rule. Structured as per-split direct sums, unlike the production
// cumulative-sum code path.
inline int brute_force_otsu(const std::array<std::uint64_t, 256>& hist) {
  int lo = -1, hi = -1;
  for (int v = 0; v < 256; ++v)
    if (hist[v]) {
      if (lo < 0) lo = v;
      hi = v;
    }
  if (lo < 0) throw std::runtime_error("empty histogram");
  if (lo == hi) return lo;

  struct Frac {
    unsigned __int128 a2 = 0;  // A^2
    std::uint64_t b = 0;       // w0*w1, 0 = undefined split
  };
  auto less = [](const Frac& x, const Frac& y) {
    const bool xz = x.b == 0 || x.a2 == 0;
    const bool yz = y.b == 0 || y.a2 == 0;
    if (xz || yz) return xz && !yz;
    return x.a2 * y.b < y.a2 * x.b;
  };
  auto equal = [&](const Frac& x, const Frac& y) { return !less(x, y) && !less(y, x); };

  Frac best;
  std::vector<int> bestKs;
  for (int k = 0; k < 256; ++k) {
    std::uint64_t w0 = 0, w1 = 0;
    unsigned __int128 s0 = 0, s1 = 0;
    for (int v = 0; v <= k; ++v) {
      w0 += hist[v];
      s0 += static_cast<unsigned __int128>(hist[v]) * v;
    }
    for (int v = k + 1; v < 256; ++v) {
      w1 += hist[v];
      s1 += static_cast<unsigned __int128>(hist[v]) * v;
    }
    Frac cur;
    if (w0 > 0 && w1 > 0) {
      const __int128 a = static_cast<__int128>(s0 * w1) - static_cast<__int128>(s1 * w0);
      const unsigned __int128 mag = a < 0 ? -static_cast<unsigned __int128>(a)
                                          : static_cast<unsigned __int128>(a);
      cur.a2 = mag * mag;
      cur.b = w0 * w1;
    }
    if (bestKs.empty() || less(best, cur)) {
      best = cur;
      bestKs.assign(1, k);
    } else if (equal(best, cur)) {
      bestKs.push_back(k);
    }
  }
  long sum = 0;
  for (int k : bestKs) sum += k;
  return static_cast<int>(sum / static_cast<long>(bestKs.size()));
}

}  // namespace testsupport
