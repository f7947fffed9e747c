#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace crackscope {

// 8-bit image, row-major, channel-interleaved. channels is 1 (gray) or 3 (RGB).
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> samples;

  Raster() = default;
  Raster(int w, int h, int c);
  Raster(int w, int h, int c, std::vector<std::uint8_t> data);

  std::uint8_t at(int x, int y, int c = 0) const {
    return samples[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t& at(int x, int y, int c = 0) {
    return samples[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t sample_count() const { return samples.size(); }
  bool operator==(const Raster&) const = default;
};

// Non-overlapping tiling lattice: tile (r, c) covers pixels
// [originX + c*window, +window) x [originY + r*window, +window).
struct TileGrid {
  int window = 227;
  int rows = 0;
  int cols = 0;
  int originX = 0;
  int originY = 0;
};

// Round-half-up quantization used everywhere intensities are produced.
inline int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }
inline std::uint8_t clamp_u8(double v) {
  const int r = round_half_up(v);
  return static_cast<std::uint8_t>(r < 0 ? 0 : (r > 255 ? 255 : r));
}

// Binary PGM (P5) / PPM (P6), maxval 255 only. Round-trips bit-exactly with
// write_image. Parse errors carry the byte offset of the offending field.
Raster read_image(const std::filesystem::path& path);
void write_image(const Raster& raster, const std::filesystem::path& path);

// BT.601 luma: Y = round(0.299 R + 0.587 G + 0.114 B). 1-channel passthrough.
Raster to_grayscale(const Raster& raster);

// Gray -> 3 identical channels.
Raster replicate_channels(const Raster& raster);

// Partial right/bottom strips are discarded; origin is (0, 0).
TileGrid tile_grid(const Raster& raster, int window);
Raster extract_tile(const Raster& raster, const TileGrid& grid, int r, int c);

// Corner-aligned bilinear sampling: src = dst * (srcDim-1) / (dstDim-1);
// single-pixel axes map to index 0.
Raster bilinear_resize(const Raster& raster, int newW, int newH);

// Linear map sending the pLow percentile to 0 and pHigh to 255, clamped.
// Degenerate window (equal percentile values) returns the input unchanged.
Raster contrast_stretch(const Raster& raster, double pLow = 1.0, double pHigh = 99.0);

std::array<std::uint64_t, 256> intensity_histogram(const Raster& raster);

}  // namespace crackscope
