#include "crackscope/raster.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "crackscope/error.hpp"

namespace crackscope {

namespace {

void check_dims(int w, int h, int c) {
  if (w < 1 || h < 1) throw DataError("raster dimensions must be positive");
  if (c != 1 && c != 3) throw DataError("raster must have 1 or 3 channels");
}

std::string offset_msg(const std::filesystem::path& path, const std::string& what,
                       std::size_t offset) {
  return path.string() + ": " + what + " at byte offset " + std::to_string(offset);
}

}  // namespace

Raster::Raster(int w, int h, int c) : width(w), height(h), channels(c) {
  check_dims(w, h, c);
  samples.assign(static_cast<std::size_t>(w) * h * c, 0);
}

Raster::Raster(int w, int h, int c, std::vector<std::uint8_t> data)
    : width(w), height(h), channels(c), samples(std::move(data)) {
  check_dims(w, h, c);
  if (samples.size() != static_cast<std::size_t>(w) * h * c)
    throw DataError("sample count does not match width*height*channels");
}

Raster read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open file");
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());

  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos])))
      ++pos;
  };
  auto read_int = [&](const char* field) -> long {
    skip_ws();
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos])))
      ++pos;
    if (pos == start)
      throw DataError(offset_msg(path, std::string("malformed header, expected ") + field, start));
    return std::stol(bytes.substr(start, pos - start));
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw DataError(offset_msg(path, "malformed header, expected P5 or P6 magic", 0));
  const int channels = bytes[1] == '5' ? 1 : 3;
  pos = 2;

  const long w = read_int("width");
  const long h = read_int("height");
  const std::size_t maxval_at = pos;
  const long maxval = read_int("maxval");
  if (w < 1 || h < 1)
    throw DataError(offset_msg(path, "malformed header, non-positive dimensions", 2));
  if (maxval != 255)
    throw DataError(offset_msg(path, "unsupported maxval " + std::to_string(maxval) +
                                         " (must be 255)", maxval_at));
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw DataError(offset_msg(path, "malformed header, expected whitespace before payload", pos));
  ++pos;  // exactly one whitespace byte separates header and payload

  const std::size_t need = static_cast<std::size_t>(w) * h * channels;
  if (bytes.size() - pos < need)
    throw DataError(offset_msg(path, "truncated payload, expected " + std::to_string(need) +
                                         " bytes, got " + std::to_string(bytes.size() - pos),
                               pos));
  std::vector<std::uint8_t> data(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                 bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
  return Raster(static_cast<int>(w), static_cast<int>(h), channels, std::move(data));
}

void write_image(const Raster& raster, const std::filesystem::path& path) {
  check_dims(raster.width, raster.height, raster.channels);
  if (raster.samples.size() !=
      static_cast<std::size_t>(raster.width) * raster.height * raster.channels)
    throw DataError("sample count does not match width*height*channels");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path.string() + ": cannot open file for writing");
  char header[64];
  const int n = std::snprintf(header, sizeof header, "P%c\n%d %d\n255\n",
                              raster.channels == 1 ? '5' : '6', raster.width, raster.height);
  out.write(header, n);
  out.write(reinterpret_cast<const char*>(raster.samples.data()),
            static_cast<std::streamsize>(raster.samples.size()));
  if (!out) throw DataError(path.string() + ": write failed");
}

Raster to_grayscale(const Raster& raster) {
  if (raster.channels == 1) return raster;
  Raster out(raster.width, raster.height, 1);
  const std::size_t n = static_cast<std::size_t>(raster.width) * raster.height;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = 0.299 * raster.samples[3 * i] + 0.587 * raster.samples[3 * i + 1] +
                     0.114 * raster.samples[3 * i + 2];
    out.samples[i] = clamp_u8(y);
  }
  return out;
}

Raster replicate_channels(const Raster& raster) {
  if (raster.channels == 3) return raster;
  Raster out(raster.width, raster.height, 3);
  const std::size_t n = static_cast<std::size_t>(raster.width) * raster.height;
  for (std::size_t i = 0; i < n; ++i) {
    out.samples[3 * i] = out.samples[3 * i + 1] = out.samples[3 * i + 2] = raster.samples[i];
  }
  return out;
}

TileGrid tile_grid(const Raster& raster, int window) {
  if (window < 1) throw DataError("window size must be positive");
  if (raster.width < window || raster.height < window)
    throw DataError("image " + std::to_string(raster.width) + "x" +
                    std::to_string(raster.height) + " smaller than window " +
                    std::to_string(window));
  TileGrid grid;
  grid.window = window;
  grid.rows = raster.height / window;
  grid.cols = raster.width / window;
  return grid;
}

Raster extract_tile(const Raster& raster, const TileGrid& grid, int r, int c) {
  if (r < 0 || r >= grid.rows || c < 0 || c >= grid.cols)
    throw DataError("tile index out of range");
  const int w = grid.window;
  Raster out(w, w, raster.channels);
  const int x0 = grid.originX + c * w;
  const int y0 = grid.originY + r * w;
  const std::size_t row_bytes = static_cast<std::size_t>(w) * raster.channels;
  for (int y = 0; y < w; ++y) {
    const std::uint8_t* src =
        &raster.samples[(static_cast<std::size_t>(y0 + y) * raster.width + x0) *
                        raster.channels];
    std::copy(src, src + row_bytes, &out.samples[static_cast<std::size_t>(y) * row_bytes]);
  }
  return out;
}

Raster bilinear_resize(const Raster& raster, int newW, int newH) {
  if (newW < 1 || newH < 1) throw DataError("resize dimensions must be positive");
  Raster out(newW, newH, raster.channels);
  const double sx = newW > 1 ? static_cast<double>(raster.width - 1) / (newW - 1) : 0.0;
  const double sy = newH > 1 ? static_cast<double>(raster.height - 1) / (newH - 1) : 0.0;
  for (int y = 0; y < newH; ++y) {
    const double fy = y * sy;
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, raster.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < newW; ++x) {
      const double fx = x * sx;
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, raster.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < raster.channels; ++c) {
        const double top = (1.0 - wx) * raster.at(x0, y0, c) + wx * raster.at(x1, y0, c);
        const double bot = (1.0 - wx) * raster.at(x0, y1, c) + wx * raster.at(x1, y1, c);
        out.at(x, y, c) = clamp_u8((1.0 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

std::array<std::uint64_t, 256> intensity_histogram(const Raster& raster) {
  if (raster.channels != 1) throw DataError("histogram expects a 1-channel raster");
  std::array<std::uint64_t, 256> hist{};
  for (std::uint8_t v : raster.samples) ++hist[v];
  return hist;
}

Raster contrast_stretch(const Raster& raster, double pLow, double pHigh) {
  if (raster.channels != 1) throw DataError("contrast_stretch expects a 1-channel raster");
  if (!(pLow >= 0.0 && pLow < pHigh && pHigh <= 100.0))
    throw DataError("percentiles must satisfy 0 <= pLow < pHigh <= 100");
  const auto hist = intensity_histogram(raster);
  const std::uint64_t total = raster.sample_count();

  // Smallest intensity whose cumulative count reaches the percentile rank
  // (rank 0 resolves to the minimum present intensity).
  auto percentile = [&](double p) -> int {
    const double rank = p / 100.0 * static_cast<double>(total);
    std::uint64_t cum = 0;
    for (int v = 0; v < 256; ++v) {
      cum += hist[v];
      if (cum > 0 && static_cast<double>(cum) >= rank) return v;
    }
    return 255;
  };

  const int lo = percentile(pLow);
  const int hi = percentile(pHigh);
  if (lo >= hi) return raster;  // degenerate window

  Raster out(raster.width, raster.height, 1);
  std::array<std::uint8_t, 256> lut{};
  for (int v = 0; v < 256; ++v)
    lut[v] = clamp_u8((static_cast<double>(v) - lo) / (hi - lo) * 255.0);
  for (std::size_t i = 0; i < raster.sample_count(); ++i)
    out.samples[i] = lut[raster.samples[i]];
  return out;
}

}  // namespace crackscope
