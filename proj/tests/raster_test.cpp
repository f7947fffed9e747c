#include "crackscope/raster.hpp"

#include "doctest.h"

#include "crackscope/error.hpp"
#include "support.hpp"

using namespace crackscope;
using testsupport::TempDir;

TEST_CASE("pgm read: format definition") {
  TempDir dir("raster");
  const std::string bytes = std::string("P5\n2 2\n255\n") + '\0' + '\xff' + '\x80' + '\x40';
  std::ofstream(dir.file("a.pgm"), std::ios::binary) << bytes;
  const Raster r = read_image(dir.file("a.pgm"));
  CHECK(r.width == 2);
  CHECK(r.height == 2);
  CHECK(r.channels == 1);
  CHECK(r.samples == std::vector<std::uint8_t>{0, 255, 128, 64});
}

TEST_CASE("ppm read: one red pixel") {
  TempDir dir("raster");
  std::ofstream(dir.file("red.ppm"), std::ios::binary)
      << std::string("P6\n1 1\n255\n") << '\xff' << '\0' << '\0';
  const Raster r = read_image(dir.file("red.ppm"));
  CHECK(r.channels == 3);
  CHECK(r.samples == std::vector<std::uint8_t>{255, 0, 0});
}

TEST_CASE("pgm write: exact bytes") {
  TempDir dir("raster");
  write_image(Raster(1, 1, 1, {7}), dir.file("b.pgm"));
  CHECK(testsupport::read_file(dir.file("b.pgm")) == std::string("P5\n1 1\n255\n") + '\x07');
}

TEST_CASE("write/read round-trip is bit-exact") {
  TempDir dir("raster");
  Rng rng(Seed{41});
  for (int trial = 0; trial < 20; ++trial) {
    const int c = rng.next_bool() ? 1 : 3;
    const Raster r = testsupport::random_raster(1 + static_cast<int>(rng.next_below(40)),
                                                1 + static_cast<int>(rng.next_below(40)), c, rng);
    write_image(r, dir.file("t.img"));
    CHECK(read_image(dir.file("t.img")) == r);
  }
}

TEST_CASE("invalid rasters and malformed files are rejected with offsets") {
  TempDir dir("raster");
  CHECK_THROWS_AS(Raster(1, 1, 2), DataError);

  std::ofstream(dir.file("bad_magic.pgm"), std::ios::binary) << "P3\n1 1\n255\n0";
  CHECK_THROWS_WITH_AS(read_image(dir.file("bad_magic.pgm")),
                       doctest::Contains("at byte offset 0"), DataError);

  std::ofstream(dir.file("bad_maxval.pgm"), std::ios::binary) << "P5\n1 1\n65535\n00";
  CHECK_THROWS_WITH_AS(read_image(dir.file("bad_maxval.pgm")),
                       doctest::Contains("maxval"), DataError);

  std::ofstream(dir.file("short.pgm"), std::ios::binary) << "P5\n2 2\n255\nab";
  CHECK_THROWS_WITH_AS(read_image(dir.file("short.pgm")),
                       doctest::Contains("truncated payload"), DataError);
}

TEST_CASE("grayscale conversion") {
  CHECK(to_grayscale(Raster(1, 1, 3, {255, 255, 255})).samples[0] == 255);
  CHECK(to_grayscale(Raster(1, 1, 3, {255, 0, 0})).samples[0] == 76);
  CHECK(to_grayscale(Raster(1, 1, 3, {0, 0, 0})).samples[0] == 0);

  // 1-channel passthrough
  const Raster gray(2, 1, 1, {10, 20});
  CHECK(to_grayscale(gray) == gray);

  // idempotent through channel replication
  Rng rng(Seed{7});
  const Raster rgb = testsupport::random_raster(9, 5, 3, rng);
  const Raster once = to_grayscale(rgb);
  CHECK(to_grayscale(replicate_channels(once)) == once);
}

TEST_CASE("tiling") {
  Rng rng(Seed{3});
  const Raster exact = testsupport::random_raster(454, 454, 1, rng);
  const TileGrid g1 = tile_grid(exact, 227);
  CHECK(g1.rows == 2);
  CHECK(g1.cols == 2);

  const Raster uneven = testsupport::random_raster(500, 300, 3, rng);
  const TileGrid g2 = tile_grid(uneven, 227);
  CHECK(g2.rows == 1);
  CHECK(g2.cols == 2);

  CHECK_THROWS_AS(tile_grid(testsupport::random_raster(226, 226, 1, rng), 227), DataError);

  // partition: every covered pixel appears in exactly one tile
  const Raster src = testsupport::random_raster(30, 20, 1, rng);
  const TileGrid g = tile_grid(src, 10);
  std::vector<int> seen(static_cast<std::size_t>(src.width) * src.height, 0);
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c) {
      const Raster tile = extract_tile(src, g, r, c);
      for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) {
          const int fx = c * 10 + x, fy = r * 10 + y;
          CHECK(tile.at(x, y) == src.at(fx, fy));
          ++seen[static_cast<std::size_t>(fy) * src.width + fx];
        }
    }
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      CHECK(seen[static_cast<std::size_t>(y) * src.width + x] == (x < 30 && y < 20 ? 1 : 0));
}

TEST_CASE("bilinear resize") {
  Rng rng(Seed{11});
  const Raster r = testsupport::random_raster(13, 9, 3, rng);
  CHECK(bilinear_resize(r, 13, 9) == r);  // identity at same dims

  const Raster row(2, 1, 1, {0, 255});
  const Raster widened = bilinear_resize(row, 3, 1);
  CHECK(widened.samples == std::vector<std::uint8_t>{0, 128, 255});

  const Raster constant(3, 3, 1, std::vector<std::uint8_t>(9, 77));
  const Raster scaled = bilinear_resize(constant, 7, 5);
  for (auto v : scaled.samples) CHECK(v == 77);

  // output stays within input bounds (+-1 for rounding)
  const Raster big = bilinear_resize(r, 29, 17);
  std::uint8_t lo = 255, hi = 0;
  for (auto v : r.samples) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (auto v : big.samples) {
    CHECK(v + 1 >= lo);
    CHECK(v <= hi + 1);
  }
}

TEST_CASE("contrast stretch") {
  // already spanning with exact percentiles -> unchanged
  std::vector<std::uint8_t> ramp(256);
  for (int i = 0; i < 256; ++i) ramp[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i);
  const Raster full(16, 16, 1, ramp);
  CHECK(contrast_stretch(full, 0.0, 100.0) == full);

  const Raster constant(4, 4, 1, std::vector<std::uint8_t>(16, 99));
  CHECK(contrast_stretch(constant) == constant);  // degenerate window

  const Raster twoLevel(2, 1, 1, {100, 150});
  const Raster stretched = contrast_stretch(twoLevel, 0.0, 100.0);
  CHECK(stretched.samples == std::vector<std::uint8_t>{0, 255});

  // monotone map: the induced value->value table never decreases
  Rng rng(Seed{5});
  const Raster noisy = testsupport::random_raster(32, 32, 1, rng);
  const Raster out = contrast_stretch(noisy, 5.0, 95.0);
  std::array<int, 256> mapped;
  mapped.fill(-1);
  for (std::size_t i = 0; i < noisy.sample_count(); ++i)
    mapped[noisy.samples[i]] = out.samples[i];
  int prev = -1;
  for (int v = 0; v < 256; ++v) {
    if (mapped[v] < 0) continue;
    CHECK(mapped[v] >= prev);
    prev = mapped[v];
  }
}
