#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "crackscope/raster.hpp"
#include "crackscope/rng.hpp"

namespace crackscope {

enum class Label : char { P = 'P', N = 'N' };

inline char label_char(Label l) { return static_cast<char>(l); }
Label parse_label(char c);

// One labeled window-sized tile. The tile either lives in a file (standalone
// tile when row/col are -1, otherwise tile (row, col) of a larger image) or
// directly in memory (pixels set), which is how generated datasets travel
// between pipeline stages without touching disk.
struct SegmentRecord {
  std::string path;
  int row = -1;
  int col = -1;
  Label label = Label::N;
  std::string provenance = "original";  // "original" or "modified:<Kind>"
  std::string source;                   // free origin tag
  std::shared_ptr<const Raster> pixels;
};

struct DatasetManifest {
  int window = 227;
  std::vector<SegmentRecord> records;

  std::size_t count(Label l) const;
};

struct SplitSpec {
  double testFrac = 0.10;
  double trainFracOfRemainder = 0.7;
  Seed seed;
};

struct SplitResult {
  DatasetManifest train;
  DatasetManifest val;
  DatasetManifest test;
};

// Loads the pixels behind a record; the result is window x window.
Raster resolve_tile(const SegmentRecord& record, int window);

DatasetManifest annotate(const std::vector<std::string>& tilePaths,
                         const std::vector<Label>& labels, int window = 227);

// Stratified split: per label, floor(testFrac*n) records go to test, then
// floor(trainFracOfRemainder*rest) to train, the remainder to val. Partitions
// are disjoint, exhaustive, and deterministic under the seed.
SplitResult split_dataset(const DatasetManifest& manifest, const SplitSpec& spec);

// Subsamples the majority class uniformly without replacement down to the
// minority count; the minority class is untouched.
DatasetManifest balance_dataset(const DatasetManifest& manifest, Seed seed);

// Text manifest: header "#crackscope-manifest v1 window=<px>", then one
// tab-separated record per line (path, row, col, label, provenance, source).
// Records that only live in memory are materialized as PGM/PPM files under
// tileDir ("<stem>_tiles" next to the manifest by default).
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path,
                   const std::filesystem::path& tileDir = {});
DatasetManifest load_manifest(const std::filesystem::path& path);

}  // namespace crackscope
