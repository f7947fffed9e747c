#include "crackscope/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "crackscope/error.hpp"

namespace crackscope {

namespace {

// Seeded Fisher-Yates; std::shuffle is not bit-stable across standard libraries.
void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = rng.next_below(i);
    std::swap(idx[i - 1], idx[j]);
  }
}

std::vector<std::size_t> indices_of(const DatasetManifest& m, Label l) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m.records.size(); ++i)
    if (m.records[i].label == l) out.push_back(i);
  return out;
}

DatasetManifest take(const DatasetManifest& m, std::vector<std::size_t> idx) {
  std::sort(idx.begin(), idx.end());  // keep original manifest order
  DatasetManifest out;
  out.window = m.window;
  out.records.reserve(idx.size());
  for (std::size_t i : idx) out.records.push_back(m.records[i]);
  return out;
}

}  // namespace

Label parse_label(char c) {
  if (c == 'P') return Label::P;
  if (c == 'N') return Label::N;
  throw DataError(std::string("invalid label '") + c + "', expected P or N");
}

std::size_t DatasetManifest::count(Label l) const {
  std::size_t n = 0;
  for (const auto& r : records)
    if (r.label == l) ++n;
  return n;
}

Raster resolve_tile(const SegmentRecord& record, int window) {
  Raster tile;
  if (record.pixels) {
    tile = *record.pixels;
  } else if (record.row < 0 || record.col < 0) {
    tile = read_image(record.path);
  } else {
    const Raster image = read_image(record.path);
    const TileGrid grid = tile_grid(image, window);
    tile = extract_tile(image, grid, record.row, record.col);
  }
  if (tile.width != window || tile.height != window)
    throw DataError("tile '" + record.path + "' is " + std::to_string(tile.width) + "x" +
                    std::to_string(tile.height) + ", expected " + std::to_string(window) +
                    "x" + std::to_string(window));
  return tile;
}

DatasetManifest annotate(const std::vector<std::string>& tilePaths,
                         const std::vector<Label>& labels, int window) {
  if (tilePaths.size() != labels.size())
    throw DataError("annotate: " + std::to_string(tilePaths.size()) + " tiles but " +
                    std::to_string(labels.size()) + " labels");
  DatasetManifest out;
  out.window = window;
  out.records.reserve(tilePaths.size());
  for (std::size_t i = 0; i < tilePaths.size(); ++i) {
    SegmentRecord rec;
    rec.path = tilePaths[i];
    rec.label = labels[i];
    out.records.push_back(std::move(rec));
  }
  return out;
}

SplitResult split_dataset(const DatasetManifest& manifest, const SplitSpec& spec) {
  if (!(spec.testFrac > 0.0 && spec.testFrac < 1.0))
    throw DataError("testFrac must be in (0, 1)");
  if (!(spec.trainFracOfRemainder > 0.0 && spec.trainFracOfRemainder < 1.0))
    throw DataError("trainFracOfRemainder must be in (0, 1)");
  if (manifest.records.size() < 10)
    throw DataError("split needs at least 10 records");

  Rng rng(spec.seed);
  std::vector<std::size_t> trainIdx, valIdx, testIdx;
  for (Label l : {Label::P, Label::N}) {
    std::vector<std::size_t> idx = indices_of(manifest, l);
    if (idx.empty())
      throw DataError(std::string("split: class ") + label_char(l) + " has no records");
    shuffle_indices(idx, rng);
    const std::size_t nTest =
        static_cast<std::size_t>(std::floor(spec.testFrac * static_cast<double>(idx.size())));
    const std::size_t nRest = idx.size() - nTest;
    const std::size_t nTrain = static_cast<std::size_t>(
        std::floor(spec.trainFracOfRemainder * static_cast<double>(nRest)));
    testIdx.insert(testIdx.end(), idx.begin(), idx.begin() + nTest);
    trainIdx.insert(trainIdx.end(), idx.begin() + nTest, idx.begin() + nTest + nTrain);
    valIdx.insert(valIdx.end(), idx.begin() + nTest + nTrain, idx.end());
  }
  SplitResult out;
  out.train = take(manifest, std::move(trainIdx));
  out.val = take(manifest, std::move(valIdx));
  out.test = take(manifest, std::move(testIdx));
  return out;
}

DatasetManifest balance_dataset(const DatasetManifest& manifest, Seed seed) {
  const std::size_t nP = manifest.count(Label::P);
  const std::size_t nN = manifest.count(Label::N);
  if (nP == 0 || nN == 0) throw DataError("balance: both classes must be non-empty");
  if (nP == nN) return manifest;

  const Label majority = nP > nN ? Label::P : Label::N;
  const std::size_t keep = std::min(nP, nN);
  std::vector<std::size_t> majIdx = indices_of(manifest, majority);
  Rng rng(seed);
  shuffle_indices(majIdx, rng);
  majIdx.resize(keep);

  std::vector<std::size_t> all = indices_of(manifest, majority == Label::P ? Label::N : Label::P);
  all.insert(all.end(), majIdx.begin(), majIdx.end());
  return take(manifest, std::move(all));
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path,
                   const std::filesystem::path& tileDir) {
  namespace fs = std::filesystem;
  fs::path dir = tileDir;
  std::vector<std::string> paths(manifest.records.size());

  // Materialize in-memory tiles first so the written manifest resolves.
  std::size_t serial = 0;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& rec = manifest.records[i];
    paths[i] = rec.path;
    if (!rec.pixels) continue;
    if (dir.empty()) {
      dir = path;
      dir.replace_extension();
      dir += "_tiles";
    }
    fs::create_directories(dir);
    char name[32];
    std::snprintf(name, sizeof name, "tile_%06zu.%s", serial++,
                  rec.pixels->channels == 1 ? "pgm" : "ppm");
    const fs::path tilePath = dir / name;
    write_image(*rec.pixels, tilePath);
    paths[i] = tilePath.string();
  }

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(path.string() + ": cannot open file for writing");
  out << "#crackscope-manifest v1 window=" << manifest.window << "\n";
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& rec = manifest.records[i];
    const bool tileOfImage = !rec.pixels && rec.row >= 0;
    out << paths[i] << '\t' << (tileOfImage ? rec.row : -1) << '\t'
        << (tileOfImage ? rec.col : -1) << '\t' << label_char(rec.label) << '\t'
        << rec.provenance << '\t' << rec.source << '\n';
  }
  if (!out) throw DataError(path.string() + ": write failed");
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open file");
  std::string line;
  if (!std::getline(in, line) || line.rfind("#crackscope-manifest v1 window=", 0) != 0)
    throw DataError(path.string() + ": missing manifest header");
  DatasetManifest out;
  out.window = std::stoi(line.substr(line.find("window=") + 7));

  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 6)
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 6 fields, got " +
                      std::to_string(fields.size()));
    SegmentRecord rec;
    rec.path = fields[0];
    rec.row = std::stoi(fields[1]);
    rec.col = std::stoi(fields[2]);
    if (fields[3].size() != 1)
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad label field");
    rec.label = parse_label(fields[3][0]);
    rec.provenance = fields[4];
    rec.source = fields[5];
    out.records.push_back(std::move(rec));
  }
  return out;
}

}  // namespace crackscope
