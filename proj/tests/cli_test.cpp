#include "crackscope/cli.hpp"

#include <string>
#include <vector>

#include "doctest.h"

#include "crackscope/dataset.hpp"
#include "crackscope/raster.hpp"
#include "support.hpp"

using namespace crackscope;
using testsupport::TempDir;

namespace {

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"crackscope"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("unknown subcommand is a usage error") {
  CHECK(run({"frobnicate"}) == 1);
  CHECK(run({}) == 1);
}

TEST_CASE("theory surfaces the closed-form values") {
  TempDir dir("cli");
  const std::string out = dir.file("theory.txt").string();
  CHECK(run({"theory", "--fiber-length-mm", "12", "--fiber-radius-mm", "0.02",
             "--fiber-vol-frac", "0.02", "--matrix-vol-frac", "0.98",
             "--matrix-modulus-gpa", "20", "--matrix-fail-strain", "0.0001",
             "--bond-mpa", "1.5", "--snubbing-coeff", "0", "--out", out}) == 0);
  const std::string text = testsupport::read_file(out);
  CHECK(text.find("g: 0.5") != std::string::npos);

  // saturation violation surfaces as a numeric failure (exit 3)
  CHECK(run({"theory", "--fiber-length-mm", "12", "--fiber-radius-mm", "0.02",
             "--fiber-vol-frac", "0.02", "--matrix-vol-frac", "0.98",
             "--matrix-modulus-gpa", "20", "--matrix-fail-strain", "0.05",
             "--bond-mpa", "1.5", "--snubbing-coeff", "0"}) == 3);
}

TEST_CASE("synth -> stats -> fit pipeline completes") {
  TempDir dir("cli");
  const std::string outDir = dir.file("run").string();
  CHECK(run({"synth", "--out-dir", outDir, "--frames", "8", "--cracks", "2", "--width", "160",
             "--height", "192", "--window", "32", "--seed", "7", "--bg-noise", "4"}) == 0);
  REQUIRE(std::filesystem::exists(dir.file("run") / "frames.csv"));
  REQUIRE(std::filesystem::exists(dir.file("run") / "truth.json"));

  const std::string series = dir.file("series.csv").string();
  CHECK(run({"stats", "--frames", (dir.file("run") / "frames.csv").string(), "--classifier",
             "adt", "--theta-pix", "40", "--window", "32", "--out", series, "--pattern-out",
             dir.file("pattern.json").string()}) == 0);
  const std::string csv = testsupport::read_file(series);
  CHECK(csv.rfind("frameIndex,", 0) == 0);

  const std::string fitOut = dir.file("fit.json").string();
  CHECK(run({"fit", "--series", series, "--kind", "trilinear", "--out", fitOut}) == 0);
  CHECK(testsupport::read_file(fitOut).find("cd_max_per_m") != std::string::npos);
}

TEST_CASE("config files act as defaults and reject unknown keys") {
  TempDir dir("cli");
  std::ofstream(dir.file("good.cfg")) << "# defaults\nfiber-length-mm=12\nsnubbing-coeff=0\n";
  const std::string out = dir.file("t.txt").string();
  CHECK(run({"--config", dir.file("good.cfg").string(), "theory", "--fiber-radius-mm", "0.02",
             "--fiber-vol-frac", "0.02", "--matrix-vol-frac", "0.98", "--matrix-modulus-gpa",
             "20", "--matrix-fail-strain", "0.0001", "--bond-mpa", "1.5", "--out", out}) == 0);
  CHECK(testsupport::read_file(out).find("g: 0.5") != std::string::npos);

  std::ofstream(dir.file("bad.cfg")) << "not-a-real-key=1\n";
  CHECK(run({"--config", dir.file("bad.cfg").string(), "theory", "--fiber-length-mm", "12",
             "--fiber-radius-mm", "0.02", "--fiber-vol-frac", "0.02", "--matrix-vol-frac",
             "0.98", "--matrix-modulus-gpa", "20", "--matrix-fail-strain", "0.0001",
             "--bond-mpa", "1.5", "--snubbing-coeff", "0"}) == 1);

  // command line beats config
  std::ofstream(dir.file("override.cfg")) << "snubbing-coeff=9\n";
  const std::string out2 = dir.file("t2.txt").string();
  CHECK(run({"--config", dir.file("override.cfg").string(), "theory", "--fiber-length-mm", "12",
             "--fiber-radius-mm", "0.02", "--fiber-vol-frac", "0.02", "--matrix-vol-frac",
             "0.98", "--matrix-modulus-gpa", "20", "--matrix-fail-strain", "0.0001",
             "--bond-mpa", "1.5", "--snubbing-coeff", "0", "--out", out2}) == 0);
  CHECK(testsupport::read_file(out2).find("g: 0.5") != std::string::npos);
}

TEST_CASE("identical seeds give byte-identical artifacts") {
  TempDir dir("cli");
  const std::string dirA = dir.file("a").string();
  const std::string dirB = dir.file("b").string();
  for (const std::string& d : {dirA, dirB})
    CHECK(run({"synth", "--out-dir", d, "--frames", "3", "--cracks", "1", "--width", "96",
               "--height", "96", "--window", "32", "--seed", "12345"}) == 0);
  // frames.csv embeds the differing output paths; the pixel and truth
  // artifacts must match byte for byte
  CHECK(testsupport::read_file(dir.file("a") / "frame_000.pgm") ==
        testsupport::read_file(dir.file("b") / "frame_000.pgm"));
  CHECK(testsupport::read_file(dir.file("a") / "frame_002.pgm") ==
        testsupport::read_file(dir.file("b") / "frame_002.pgm"));
  CHECK(testsupport::read_file(dir.file("a") / "truth.json") ==
        testsupport::read_file(dir.file("b") / "truth.json"));
}

TEST_CASE("bad data paths exit with the data error code") {
  CHECK(run({"predict", "--manifest", "/nonexistent/manifest.tsv"}) == 2);
}

TEST_CASE("train/predict/eval/roc/heatmap chain through files") {
  TempDir dir("cli");
  const std::string tilesDir = dir.file("tiles").string();
  CHECK(run({"synth", "--out-dir", tilesDir, "--tiles", "16", "--seed", "21",
             "--bg-noise", "5"}) == 0);
  const std::string manifest = (dir.file("tiles") / "tiles.manifest").string();
  REQUIRE(std::filesystem::exists(manifest));

  CHECK(run({"split", "--manifest", manifest, "--out-prefix", dir.file("part").string(),
             "--seed", "3"}) == 0);
  const std::string trainManifest = dir.file("part").string() + ".train.manifest";
  const std::string testManifest = dir.file("part").string() + ".test.manifest";

  const std::string sfnnPrefix = dir.file("sfnn").string();
  CHECK(run({"train-sfnn", "--train", trainManifest, "--val",
             dir.file("part").string() + ".val.manifest", "--variant", "bnw", "--epochs", "2",
             "--seed", "5", "--out-prefix", sfnnPrefix}) == 0);
  REQUIRE(std::filesystem::exists(sfnnPrefix + ".topology.json"));
  REQUIRE(std::filesystem::exists(sfnnPrefix + ".weights.csw"));

  const std::string predictions = dir.file("pred.tsv").string();
  CHECK(run({"predict", "--manifest", testManifest, "--classifier", "sfnn-bnw", "--topology",
             sfnnPrefix + ".topology.json", "--weights", sfnnPrefix + ".weights.csw", "--out",
             predictions}) == 0);
  CHECK(testsupport::read_file(predictions).rfind("recordIndex\t", 0) == 0);

  const std::string reportOut = dir.file("report.json").string();
  CHECK(run({"eval", "--predictions", predictions, "--manifest", testManifest, "--json",
             "--out", reportOut}) == 0);
  CHECK(testsupport::read_file(reportOut).find("\"accuracy\"") != std::string::npos);

  const std::string rocOut = dir.file("roc.csv").string();
  CHECK(run({"roc", "--predictions", predictions, "--manifest", testManifest, "--out",
             rocOut}) == 0);
  CHECK(testsupport::read_file(rocOut).find("# auc,") != std::string::npos);

  const std::string headPrefix = dir.file("head").string();
  CHECK(run({"train-head", "--train", trainManifest, "--desk-backbone", "--epochs", "2",
             "--seed", "5", "--out-prefix", headPrefix}) == 0);

  // the combined graph serves the cnn-head classifier; adt needs no model
  CHECK(run({"predict", "--manifest", testManifest, "--classifier", "cnn-head", "--topology",
             headPrefix + ".topology.json", "--weights", headPrefix + ".weights.csw", "--out",
             dir.file("pred_head.tsv").string(), "--jobs", "2"}) == 0);
  CHECK(run({"predict", "--manifest", testManifest, "--classifier", "adt", "--out",
             dir.file("pred_adt.tsv").string()}) == 0);

  // pick any materialized P tile for the heatmap
  std::string tilePath;
  {
    const DatasetManifest loaded = load_manifest(manifest);
    for (const auto& rec : loaded.records)
      if (rec.label == Label::P) {
        tilePath = rec.path;
        break;
      }
  }
  REQUIRE(!tilePath.empty());
  const std::string heatOut = dir.file("heat.pgm").string();
  CHECK(run({"heatmap", "--topology", headPrefix + ".topology.json", "--weights",
             headPrefix + ".weights.csw", "--in", tilePath, "--out", heatOut, "--overlay",
             dir.file("overlay.ppm").string()}) == 0);
  const Raster heat = read_image(heatOut);
  CHECK(heat.width == 227);
  CHECK(heat.channels == 1);
  CHECK(read_image(dir.file("overlay.ppm")).channels == 3);
}

TEST_CASE("augment subcommand expands a manifest on disk") {
  TempDir dir("cli");
  const std::string tilesDir = dir.file("tiles").string();
  CHECK(run({"synth", "--out-dir", tilesDir, "--tiles", "4", "--window", "48",
             "--seed", "9"}) == 0);
  const std::string manifest = (dir.file("tiles") / "tiles.manifest").string();
  const std::string grown = dir.file("grown.manifest").string();
  CHECK(run({"augment", "--manifest", manifest, "--num-p", "2", "--num-n", "2", "--seed", "4",
             "--out", grown}) == 0);
  const DatasetManifest loaded = load_manifest(grown);
  CHECK(loaded.records.size() == 12);
  std::size_t modified = 0;
  for (const auto& rec : loaded.records) {
    if (rec.provenance.rfind("modified:", 0) == 0) ++modified;
    CHECK(resolve_tile(rec, 48).width == 48);  // every record resolves from disk
  }
  CHECK(modified == 4);
}

TEST_CASE("tile subcommand cuts and saves tiles") {
  TempDir dir("cli");
  Rng rng(Seed{4});
  write_image(testsupport::random_raster(96, 64, 1, rng), dir.file("img.pgm"));
  CHECK(run({"tile", "--in", dir.file("img.pgm").string(), "--out-dir",
             dir.file("tiles").string(), "--window", "32"}) == 0);
  CHECK(std::filesystem::exists(dir.file("tiles") / "tile_r001_c002.pgm"));
  CHECK(!std::filesystem::exists(dir.file("tiles") / "tile_r002_c000.pgm"));
}
