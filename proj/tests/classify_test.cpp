#include "crackscope/classify.hpp"

#include "doctest.h"

#include "crackscope/error.hpp"
#include "support.hpp"

using namespace crackscope;

namespace {

std::array<std::uint64_t, 256> hist_of(std::initializer_list<std::pair<int, std::uint64_t>> kv) {
  std::array<std::uint64_t, 256> h{};
  for (const auto& [v, n] : kv) h[static_cast<std::size_t>(v)] = n;
  return h;
}

}  // namespace

TEST_CASE("otsu: bimodal, constant, and extreme histograms") {
  const auto bimodal = hist_of({{50, 128}, {200, 128}});
  const int th = otsu_threshold(bimodal);
  CHECK(th >= 50);
  CHECK(th <= 199);
  CHECK(th == testsupport::brute_force_otsu(bimodal));

  CHECK(otsu_threshold(hist_of({{128, 512}})) == 128);

  const auto extremes = hist_of({{0, 10}, {255, 10}});
  CHECK(otsu_threshold(extremes) == testsupport::brute_force_otsu(extremes));
  CHECK(otsu_threshold(extremes) == 127);  // tie-average of splits 0..254

  CHECK_THROWS_AS(otsu_threshold(std::array<std::uint64_t, 256>{}), DataError);
}

TEST_CASE("otsu equals the exhaustive oracle on random patches") {
  Rng rng(Seed{2024});
  for (int trial = 0; trial < 100; ++trial) {
    const Raster patch = testsupport::random_raster(16, 16, 1, rng);
    const auto hist = intensity_histogram(patch);
    CHECK(otsu_threshold(hist) == testsupport::brute_force_otsu(hist));
  }
}

TEST_CASE("adt: crack pixels below the threshold flip the tile positive") {
  // constant tile -> N
  const Raster constant(16, 16, 1, std::vector<std::uint8_t>(256, 180));
  CHECK(adt_classify(constant).label() == Label::N);

  // white tile with one black line -> P
  Raster lined(32, 32, 1, std::vector<std::uint8_t>(1024, 250));
  for (int x = 0; x < 32; ++x) lined.at(x, 16) = 5;
  const Prediction p = adt_classify(lined);
  CHECK(p.label() == Label::P);
  CHECK(p.probP == 1.0);

  // any pixel below its own otsu threshold -> P by the literal rule
  Rng rng(Seed{6});
  const Raster noisy = testsupport::random_raster(16, 16, 1, rng);
  const auto hist = intensity_histogram(noisy);
  const int th = otsu_threshold(hist);
  std::uint64_t below = 0;
  for (int v = 0; v < th; ++v) below += hist[v];
  CHECK(adt_classify(noisy).label() == (below >= 1 ? Label::P : Label::N));

  // a large theta_pix makes the same tile negative
  CHECK(adt_classify(lined, AdtParams{64}).label() == Label::N);
}

TEST_CASE("prediction tie goes to P") {
  CHECK(Prediction{0.5, 0.5}.label() == Label::P);
  CHECK(Prediction{0.4999, 0.5001}.label() == Label::N);
}

TEST_CASE("predict_dataset keeps manifest order and count") {
  DatasetManifest m;
  m.window = 8;
  for (int i = 0; i < 7; ++i) {
    SegmentRecord rec;
    rec.label = Label::N;
    const std::uint8_t shade = static_cast<std::uint8_t>(10 + 30 * i);
    rec.pixels = std::make_shared<Raster>(8, 8, 1, std::vector<std::uint8_t>(64, shade));
    m.records.push_back(std::move(rec));
  }
  const auto rows = predict_dataset([](const Raster&) { return Prediction{0.5, 0.5}; }, m, 3);
  REQUIRE(rows.size() == 7);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].recordIndex == i);
    CHECK(rows[i].label == Label::P);  // documented tie rule
  }

  // constant tiles under adt -> all N
  const auto adtRows = predict_dataset([](const Raster& t) { return adt_classify(t); }, m, 1);
  for (const auto& r : adtRows) CHECK(r.label == Label::N);

  // fan-out does not change the table
  const auto serial = predict_dataset([](const Raster& t) { return adt_classify(t); }, m, 1);
  const auto fanned = predict_dataset([](const Raster& t) { return adt_classify(t); }, m, 4);
  REQUIRE(serial.size() == fanned.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].recordIndex == fanned[i].recordIndex);
    CHECK(serial[i].probP == fanned[i].probP);
    CHECK(serial[i].label == fanned[i].label);
  }
}

TEST_CASE("prediction table round-trips through its text form") {
  std::vector<PredictionRow> rows{{0, 0.75, 0.25, Label::P}, {1, 0.1, 0.9, Label::N}};
  const auto parsed = parse_predictions(format_predictions(rows));
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0].probP == doctest::Approx(0.75));
  CHECK(parsed[1].label == Label::N);
}
