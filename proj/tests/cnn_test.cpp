#include "crackscope/cnn.hpp"

#include <cmath>

#include "doctest.h"

#include "crackscope/error.hpp"
#include "support.hpp"

#include "oracles.hpp"

using namespace crackscope;
using testsupport::naive_eval;
using testsupport::random_tensor;

TEST_CASE("1x1 identity convolution passes the input through") {
  CnnGraph graph;
  graph.inH = graph.inW = 5;
  graph.inC = 1;
  Conv2D conv;
  conv.outCh = 1;
  conv.weights = {1.0f};
  conv.bias = {0.0f};
  graph.layers.emplace_back(conv);
  Rng rng(Seed{1});
  const Tensor in = random_tensor(5, 5, 1, rng);
  const Tensor out = cnn_forward(graph, in);
  CHECK(out.data == in.data);
}

TEST_CASE("3x3 all-ones kernel on a constant image sums the neighborhood") {
  CnnGraph graph;
  graph.inH = graph.inW = 8;
  graph.inC = 1;
  Conv2D conv;
  conv.outCh = 1;
  conv.kH = conv.kW = 3;
  conv.padH = conv.padW = 1;
  conv.weights.assign(9, 1.0f);
  conv.bias = {0.0f};
  graph.layers.emplace_back(conv);
  Tensor in(8, 8, 1);
  for (float& v : in.data) v = 4.0f;
  const Tensor out = cnn_forward(graph, in);
  REQUIRE(out.h == 8);
  for (int y = 1; y < 7; ++y)
    for (int x = 1; x < 7; ++x) CHECK(out.at(y, x, 0) == doctest::Approx(36.0f));
  CHECK(out.at(0, 0, 0) == doctest::Approx(16.0f));  // zero padding at the corner
}

TEST_CASE("forward pass matches the naive reference on random graphs") {
  Rng rng(Seed{31337});
  for (int trial = 0; trial < 50; ++trial) {
    const int h = 6 + static_cast<int>(rng.next_below(11));
    const int w = 6 + static_cast<int>(rng.next_below(11));
    const int c = rng.next_bool() ? 3 : 1;
    const CnnGraph graph = testsupport::random_graph(h, w, c, 3, rng);
    const Tensor in = random_tensor(h, w, c, rng);
    const Tensor got = cnn_forward(graph, in);
    const Tensor want = naive_eval(graph, in);
    REQUIRE(got.data.size() == want.data.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < got.data.size(); ++i)
      worst = std::max(worst, std::abs(static_cast<double>(got.data[i]) - want.data[i]));
    CHECK(worst <= 1e-5);
  }
}

TEST_CASE("shape errors name the layer") {
  CnnGraph graph;
  graph.inH = graph.inW = 4;
  graph.inC = 1;
  Conv2D conv;
  conv.outCh = 1;
  conv.kH = conv.kW = 3;
  conv.weights.assign(5, 1.0f);  // wrong: needs 9
  conv.bias = {0.0f};
  graph.layers.emplace_back(conv);
  CHECK_THROWS_WITH_AS(propagate_shapes(graph), doctest::Contains("layer 0"), DataError);

  CnnGraph res;
  res.inH = res.inW = 4;
  res.inC = 1;
  res.layers.emplace_back(Relu{});
  res.layers.emplace_back(ResidualAdd{5});  // forward reference
  CHECK_THROWS_WITH_AS(propagate_shapes(res), doctest::Contains("earlier layer"), DataError);
}

TEST_CASE("residual add uses the recorded earlier activation") {
  CnnGraph graph;
  graph.inH = graph.inW = 4;
  graph.inC = 1;
  graph.layers.emplace_back(Relu{});
  graph.layers.emplace_back(ResidualAdd{-1});  // + input
  Rng rng(Seed{3});
  Tensor in = random_tensor(4, 4, 1, rng);
  const Tensor out = cnn_forward(graph, in);
  for (std::size_t i = 0; i < in.data.size(); ++i)
    CHECK(out.data[i] == doctest::Approx(std::max(0.0f, in.data[i]) + in.data[i]));
}

TEST_CASE("graph serialization round-trips bit-exactly") {
  testsupport::TempDir dir("cnn");
  Rng rng(Seed{12});
  const CnnGraph graph = make_desk_backbone(1, Seed{5});
  save_cnn(graph, dir.file("net.json"), dir.file("net.csw"));
  const CnnGraph loaded = load_cnn(dir.file("net.csw"), dir.file("net.json"));

  const Raster tile = testsupport::random_raster(227, 227, 1, rng);
  const Tensor a = cnn_forward(graph, tile);
  const Tensor b = cnn_forward(loaded, tile);
  CHECK(a.data == b.data);

  // saving the loaded graph reproduces the weight blob byte for byte
  save_cnn(loaded, dir.file("net2.json"), dir.file("net2.csw"));
  CHECK(testsupport::read_file(dir.file("net.csw")) ==
        testsupport::read_file(dir.file("net2.csw")));
}

TEST_CASE("weight file validation") {
  testsupport::TempDir dir("cnn");
  const CnnGraph graph = make_desk_backbone(1, Seed{5});
  save_cnn(graph, dir.file("net.json"), dir.file("net.csw"));

  const std::string blob = testsupport::read_file(dir.file("net.csw"));
  std::ofstream(dir.file("bad_magic.csw"), std::ios::binary) << ("XXXX" + blob.substr(4));
  CHECK_THROWS_WITH_AS(load_cnn(dir.file("bad_magic.csw"), dir.file("net.json")),
                       doctest::Contains("magic"), DataError);

  std::ofstream(dir.file("short.csw"), std::ios::binary) << blob.substr(0, blob.size() - 10);
  CHECK_THROWS_WITH_AS(load_cnn(dir.file("short.csw"), dir.file("net.json")),
                       doctest::Contains("bytes"), DataError);
}

TEST_CASE("perceptron graphs predict identically to the perceptron") {
  Rng rng(Seed{88});
  MlpModel model = MlpModel::shape({16 * 16, 8, 8, 2});
  for (auto& layer : model.weights)
    for (double& w : layer) w = rng.next_range(-0.05, 0.05);
  const Raster tile = testsupport::random_raster(16, 16, 1, rng);
  const Prediction direct = mlp_predict(model, tile);
  const CnnGraph graph = mlp_to_graph(model, 16, 1);
  const Prediction viaGraph = cnn_predict(graph, tile);
  CHECK(viaGraph.probP == doctest::Approx(direct.probP).epsilon(1e-6));

  const MlpModel back = mlp_from_graph(graph);
  CHECK(back.layerSizes == model.layerSizes);
}

TEST_CASE("activation heatmap highlights the dark line under an identity conv") {
  CnnGraph graph;
  graph.inH = graph.inW = 32;
  graph.inC = 1;
  Conv2D conv;
  conv.outCh = 1;
  conv.weights = {-1.0f};  // dark line -> strongest activation
  conv.bias = {0.0f};
  graph.layers.emplace_back(conv);

  Raster tile(32, 32, 1, std::vector<std::uint8_t>(1024, 220));
  for (int x = 0; x < 32; ++x) tile.at(x, 9) = 10;
  const Raster heat = activation_heatmap(graph, tile);
  CHECK(heat.width == 32);
  CHECK(heat.height == 32);
  for (int x = 0; x < 32; ++x) {
    CHECK(heat.at(x, 9) == 255);
    CHECK(heat.at(x, 20) <= 1);
  }
}

TEST_CASE("constant activations produce an all-zero heatmap") {
  CnnGraph graph;
  graph.inH = graph.inW = 16;
  graph.inC = 1;
  Conv2D conv;
  conv.outCh = 1;
  conv.kH = conv.kW = 1;
  conv.weights = {1.0f};
  conv.bias = {0.0f};
  graph.layers.emplace_back(conv);
  const Raster constant(16, 16, 1, std::vector<std::uint8_t>(256, 128));
  const Raster heat = activation_heatmap(graph, constant);
  for (auto v : heat.samples) CHECK(v == 0);
}

TEST_CASE("stopAtLayer taps intermediate activations") {
  const CnnGraph graph = make_desk_backbone(1, Seed{5});
  Rng rng(Seed{6});
  const Raster tile = testsupport::random_raster(227, 227, 1, rng);
  const Tensor conv1 = cnn_forward(graph, tile, 0);
  CHECK(conv1.c == 8);
  CHECK(conv1.h == 57);
  const Tensor full = cnn_forward(graph, tile);
  CHECK(full.h == 1);
  CHECK(full.c == 16);
}
