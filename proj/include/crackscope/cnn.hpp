#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "crackscope/classify.hpp"
#include "crackscope/mlp.hpp"
#include "crackscope/raster.hpp"
#include "crackscope/rng.hpp"

namespace crackscope {

// Dense activation block, [h][w][c] interleaved like Raster. Weights are
// float32 (the on-disk format); accumulation happens in double.
struct Tensor {
  int h = 0, w = 0, c = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int h_, int w_, int c_) : h(h_), w(w_), c(c_) {
    data.assign(static_cast<std::size_t>(h) * w * c, 0.0f);
  }
  float at(int y, int x, int ch) const {
    return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
  float& at(int y, int x, int ch) {
    return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
  std::size_t size() const { return data.size(); }
};

struct TensorShape {
  int h = 0, w = 0, c = 0;
  bool operator==(const TensorShape&) const = default;
  std::string str() const;
};

struct Conv2D {
  int outCh = 0, kH = 1, kW = 1;
  int strideH = 1, strideW = 1;
  int padH = 0, padW = 0;
  std::vector<float> weights;  // [outCh][inCh][kH][kW]
  std::vector<float> bias;     // [outCh]
};
struct BatchNorm {
  std::vector<float> gamma, beta, mean, var;  // per channel
  double eps = 1e-5;
};
struct Relu {};
struct MaxPool {
  int k = 2, stride = 2;
};
struct GlobalAvgPool {};
struct ResidualAdd {
  int fromLayer = -1;  // index of an earlier layer; -1 means the graph input
};
struct Dense {
  int out = 0;
  std::vector<float> weights;  // [out][in], input flattened [h][w][c]
  std::vector<float> bias;
};
struct Softmax {};

using CnnLayer =
    std::variant<Conv2D, BatchNorm, Relu, MaxPool, GlobalAvgPool, ResidualAdd, Dense, Softmax>;

// Forward-only network description. Layers run in order; every output is
// retained during a pass so residual links and taps can read it.
struct CnnGraph {
  int inH = 227, inW = 227, inC = 3;
  std::vector<CnnLayer> layers;
};

// Output shape after every layer, validating parameter shapes along the way.
// Shape errors name the layer index and both shapes.
std::vector<TensorShape> propagate_shapes(const CnnGraph& graph);

// Evaluates the graph; stopAtLayer returns that layer's activation instead of
// running to the end. Conv2D is direct cross-correlation with zero padding,
// BatchNorm runs in inference mode.
Tensor cnn_forward(const CnnGraph& graph, const Tensor& input,
                   std::optional<std::size_t> stopAtLayer = std::nullopt);

// Raster entry point: samples are scaled by 1/255 and the channel count is
// adapted (grayscale/replicate) to the graph input.
Tensor tensor_from_raster(const CnnGraph& graph, const Raster& tile);
Tensor cnn_forward(const CnnGraph& graph, const Raster& tile,
                   std::optional<std::size_t> stopAtLayer = std::nullopt);

// The last layer must be a 2-unit Softmax (unit 0 = P).
Prediction cnn_predict(const CnnGraph& graph, const Raster& tile);

// Final activation flattened to doubles; how transfer features are extracted
// from a backbone graph.
std::vector<double> cnn_features(const CnnGraph& graph, const Raster& tile);

// Mean (or max) over channels of the last Conv2D activation after any
// following BatchNorm/ReLU, min-max normalized to [0, 255] and bilinearly
// resized to the tile. A constant activation map yields an all-zero heatmap.
enum class HeatmapAgg { Mean, Max };
Raster activation_heatmap(const CnnGraph& graph, const Raster& tile,
                          HeatmapAgg agg = HeatmapAgg::Mean);

// Red overlay for visualization: out = (1-a)*original + a*red, a = heat/255.
Raster overlay_heatmap(const Raster& tile, const Raster& heatmap);

// Topology JSON + "CSW1" weight blob. Weight records are (layer index u32 LE,
// parameter count u64 LE, float32 LE payload), one per parameterized layer in
// order; conv weights are row-major (outCh, inCh, kH, kW), dense (out, in).
void save_cnn(const CnnGraph& graph, const std::filesystem::path& topologyPath,
              const std::filesystem::path& weightsPath);
CnnGraph load_cnn(const std::filesystem::path& weightsPath,
                  const std::filesystem::path& topologyPath);

// SFNN <-> graph bridge so perceptrons reuse the same serialization.
CnnGraph mlp_to_graph(const MlpModel& model, int window, int channels);
MlpModel mlp_from_graph(const CnnGraph& graph);

// Small fixed feature extractor for transfer-learning runs without a real
// pretrained backbone: filter bank conv + pooled seeded conv + global average.
CnnGraph make_desk_backbone(int inChannels, Seed seed);

// Appends a trained head (dense/relu stack + softmax) to a frozen backbone,
// producing a single deployable graph.
CnnGraph append_head(const CnnGraph& backbone, const MlpModel& head);

TileClassifier make_cnn_classifier(std::shared_ptr<const CnnGraph> graph);

}  // namespace crackscope
