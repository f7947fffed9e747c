#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "crackscope/classify.hpp"
#include "crackscope/dataset.hpp"
#include "crackscope/rng.hpp"

namespace crackscope {

// Fully connected net with ReLU hidden layers and a softmax output pair
// (unit 0 = P, unit 1 = N). Weights are row-major [out][in], 64-bit.
struct MlpModel {
  std::vector<int> layerSizes;               // {dIn, 128, 128, 2} by default
  std::vector<std::vector<double>> weights;  // one matrix per layer
  std::vector<std::vector<double>> biases;
  bool scaleInputs = true;  // tile samples divided by 255 before the net

  static MlpModel shape(std::vector<int> sizes);
  int input_dim() const { return layerSizes.front(); }
  std::size_t parameter_count() const;
  void validate() const;
};

struct TrainConfig {
  double learningRate = 0.01;
  double momentum = 0.9;
  int batchSize = 32;
  int epochs = 10;
  Seed seed;
  bool scalePixels = true;
  // Stop after the first epoch whose validation accuracy reaches this value;
  // 0 disables. "Within n epochs" targets train faster with this set.
  double earlyStopValAcc = 0.0;

  void validate() const;
};

struct TrainTrace {
  std::vector<double> lossPerIteration;      // batch-mean cross entropy
  std::vector<double> valAccuracyPerEpoch;
  int epochsRun = 0;
};

// Row access to training samples without materializing a double matrix;
// fill() writes dim() doubles, already scaled.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual std::size_t dim() const = 0;
  virtual void fill(std::size_t i, double* dst) const = 0;
  virtual Label label(std::size_t i) const = 0;
};

enum class SfnnVariant { Bnw, Rgb };

// Resolves manifest tiles into packed 8-bit rows (grayscale for Bnw,
// interleaved RGB for Rgb), scaled by 1/255 on access when requested.
class TileSamples final : public SampleSource {
 public:
  TileSamples(const DatasetManifest& manifest, SfnnVariant variant, bool scale = true);
  std::size_t size() const override { return labels_.size(); }
  std::size_t dim() const override { return dim_; }
  void fill(std::size_t i, double* dst) const override;
  Label label(std::size_t i) const override { return labels_[i]; }

 private:
  std::size_t dim_ = 0;
  double scale_ = 1.0;
  std::vector<std::uint8_t> data_;
  std::vector<Label> labels_;
};

class VectorSamples final : public SampleSource {
 public:
  VectorSamples(std::vector<std::vector<double>> rows, std::vector<Label> labels);
  std::size_t size() const override { return labels_.size(); }
  std::size_t dim() const override { return dim_; }
  void fill(std::size_t i, double* dst) const override;
  Label label(std::size_t i) const override { return labels_[i]; }

 private:
  std::size_t dim_ = 0;
  std::vector<std::vector<double>> rows_;
  std::vector<Label> labels_;
};

// Mini-batch SGD with momentum on the summed cross entropy (batch gradients
// averaged). Weights start Glorot-uniform from cfg.seed, biases at zero; runs
// are deterministic given the seed. Throws NumericError with the iteration
// index if the loss goes non-finite.
std::pair<MlpModel, TrainTrace> train_mlp(const SampleSource& train, const SampleSource* val,
                                          const MlpModel& shapeTemplate, const TrainConfig& cfg);

std::pair<MlpModel, TrainTrace> mlp_train(const DatasetManifest& train,
                                          const DatasetManifest& val, const TrainConfig& cfg,
                                          const MlpModel& shapeTemplate,
                                          SfnnVariant variant = SfnnVariant::Bnw);

// Softmax probabilities (index 0 = P) for one already-scaled input row.
std::vector<double> mlp_forward(const MlpModel& model, const std::vector<double>& x);

// Tile is grayscale-converted or channel-replicated to match the model input.
Prediction mlp_predict(const MlpModel& model, const Raster& tile);

double accuracy_on(const MlpModel& model, const SampleSource& samples);

// Summed cross entropy over the batch and its analytic parameter gradient
// (flattened layer by layer: weights then biases).
double mlp_loss(const MlpModel& model, const std::vector<std::vector<double>>& xs,
                const std::vector<Label>& ys);
std::vector<double> mlp_loss_gradient(const MlpModel& model,
                                      const std::vector<std::vector<double>>& xs,
                                      const std::vector<Label>& ys);

// Max over parameters of |gA - gN| / max(1e-8, |gA| + |gN|) against central
// finite differences with step h.
double mlp_gradient_check(const MlpModel& model, const std::vector<std::vector<double>>& xs,
                          const std::vector<Label>& ys, double h);

// Transfer head over frozen backbone features: featureDim -> 128 -> 128 -> 2,
// trained exactly like train_mlp on the given vectors.
std::pair<MlpModel, TrainTrace> train_head(
    const std::vector<std::pair<std::vector<double>, Label>>& features, const TrainConfig& cfg);

TileClassifier make_mlp_classifier(std::shared_ptr<const MlpModel> model);

}  // namespace crackscope
