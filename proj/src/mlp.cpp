#include "crackscope/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "crackscope/error.hpp"

namespace crackscope {

namespace {

constexpr double kLogClamp = 1e-12;

// z[o][b] = bias[o] + sum_i W[o][i] * a[i][b]; batch-minor layout keeps the
// inner loop free of reductions so it vectorizes.
void forward_layer(const double* W, const double* bias, const double* a, double* z,
                   int in, int out, int B) {
  for (int o = 0; o < out; ++o) {
    double* zr = z + static_cast<std::size_t>(o) * B;
    for (int b = 0; b < B; ++b) zr[b] = bias[o];
    const double* wr = W + static_cast<std::size_t>(o) * in;
    for (int i = 0; i < in; ++i) {
      const double w = wr[i];
      const double* ar = a + static_cast<std::size_t>(i) * B;
      for (int b = 0; b < B; ++b) zr[b] += w * ar[b];
    }
  }
}

void relu_inplace(double* a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) a[i] = a[i] > 0.0 ? a[i] : 0.0;
}

// Softmax over units, independently per batch column; max-subtracted.
void softmax_columns(double* z, int units, int B) {
  for (int b = 0; b < B; ++b) {
    double mx = z[b];
    for (int o = 1; o < units; ++o) mx = std::max(mx, z[static_cast<std::size_t>(o) * B + b]);
    double sum = 0.0;
    for (int o = 0; o < units; ++o) {
      double& v = z[static_cast<std::size_t>(o) * B + b];
      v = std::exp(v - mx);
      sum += v;
    }
    for (int o = 0; o < units; ++o) z[static_cast<std::size_t>(o) * B + b] /= sum;
  }
}

// t[i][b] = sum_o W[o][i] * delta[o][b]
void backward_input(const double* W, const double* delta, double* t, int in, int out, int B) {
  std::fill(t, t + static_cast<std::size_t>(in) * B, 0.0);
  for (int o = 0; o < out; ++o) {
    const double* dr = delta + static_cast<std::size_t>(o) * B;
    const double* wr = W + static_cast<std::size_t>(o) * in;
    for (int i = 0; i < in; ++i) {
      const double w = wr[i];
      double* tr = t + static_cast<std::size_t>(i) * B;
      for (int b = 0; b < B; ++b) tr[b] += w * dr[b];
    }
  }
}

double row_dot(const double* x, const double* y, int n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += x[i] * y[i];
    s1 += x[i + 1] * y[i + 1];
    s2 += x[i + 2] * y[i + 2];
    s3 += x[i + 3] * y[i + 3];
  }
  double s = (s0 + s1) + (s2 + s3);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

// SGD + momentum step from batch-sum gradients scaled by invB, fused so the
// (large) gradient matrix is never materialized.
void update_layer(double* W, double* vW, double* bias, double* vb, const double* delta,
                  const double* a, int in, int out, int B, double lr, double mom,
                  double invB) {
  for (int o = 0; o < out; ++o) {
    const double* dr = delta + static_cast<std::size_t>(o) * B;
    double* wr = W + static_cast<std::size_t>(o) * in;
    double* vr = vW + static_cast<std::size_t>(o) * in;
    for (int i = 0; i < in; ++i) {
      const double g = row_dot(dr, a + static_cast<std::size_t>(i) * B, B) * invB;
      vr[i] = mom * vr[i] - lr * g;
      wr[i] += vr[i];
    }
    double s = 0.0;
    for (int b = 0; b < B; ++b) s += dr[b];
    vb[o] = mom * vb[o] - lr * s * invB;
    bias[o] += vb[o];
  }
}

int class_index(Label l) { return l == Label::P ? 0 : 1; }

struct BatchBuffers {
  std::vector<std::vector<double>> acts;    // acts[0] = input, post-activation above
  std::vector<std::vector<double>> deltas;  // per weighted layer
};

void size_buffers(BatchBuffers& buf, const std::vector<int>& sizes, int B) {
  buf.acts.resize(sizes.size());
  buf.deltas.resize(sizes.size() - 1);
  for (std::size_t l = 0; l < sizes.size(); ++l)
    buf.acts[l].assign(static_cast<std::size_t>(sizes[l]) * B, 0.0);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
    buf.deltas[l].assign(static_cast<std::size_t>(sizes[l + 1]) * B, 0.0);
}

// Forward through all layers; returns the batch-summed cross entropy and
// leaves softmax probabilities in the last activation buffer.
double forward_batch(const MlpModel& m, BatchBuffers& buf, const std::vector<int>& classes,
                     int B) {
  const std::size_t L = m.weights.size();
  for (std::size_t l = 0; l < L; ++l) {
    forward_layer(m.weights[l].data(), m.biases[l].data(), buf.acts[l].data(),
                  buf.acts[l + 1].data(), m.layerSizes[l], m.layerSizes[l + 1], B);
    if (l + 1 < L) relu_inplace(buf.acts[l + 1].data(), buf.acts[l + 1].size());
  }
  softmax_columns(buf.acts[L].data(), m.layerSizes[L], B);
  double loss = 0.0;
  for (int b = 0; b < B; ++b) {
    const double p = buf.acts[L][static_cast<std::size_t>(classes[b]) * B + b];
    loss += -std::log(std::max(p, kLogClamp));
  }
  return loss;
}

// Deltas for every weighted layer; the output delta is softmax - onehot and
// hidden deltas are masked by their (post-ReLU) activations.
void backward_batch(const MlpModel& m, BatchBuffers& buf, const std::vector<int>& classes,
                    int B) {
  const std::size_t L = m.weights.size();
  const int units = m.layerSizes[L];
  auto& dOut = buf.deltas[L - 1];
  for (int o = 0; o < units; ++o)
    for (int b = 0; b < B; ++b) {
      const std::size_t idx = static_cast<std::size_t>(o) * B + b;
      dOut[idx] = buf.acts[L][idx] - (classes[b] == o ? 1.0 : 0.0);
    }
  for (std::size_t l = L - 1; l > 0; --l) {
    backward_input(m.weights[l].data(), buf.deltas[l].data(), buf.deltas[l - 1].data(),
                   m.layerSizes[l], m.layerSizes[l + 1], B);
    auto& d = buf.deltas[l - 1];
    const auto& a = buf.acts[l];
    for (std::size_t i = 0; i < d.size(); ++i)
      if (a[i] <= 0.0) d[i] = 0.0;
  }
}

}  // namespace

MlpModel MlpModel::shape(std::vector<int> sizes) {
  if (sizes.size() < 2) throw DataError("MLP needs at least input and output layers");
  for (int s : sizes)
    if (s < 1) throw DataError("MLP layer sizes must be positive");
  if (sizes.back() != 2) throw DataError("MLP output layer must have 2 units (P, N)");
  MlpModel m;
  m.layerSizes = std::move(sizes);
  m.weights.resize(m.layerSizes.size() - 1);
  m.biases.resize(m.layerSizes.size() - 1);
  for (std::size_t l = 0; l + 1 < m.layerSizes.size(); ++l) {
    m.weights[l].assign(static_cast<std::size_t>(m.layerSizes[l]) * m.layerSizes[l + 1], 0.0);
    m.biases[l].assign(m.layerSizes[l + 1], 0.0);
  }
  return m;
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

void MlpModel::validate() const {
  if (layerSizes.size() < 2 || weights.size() != layerSizes.size() - 1 ||
      biases.size() != weights.size())
    throw DataError("MLP model: inconsistent layer bookkeeping");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].size() !=
        static_cast<std::size_t>(layerSizes[l]) * layerSizes[l + 1] ||
        biases[l].size() != static_cast<std::size_t>(layerSizes[l + 1]))
      throw DataError("MLP model: weight shape mismatch at layer " + std::to_string(l));
  }
}

void TrainConfig::validate() const {
  if (!(learningRate > 0.0)) throw DataError("learningRate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw DataError("momentum must be in [0, 1)");
  if (batchSize < 1) throw DataError("batchSize must be positive");
  if (epochs < 1) throw DataError("epochs must be positive");
}

TileSamples::TileSamples(const DatasetManifest& manifest, SfnnVariant variant, bool scale) {
  const int w = manifest.window;
  dim_ = static_cast<std::size_t>(w) * w * (variant == SfnnVariant::Rgb ? 3 : 1);
  scale_ = scale ? 1.0 / 255.0 : 1.0;
  data_.reserve(dim_ * manifest.records.size());
  labels_.reserve(manifest.records.size());
  for (const auto& rec : manifest.records) {
    Raster tile = resolve_tile(rec, w);
    tile = variant == SfnnVariant::Rgb ? replicate_channels(tile) : to_grayscale(tile);
    data_.insert(data_.end(), tile.samples.begin(), tile.samples.end());
    labels_.push_back(rec.label);
  }
}

void TileSamples::fill(std::size_t i, double* dst) const {
  const std::uint8_t* src = data_.data() + i * dim_;
  for (std::size_t k = 0; k < dim_; ++k) dst[k] = src[k] * scale_;
}

VectorSamples::VectorSamples(std::vector<std::vector<double>> rows, std::vector<Label> labels)
    : rows_(std::move(rows)), labels_(std::move(labels)) {
  if (rows_.size() != labels_.size()) throw DataError("VectorSamples: rows/labels mismatch");
  if (!rows_.empty()) dim_ = rows_.front().size();
  for (const auto& r : rows_)
    if (r.size() != dim_) throw DataError("VectorSamples: ragged feature rows");
}

void VectorSamples::fill(std::size_t i, double* dst) const {
  std::memcpy(dst, rows_[i].data(), dim_ * sizeof(double));
}

namespace {

// Training standardizes each input dimension to zero mean / unit variance so
// the default step size behaves the same at any input width; the transform
// is folded into the first layer of the returned model, which therefore
// consumes raw (only 1/255-scaled) inputs like every other consumer.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> invStd;

  static Standardizer fit(const SampleSource& src) {
    const std::size_t dim = src.dim();
    Standardizer s;
    s.mean.assign(dim, 0.0);
    s.invStd.assign(dim, 0.0);
    std::vector<double> row(dim);
    for (std::size_t i = 0; i < src.size(); ++i) {
      src.fill(i, row.data());
      for (std::size_t k = 0; k < dim; ++k) s.mean[k] += row[k];
    }
    const double n = static_cast<double>(src.size());
    for (double& m : s.mean) m /= n;
    for (std::size_t i = 0; i < src.size(); ++i) {
      src.fill(i, row.data());
      for (std::size_t k = 0; k < dim; ++k) {
        const double d = row[k] - s.mean[k];
        s.invStd[k] += d * d;
      }
    }
    for (std::size_t k = 0; k < dim; ++k)
      s.invStd[k] = 1.0 / std::max(std::sqrt(s.invStd[k] / n), 1e-3);
    return s;
  }

  void apply(double* row, std::size_t dim) const {
    for (std::size_t k = 0; k < dim; ++k) row[k] = (row[k] - mean[k]) * invStd[k];
  }

  // first-layer rewrite: W' = W diag(invStd), b' = b - W' mean
  void fold_into(MlpModel& model) const {
    const std::size_t dim = mean.size();
    const int out = model.layerSizes[1];
    for (int o = 0; o < out; ++o) {
      double shift = 0.0;
      double* w = model.weights[0].data() + static_cast<std::size_t>(o) * dim;
      for (std::size_t k = 0; k < dim; ++k) {
        w[k] *= invStd[k];
        shift += w[k] * mean[k];
      }
      model.biases[0][static_cast<std::size_t>(o)] -= shift;
    }
  }
};

double standardized_accuracy(const MlpModel& model, const SampleSource& samples,
                             const Standardizer& standardizer) {
  std::vector<double> row(samples.dim());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples.fill(i, row.data());
    standardizer.apply(row.data(), row.size());
    const std::vector<double> p = mlp_forward(model, row);
    if ((p[0] >= p[1] ? Label::P : Label::N) == samples.label(i)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

void fill_batch_columns(const SampleSource& src, const Standardizer& standardizer,
                        const std::vector<std::size_t>& order, std::size_t begin, int B,
                        std::vector<double>& row, std::vector<double>& xT,
                        std::vector<int>& classes) {
  const std::size_t dim = src.dim();
  for (int b = 0; b < B; ++b) {
    const std::size_t idx = order[begin + b];
    src.fill(idx, row.data());
    standardizer.apply(row.data(), dim);
    for (std::size_t i = 0; i < dim; ++i) xT[i * B + b] = row[i];
    classes[b] = class_index(src.label(idx));
  }
}

}  // namespace

std::pair<MlpModel, TrainTrace> train_mlp(const SampleSource& train, const SampleSource* val,
                                          const MlpModel& shapeTemplate, const TrainConfig& cfg) {
  cfg.validate();
  shapeTemplate.validate();
  if (train.size() == 0) throw DataError("train_mlp: empty training set");
  if (train.dim() != static_cast<std::size_t>(shapeTemplate.input_dim()))
    throw DataError("train_mlp: sample dim " + std::to_string(train.dim()) +
                    " != model input dim " + std::to_string(shapeTemplate.input_dim()));

  const Standardizer standardizer = Standardizer::fit(train);
  MlpModel model = MlpModel::shape(shapeTemplate.layerSizes);
  model.scaleInputs = cfg.scalePixels;
  Rng rng(cfg.seed);
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    const double bound =
        std::sqrt(6.0 / (model.layerSizes[l] + model.layerSizes[l + 1]));
    for (double& w : model.weights[l]) w = rng.next_range(-bound, bound);
  }

  std::vector<std::vector<double>> velocityW(model.weights.size());
  std::vector<std::vector<double>> velocityB(model.biases.size());
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    velocityW[l].assign(model.weights[l].size(), 0.0);
    velocityB[l].assign(model.biases[l].size(), 0.0);
  }

  const std::size_t n = train.size();
  const int B = static_cast<int>(std::min<std::size_t>(cfg.batchSize, n));
  BatchBuffers buf;
  size_buffers(buf, model.layerSizes, B);
  std::vector<double> row(train.dim());
  std::vector<int> classes(B);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  TrainTrace trace;
  std::size_t iteration = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.next_below(i)]);
    for (std::size_t begin = 0; begin + B <= n; begin += B) {
      fill_batch_columns(train, standardizer, order, begin, B, row, buf.acts[0], classes);
      const double lossSum = forward_batch(model, buf, classes, B);
      const double lossMean = lossSum / B;
      if (!std::isfinite(lossMean))
        throw NumericError("non-finite training loss at iteration " + std::to_string(iteration));
      trace.lossPerIteration.push_back(lossMean);
      backward_batch(model, buf, classes, B);
      const double invB = 1.0 / B;
      for (std::size_t l = model.weights.size(); l > 0; --l) {
        const std::size_t li = l - 1;
        update_layer(model.weights[li].data(), velocityW[li].data(), model.biases[li].data(),
                     velocityB[li].data(), buf.deltas[li].data(), buf.acts[li].data(),
                     model.layerSizes[li], model.layerSizes[li + 1], B, cfg.learningRate,
                     cfg.momentum, invB);
      }
      ++iteration;
    }
    trace.epochsRun = epoch + 1;
    if (val) {
      const double acc = standardized_accuracy(model, *val, standardizer);
      trace.valAccuracyPerEpoch.push_back(acc);
      if (cfg.earlyStopValAcc > 0.0 && acc >= cfg.earlyStopValAcc) break;
    }
  }
  standardizer.fold_into(model);
  return {std::move(model), std::move(trace)};
}

std::pair<MlpModel, TrainTrace> mlp_train(const DatasetManifest& train,
                                          const DatasetManifest& val, const TrainConfig& cfg,
                                          const MlpModel& shapeTemplate, SfnnVariant variant) {
  if (train.records.empty() || val.records.empty())
    throw DataError("mlp_train: manifests must be non-empty");
  TileSamples trainSamples(train, variant, cfg.scalePixels);
  TileSamples valSamples(val, variant, cfg.scalePixels);
  return train_mlp(trainSamples, &valSamples, shapeTemplate, cfg);
}

std::vector<double> mlp_forward(const MlpModel& model, const std::vector<double>& x) {
  model.validate();
  if (x.size() != static_cast<std::size_t>(model.input_dim()))
    throw DataError("mlp_forward: input dim mismatch");
  std::vector<double> cur = x;
  const std::size_t L = model.weights.size();
  for (std::size_t l = 0; l < L; ++l) {
    const int in = model.layerSizes[l], out = model.layerSizes[l + 1];
    std::vector<double> next(out);
    for (int o = 0; o < out; ++o)
      next[o] = model.biases[l][o] +
                row_dot(model.weights[l].data() + static_cast<std::size_t>(o) * in, cur.data(), in);
    if (l + 1 < L) relu_inplace(next.data(), next.size());
    cur = std::move(next);
  }
  softmax_columns(cur.data(), static_cast<int>(cur.size()), 1);
  return cur;
}

Prediction mlp_predict(const MlpModel& model, const Raster& tile) {
  const std::size_t pix = static_cast<std::size_t>(tile.width) * tile.height;
  const std::size_t dIn = static_cast<std::size_t>(model.input_dim());
  Raster shaped;
  if (dIn == pix) {
    shaped = to_grayscale(tile);
  } else if (dIn == pix * 3) {
    shaped = replicate_channels(tile);
  } else {
    throw DataError("mlp_predict: tile " + std::to_string(tile.width) + "x" +
                    std::to_string(tile.height) + "x" + std::to_string(tile.channels) +
                    " does not match model input dim " + std::to_string(dIn));
  }
  const double scale = model.scaleInputs ? 1.0 / 255.0 : 1.0;
  std::vector<double> x(dIn);
  for (std::size_t i = 0; i < dIn; ++i) x[i] = shaped.samples[i] * scale;
  const std::vector<double> p = mlp_forward(model, x);
  return Prediction{p[0], p[1]};
}

double accuracy_on(const MlpModel& model, const SampleSource& samples) {
  const std::size_t n = samples.size();
  if (n == 0) throw DataError("accuracy_on: empty sample set");
  std::vector<double> row(samples.dim());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    samples.fill(i, row.data());
    const std::vector<double> p = mlp_forward(model, row);
    const Label predicted = p[0] >= p[1] ? Label::P : Label::N;
    if (predicted == samples.label(i)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

double mlp_loss(const MlpModel& model, const std::vector<std::vector<double>>& xs,
                const std::vector<Label>& ys) {
  if (xs.empty() || xs.size() != ys.size()) throw DataError("mlp_loss: bad batch");
  double loss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const std::vector<double> p = mlp_forward(model, xs[i]);
    loss += -std::log(std::max(p[class_index(ys[i])], kLogClamp));
  }
  return loss;
}

std::vector<double> mlp_loss_gradient(const MlpModel& model,
                                      const std::vector<std::vector<double>>& xs,
                                      const std::vector<Label>& ys) {
  if (xs.empty() || xs.size() != ys.size()) throw DataError("mlp_loss_gradient: bad batch");
  const int B = static_cast<int>(xs.size());
  BatchBuffers buf;
  size_buffers(buf, model.layerSizes, B);
  std::vector<int> classes(B);
  for (int b = 0; b < B; ++b) {
    if (xs[b].size() != static_cast<std::size_t>(model.input_dim()))
      throw DataError("mlp_loss_gradient: input dim mismatch");
    for (std::size_t i = 0; i < xs[b].size(); ++i) buf.acts[0][i * B + b] = xs[b][i];
    classes[b] = class_index(ys[b]);
  }
  forward_batch(model, buf, classes, B);
  backward_batch(model, buf, classes, B);

  std::vector<double> flat;
  flat.reserve(model.parameter_count());
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    const int in = model.layerSizes[l], out = model.layerSizes[l + 1];
    const double* d = buf.deltas[l].data();
    const double* a = buf.acts[l].data();
    for (int o = 0; o < out; ++o)
      for (int i = 0; i < in; ++i)
        flat.push_back(row_dot(d + static_cast<std::size_t>(o) * B,
                               a + static_cast<std::size_t>(i) * B, B));
    for (int o = 0; o < out; ++o) {
      double s = 0.0;
      for (int b = 0; b < B; ++b) s += d[static_cast<std::size_t>(o) * B + b];
      flat.push_back(s);
    }
  }
  return flat;
}

double mlp_gradient_check(const MlpModel& model, const std::vector<std::vector<double>>& xs,
                          const std::vector<Label>& ys, double h) {
  const std::vector<double> analytic = mlp_loss_gradient(model, xs, ys);
  MlpModel probe = model;
  double worst = 0.0;
  std::size_t flat = 0;
  for (std::size_t l = 0; l < probe.weights.size(); ++l) {
    auto probe_span = [&](std::vector<double>& params) {
      for (double& p : params) {
        const double saved = p;
        p = saved + h;
        const double up = mlp_loss(probe, xs, ys);
        p = saved - h;
        const double down = mlp_loss(probe, xs, ys);
        p = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double ga = analytic[flat++];
        const double rel = std::abs(ga - numeric) / std::max(1e-8, std::abs(ga) + std::abs(numeric));
        worst = std::max(worst, rel);
      }
    };
    probe_span(probe.weights[l]);
    probe_span(probe.biases[l]);
  }
  return worst;
}

std::pair<MlpModel, TrainTrace> train_head(
    const std::vector<std::pair<std::vector<double>, Label>>& features, const TrainConfig& cfg) {
  if (features.empty()) throw DataError("train_head: empty feature set");
  std::vector<std::vector<double>> rows;
  std::vector<Label> labels;
  rows.reserve(features.size());
  labels.reserve(features.size());
  for (const auto& [vec, label] : features) {
    rows.push_back(vec);
    labels.push_back(label);
  }
  const int dim = static_cast<int>(rows.front().size());
  VectorSamples samples(std::move(rows), std::move(labels));
  TrainConfig headCfg = cfg;
  headCfg.scalePixels = false;  // features arrive in backbone scale
  return train_mlp(samples, nullptr, MlpModel::shape({dim, 128, 128, 2}), headCfg);
}

TileClassifier make_mlp_classifier(std::shared_ptr<const MlpModel> model) {
  return [model = std::move(model)](const Raster& tile) { return mlp_predict(*model, tile); };
}

}  // namespace crackscope
