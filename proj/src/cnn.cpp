#include "crackscope/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

#include "crackscope/error.hpp"

namespace crackscope {

namespace {

using nlohmann::json;

[[noreturn]] void shape_error(std::size_t layer, const std::string& what) {
  throw DataError("layer " + std::to_string(layer) + ": " + what);
}

TensorShape conv_out_shape(const Conv2D& l, const TensorShape& in, std::size_t idx) {
  if (l.outCh < 1 || l.kH < 1 || l.kW < 1 || l.strideH < 1 || l.strideW < 1 || l.padH < 0 ||
      l.padW < 0)
    shape_error(idx, "invalid conv parameters");
  const int h = (in.h + 2 * l.padH - l.kH) / l.strideH + 1;
  const int w = (in.w + 2 * l.padW - l.kW) / l.strideW + 1;
  if (in.h + 2 * l.padH < l.kH || in.w + 2 * l.padW < l.kW || h < 1 || w < 1)
    shape_error(idx, "conv kernel " + std::to_string(l.kH) + "x" + std::to_string(l.kW) +
                         " larger than padded input " + in.str());
  return {h, w, l.outCh};
}

std::size_t conv_param_count(const Conv2D& l, int inC) {
  return static_cast<std::size_t>(l.outCh) * inC * l.kH * l.kW + l.outCh;
}

struct ParamRef {
  std::size_t layerIndex;
  std::size_t count;
};

// Layers that carry parameters, in order, with expected counts; requires
// shapes to already propagate.
std::vector<ParamRef> parameterized_layers(const CnnGraph& graph,
                                           const std::vector<TensorShape>& shapes) {
  std::vector<ParamRef> out;
  TensorShape in{graph.inH, graph.inW, graph.inC};
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    const TensorShape& cur = i == 0 ? in : shapes[i - 1];
    if (const auto* conv = std::get_if<Conv2D>(&graph.layers[i]))
      out.push_back({i, conv_param_count(*conv, cur.c)});
    else if (std::holds_alternative<BatchNorm>(graph.layers[i]))
      out.push_back({i, static_cast<std::size_t>(cur.c) * 4});
    else if (const auto* dense = std::get_if<Dense>(&graph.layers[i]))
      out.push_back({i, static_cast<std::size_t>(dense->out) *
                            (static_cast<std::size_t>(cur.h) * cur.w * cur.c) +
                        dense->out});
  }
  return out;
}

}  // namespace

std::string TensorShape::str() const {
  return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
}

std::vector<TensorShape> propagate_shapes(const CnnGraph& graph) {
  if (graph.inH < 1 || graph.inW < 1 || (graph.inC != 1 && graph.inC != 3))
    throw DataError("graph input shape must be HxWx{1|3}");
  std::vector<TensorShape> shapes;
  shapes.reserve(graph.layers.size());
  TensorShape cur{graph.inH, graph.inW, graph.inC};
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    const CnnLayer& layer = graph.layers[i];
    if (const auto* conv = std::get_if<Conv2D>(&layer)) {
      const TensorShape out = conv_out_shape(*conv, cur, i);
      if (!conv->weights.empty() || !conv->bias.empty()) {
        const std::size_t expect =
            static_cast<std::size_t>(conv->outCh) * cur.c * conv->kH * conv->kW;
        if (conv->weights.size() != expect)
          shape_error(i, "conv weights hold " + std::to_string(conv->weights.size()) +
                             " values, shape needs " + std::to_string(expect));
        if (conv->bias.size() != static_cast<std::size_t>(conv->outCh))
          shape_error(i, "conv bias size mismatch");
      }
      cur = out;
    } else if (const auto* bn = std::get_if<BatchNorm>(&layer)) {
      const std::size_t c = static_cast<std::size_t>(cur.c);
      if (!bn->gamma.empty() &&
          (bn->gamma.size() != c || bn->beta.size() != c || bn->mean.size() != c ||
           bn->var.size() != c))
        shape_error(i, "batchnorm parameter size != channel count " + std::to_string(cur.c));
    } else if (std::holds_alternative<Relu>(layer)) {
      // shape preserved
    } else if (const auto* pool = std::get_if<MaxPool>(&layer)) {
      if (pool->k < 1 || pool->stride < 1) shape_error(i, "invalid pool parameters");
      if (cur.h < pool->k || cur.w < pool->k)
        shape_error(i, "pool window " + std::to_string(pool->k) + " larger than input " +
                           cur.str());
      cur = {(cur.h - pool->k) / pool->stride + 1, (cur.w - pool->k) / pool->stride + 1, cur.c};
    } else if (std::holds_alternative<GlobalAvgPool>(layer)) {
      cur = {1, 1, cur.c};
    } else if (const auto* res = std::get_if<ResidualAdd>(&layer)) {
      if (res->fromLayer >= static_cast<int>(i))
        shape_error(i, "residual source " + std::to_string(res->fromLayer) +
                           " is not an earlier layer");
      if (res->fromLayer < -1) shape_error(i, "invalid residual source");
      const TensorShape src = res->fromLayer < 0
                                  ? TensorShape{graph.inH, graph.inW, graph.inC}
                                  : shapes[static_cast<std::size_t>(res->fromLayer)];
      if (!(src == cur))
        shape_error(i, "residual source shape " + src.str() + " != current " + cur.str());
    } else if (const auto* dense = std::get_if<Dense>(&layer)) {
      if (dense->out < 1) shape_error(i, "dense output must be positive");
      const std::size_t in = static_cast<std::size_t>(cur.h) * cur.w * cur.c;
      if (!dense->weights.empty() || !dense->bias.empty()) {
        if (dense->weights.size() != in * dense->out)
          shape_error(i, "dense weights hold " + std::to_string(dense->weights.size()) +
                             " values, shape needs " + std::to_string(in * dense->out));
        if (dense->bias.size() != static_cast<std::size_t>(dense->out))
          shape_error(i, "dense bias size mismatch");
      }
      cur = {1, 1, dense->out};
    } else if (std::holds_alternative<Softmax>(layer)) {
      // shape preserved
    }
    shapes.push_back(cur);
  }
  return shapes;
}

Tensor cnn_forward(const CnnGraph& graph, const Tensor& input,
                   std::optional<std::size_t> stopAtLayer) {
  const std::vector<TensorShape> shapes = propagate_shapes(graph);
  if (input.h != graph.inH || input.w != graph.inW || input.c != graph.inC)
    throw DataError("input tensor " + TensorShape{input.h, input.w, input.c}.str() +
                    " does not match graph input " +
                    TensorShape{graph.inH, graph.inW, graph.inC}.str());
  if (stopAtLayer && *stopAtLayer >= graph.layers.size())
    throw DataError("stopAtLayer out of range");

  std::vector<Tensor> outputs;
  outputs.reserve(graph.layers.size());
  const Tensor* cur = &input;
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    const CnnLayer& layer = graph.layers[i];
    Tensor out;
    if (const auto* conv = std::get_if<Conv2D>(&layer)) {
      if (conv->weights.empty()) shape_error(i, "conv has no weights loaded");
      out = Tensor(shapes[i].h, shapes[i].w, shapes[i].c);
      const int inC = cur->c;
      const std::size_t kArea = static_cast<std::size_t>(conv->kH) * conv->kW;
      for (int oy = 0; oy < out.h; ++oy)
        for (int ox = 0; ox < out.w; ++ox)
          for (int oc = 0; oc < out.c; ++oc) {
            double acc = conv->bias[oc];
            const float* wBase = conv->weights.data() + static_cast<std::size_t>(oc) * inC * kArea;
            for (int ic = 0; ic < inC; ++ic) {
              const float* w = wBase + static_cast<std::size_t>(ic) * kArea;
              for (int ky = 0; ky < conv->kH; ++ky) {
                const int y = oy * conv->strideH - conv->padH + ky;
                if (y < 0 || y >= cur->h) continue;
                for (int kx = 0; kx < conv->kW; ++kx) {
                  const int x = ox * conv->strideW - conv->padW + kx;
                  if (x < 0 || x >= cur->w) continue;
                  acc += static_cast<double>(w[ky * conv->kW + kx]) * cur->at(y, x, ic);
                }
              }
            }
            out.at(oy, ox, oc) = static_cast<float>(acc);
          }
    } else if (const auto* bn = std::get_if<BatchNorm>(&layer)) {
      if (bn->gamma.empty()) shape_error(i, "batchnorm has no parameters loaded");
      out = *cur;
      const int c = cur->c;
      std::vector<double> scale(c), shift(c);
      for (int ch = 0; ch < c; ++ch) {
        scale[ch] = bn->gamma[ch] / std::sqrt(static_cast<double>(bn->var[ch]) + bn->eps);
        shift[ch] = bn->beta[ch] - bn->mean[ch] * scale[ch];
      }
      for (std::size_t idx = 0; idx < out.size(); ++idx)
        out.data[idx] = static_cast<float>(out.data[idx] * scale[idx % c] + shift[idx % c]);
    } else if (std::holds_alternative<Relu>(layer)) {
      out = *cur;
      for (float& v : out.data) v = v > 0.0f ? v : 0.0f;
    } else if (const auto* pool = std::get_if<MaxPool>(&layer)) {
      out = Tensor(shapes[i].h, shapes[i].w, shapes[i].c);
      for (int oy = 0; oy < out.h; ++oy)
        for (int ox = 0; ox < out.w; ++ox)
          for (int ch = 0; ch < out.c; ++ch) {
            float best = cur->at(oy * pool->stride, ox * pool->stride, ch);
            for (int ky = 0; ky < pool->k; ++ky)
              for (int kx = 0; kx < pool->k; ++kx)
                best = std::max(best, cur->at(oy * pool->stride + ky, ox * pool->stride + kx, ch));
            out.at(oy, ox, ch) = best;
          }
    } else if (std::holds_alternative<GlobalAvgPool>(layer)) {
      out = Tensor(1, 1, cur->c);
      const std::size_t area = static_cast<std::size_t>(cur->h) * cur->w;
      for (int ch = 0; ch < cur->c; ++ch) {
        double acc = 0.0;
        for (int y = 0; y < cur->h; ++y)
          for (int x = 0; x < cur->w; ++x) acc += cur->at(y, x, ch);
        out.at(0, 0, ch) = static_cast<float>(acc / static_cast<double>(area));
      }
    } else if (const auto* res = std::get_if<ResidualAdd>(&layer)) {
      const Tensor& src = res->fromLayer < 0 ? input : outputs[static_cast<std::size_t>(res->fromLayer)];
      out = *cur;
      for (std::size_t idx = 0; idx < out.size(); ++idx) out.data[idx] += src.data[idx];
    } else if (const auto* dense = std::get_if<Dense>(&layer)) {
      if (dense->weights.empty()) shape_error(i, "dense has no weights loaded");
      const std::size_t in = cur->size();
      out = Tensor(1, 1, dense->out);
      for (int o = 0; o < dense->out; ++o) {
        double acc = dense->bias[o];
        const float* w = dense->weights.data() + static_cast<std::size_t>(o) * in;
        for (std::size_t k = 0; k < in; ++k) acc += static_cast<double>(w[k]) * cur->data[k];
        out.at(0, 0, o) = static_cast<float>(acc);
      }
    } else if (std::holds_alternative<Softmax>(layer)) {
      out = *cur;
      for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) {
          double mx = out.at(y, x, 0);
          for (int ch = 1; ch < out.c; ++ch) mx = std::max<double>(mx, out.at(y, x, ch));
          double sum = 0.0;
          for (int ch = 0; ch < out.c; ++ch) {
            const double e = std::exp(out.at(y, x, ch) - mx);
            out.at(y, x, ch) = static_cast<float>(e);
            sum += e;
          }
          for (int ch = 0; ch < out.c; ++ch)
            out.at(y, x, ch) = static_cast<float>(out.at(y, x, ch) / sum);
        }
    }
    outputs.push_back(std::move(out));
    cur = &outputs.back();
    if (stopAtLayer && *stopAtLayer == i) return outputs[i];
  }
  if (outputs.empty()) throw DataError("graph has no layers");
  return outputs.back();
}

Tensor tensor_from_raster(const CnnGraph& graph, const Raster& tile) {
  Raster shaped = graph.inC == 1 ? to_grayscale(tile) : replicate_channels(tile);
  if (shaped.width != graph.inW || shaped.height != graph.inH)
    throw DataError("tile " + std::to_string(shaped.width) + "x" + std::to_string(shaped.height) +
                    " does not match graph input " + std::to_string(graph.inW) + "x" +
                    std::to_string(graph.inH));
  Tensor t(graph.inH, graph.inW, graph.inC);
  for (std::size_t i = 0; i < t.size(); ++i)
    t.data[i] = static_cast<float>(shaped.samples[i] / 255.0);
  return t;
}

Tensor cnn_forward(const CnnGraph& graph, const Raster& tile,
                   std::optional<std::size_t> stopAtLayer) {
  return cnn_forward(graph, tensor_from_raster(graph, tile), stopAtLayer);
}

Prediction cnn_predict(const CnnGraph& graph, const Raster& tile) {
  if (graph.layers.empty() || !std::holds_alternative<Softmax>(graph.layers.back()))
    throw DataError("cnn_predict: graph must end in a Softmax layer");
  const Tensor out = cnn_forward(graph, tile);
  if (out.size() != 2) throw DataError("cnn_predict: output must have 2 units");
  return Prediction{out.data[0], out.data[1]};
}

std::vector<double> cnn_features(const CnnGraph& graph, const Raster& tile) {
  const Tensor out = cnn_forward(graph, tile);
  return std::vector<double>(out.data.begin(), out.data.end());
}

Raster activation_heatmap(const CnnGraph& graph, const Raster& tile, HeatmapAgg agg) {
  int lastConv = -1;
  for (std::size_t i = 0; i < graph.layers.size(); ++i)
    if (std::holds_alternative<Conv2D>(graph.layers[i])) lastConv = static_cast<int>(i);
  if (lastConv < 0) throw DataError("activation_heatmap: graph has no Conv2D layer");
  // Post-activation view: include normalization/activation glued to the conv.
  std::size_t tap = static_cast<std::size_t>(lastConv);
  while (tap + 1 < graph.layers.size() &&
         (std::holds_alternative<BatchNorm>(graph.layers[tap + 1]) ||
          std::holds_alternative<Relu>(graph.layers[tap + 1])))
    ++tap;

  const Tensor act = cnn_forward(graph, tile, tap);
  Raster flat(act.w, act.h, 1);
  std::vector<double> agg2d(static_cast<std::size_t>(act.h) * act.w);
  double lo = 0.0, hi = 0.0;
  for (int y = 0; y < act.h; ++y)
    for (int x = 0; x < act.w; ++x) {
      double v;
      if (agg == HeatmapAgg::Mean) {
        v = 0.0;
        for (int ch = 0; ch < act.c; ++ch) v += act.at(y, x, ch);
        v /= act.c;
      } else {
        v = act.at(y, x, 0);
        for (int ch = 1; ch < act.c; ++ch) v = std::max<double>(v, act.at(y, x, ch));
      }
      agg2d[static_cast<std::size_t>(y) * act.w + x] = v;
      if (y == 0 && x == 0) lo = hi = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (hi - lo < 1e-12) {
    return Raster(tile.width, tile.height, 1);  // constant activation -> all zero
  }
  for (std::size_t i = 0; i < agg2d.size(); ++i)
    flat.samples[i] = clamp_u8((agg2d[i] - lo) / (hi - lo) * 255.0);
  return bilinear_resize(flat, tile.width, tile.height);
}

Raster overlay_heatmap(const Raster& tile, const Raster& heatmap) {
  if (heatmap.width != tile.width || heatmap.height != tile.height || heatmap.channels != 1)
    throw DataError("overlay_heatmap: heatmap must be 1-channel and tile-sized");
  Raster rgb = replicate_channels(tile);
  const std::size_t pixels = static_cast<std::size_t>(tile.width) * tile.height;
  for (std::size_t i = 0; i < pixels; ++i) {
    const double a = heatmap.samples[i] / 255.0;
    rgb.samples[3 * i] = clamp_u8((1.0 - a) * rgb.samples[3 * i] + a * 255.0);
    rgb.samples[3 * i + 1] = clamp_u8((1.0 - a) * rgb.samples[3 * i + 1]);
    rgb.samples[3 * i + 2] = clamp_u8((1.0 - a) * rgb.samples[3 * i + 2]);
  }
  return rgb;
}

namespace {

constexpr char kMagic[4] = {'C', 'S', 'W', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct ByteReader {
  const std::string& bytes;
  std::size_t pos = 0;
  const std::filesystem::path& path;

  void need(std::size_t n, const char* what) const {
    if (bytes.size() - pos < n)
      throw DataError(path.string() + ": truncated " + what + ", expected " + std::to_string(n) +
                      " bytes at offset " + std::to_string(pos) + ", got " +
                      std::to_string(bytes.size() - pos));
  }
  std::uint32_t u32() {
    need(4, "field");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8, "field");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  void floats(float* dst, std::size_t n) {
    need(n * 4, "payload");
    std::memcpy(dst, bytes.data() + pos, n * 4);  // IEEE-754 LE host assumed
    pos += n * 4;
  }
};

// Parameters of a layer in serialization order.
std::vector<float> collect_params(const CnnLayer& layer) {
  std::vector<float> out;
  if (const auto* conv = std::get_if<Conv2D>(&layer)) {
    out.insert(out.end(), conv->weights.begin(), conv->weights.end());
    out.insert(out.end(), conv->bias.begin(), conv->bias.end());
  } else if (const auto* bn = std::get_if<BatchNorm>(&layer)) {
    out.insert(out.end(), bn->gamma.begin(), bn->gamma.end());
    out.insert(out.end(), bn->beta.begin(), bn->beta.end());
    out.insert(out.end(), bn->mean.begin(), bn->mean.end());
    out.insert(out.end(), bn->var.begin(), bn->var.end());
  } else if (const auto* dense = std::get_if<Dense>(&layer)) {
    out.insert(out.end(), dense->weights.begin(), dense->weights.end());
    out.insert(out.end(), dense->bias.begin(), dense->bias.end());
  }
  return out;
}

void scatter_params(CnnLayer& layer, const std::vector<float>& params, int inC,
                    std::size_t inFlat, std::size_t idx) {
  if (auto* conv = std::get_if<Conv2D>(&layer)) {
    const std::size_t nw = static_cast<std::size_t>(conv->outCh) * inC * conv->kH * conv->kW;
    conv->weights.assign(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(nw));
    conv->bias.assign(params.begin() + static_cast<std::ptrdiff_t>(nw), params.end());
  } else if (auto* bn = std::get_if<BatchNorm>(&layer)) {
    const std::size_t c = params.size() / 4;
    bn->gamma.assign(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(c));
    bn->beta.assign(params.begin() + static_cast<std::ptrdiff_t>(c),
                    params.begin() + static_cast<std::ptrdiff_t>(2 * c));
    bn->mean.assign(params.begin() + static_cast<std::ptrdiff_t>(2 * c),
                    params.begin() + static_cast<std::ptrdiff_t>(3 * c));
    bn->var.assign(params.begin() + static_cast<std::ptrdiff_t>(3 * c), params.end());
  } else if (auto* dense = std::get_if<Dense>(&layer)) {
    const std::size_t nw = inFlat * dense->out;
    dense->weights.assign(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(nw));
    dense->bias.assign(params.begin() + static_cast<std::ptrdiff_t>(nw), params.end());
  } else {
    throw DataError("weights record for parameterless layer " + std::to_string(idx));
  }
}

const char* layer_type_name(const CnnLayer& layer) {
  if (std::holds_alternative<Conv2D>(layer)) return "conv2d";
  if (std::holds_alternative<BatchNorm>(layer)) return "batchnorm";
  if (std::holds_alternative<Relu>(layer)) return "relu";
  if (std::holds_alternative<MaxPool>(layer)) return "maxpool";
  if (std::holds_alternative<GlobalAvgPool>(layer)) return "globalavgpool";
  if (std::holds_alternative<ResidualAdd>(layer)) return "residual_add";
  if (std::holds_alternative<Dense>(layer)) return "dense";
  return "softmax";
}

}  // namespace

void save_cnn(const CnnGraph& graph, const std::filesystem::path& topologyPath,
              const std::filesystem::path& weightsPath) {
  const std::vector<TensorShape> shapes = propagate_shapes(graph);

  json topo;
  topo["format"] = "crackscope-topology";
  topo["version"] = 1;
  topo["input"] = {{"h", graph.inH}, {"w", graph.inW}, {"c", graph.inC}};
  json layers = json::array();
  for (const CnnLayer& layer : graph.layers) {
    json j;
    j["type"] = layer_type_name(layer);
    if (const auto* conv = std::get_if<Conv2D>(&layer)) {
      j["out_ch"] = conv->outCh;
      j["kh"] = conv->kH;
      j["kw"] = conv->kW;
      j["stride_h"] = conv->strideH;
      j["stride_w"] = conv->strideW;
      j["pad_h"] = conv->padH;
      j["pad_w"] = conv->padW;
    } else if (const auto* bn = std::get_if<BatchNorm>(&layer)) {
      j["eps"] = bn->eps;
    } else if (const auto* pool = std::get_if<MaxPool>(&layer)) {
      j["k"] = pool->k;
      j["stride"] = pool->stride;
    } else if (const auto* res = std::get_if<ResidualAdd>(&layer)) {
      j["from"] = res->fromLayer;
    } else if (const auto* dense = std::get_if<Dense>(&layer)) {
      j["out"] = dense->out;
    }
    layers.push_back(std::move(j));
  }
  topo["layers"] = std::move(layers);
  std::ofstream tf(topologyPath, std::ios::trunc);
  if (!tf) throw DataError(topologyPath.string() + ": cannot open file for writing");
  tf << topo.dump(2) << "\n";

  std::string blob;
  blob.append(kMagic, 4);
  for (const ParamRef& ref : parameterized_layers(graph, shapes)) {
    const std::vector<float> params = collect_params(graph.layers[ref.layerIndex]);
    if (params.size() != ref.count)
      throw DataError("layer " + std::to_string(ref.layerIndex) + " holds " +
                      std::to_string(params.size()) + " parameters, shape needs " +
                      std::to_string(ref.count));
    put_u32(blob, static_cast<std::uint32_t>(ref.layerIndex));
    put_u64(blob, params.size());
    const std::size_t at = blob.size();
    blob.resize(at + params.size() * 4);
    std::memcpy(blob.data() + at, params.data(), params.size() * 4);
  }
  std::ofstream wf(weightsPath, std::ios::binary | std::ios::trunc);
  if (!wf) throw DataError(weightsPath.string() + ": cannot open file for writing");
  wf.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!wf) throw DataError(weightsPath.string() + ": write failed");
}

CnnGraph load_cnn(const std::filesystem::path& weightsPath,
                  const std::filesystem::path& topologyPath) {
  std::ifstream tf(topologyPath);
  if (!tf) throw DataError(topologyPath.string() + ": cannot open file");
  json topo;
  try {
    tf >> topo;
  } catch (const json::exception& e) {
    throw DataError(topologyPath.string() + ": invalid JSON: " + e.what());
  }
  if (topo.value("format", "") != "crackscope-topology" || topo.value("version", 0) != 1)
    throw DataError(topologyPath.string() + ": not a crackscope-topology v1 file");

  CnnGraph graph;
  graph.inH = topo.at("input").at("h").get<int>();
  graph.inW = topo.at("input").at("w").get<int>();
  graph.inC = topo.at("input").at("c").get<int>();
  for (const json& j : topo.at("layers")) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "conv2d") {
      Conv2D conv;
      conv.outCh = j.at("out_ch").get<int>();
      conv.kH = j.at("kh").get<int>();
      conv.kW = j.at("kw").get<int>();
      conv.strideH = j.at("stride_h").get<int>();
      conv.strideW = j.at("stride_w").get<int>();
      conv.padH = j.at("pad_h").get<int>();
      conv.padW = j.at("pad_w").get<int>();
      graph.layers.emplace_back(std::move(conv));
    } else if (type == "batchnorm") {
      BatchNorm bn;
      bn.eps = j.at("eps").get<double>();
      graph.layers.emplace_back(std::move(bn));
    } else if (type == "relu") {
      graph.layers.emplace_back(Relu{});
    } else if (type == "maxpool") {
      graph.layers.emplace_back(MaxPool{j.at("k").get<int>(), j.at("stride").get<int>()});
    } else if (type == "globalavgpool") {
      graph.layers.emplace_back(GlobalAvgPool{});
    } else if (type == "residual_add") {
      graph.layers.emplace_back(ResidualAdd{j.at("from").get<int>()});
    } else if (type == "dense") {
      Dense dense;
      dense.out = j.at("out").get<int>();
      graph.layers.emplace_back(std::move(dense));
    } else if (type == "softmax") {
      graph.layers.emplace_back(Softmax{});
    } else {
      throw DataError(topologyPath.string() + ": unknown layer type '" + type + "'");
    }
  }
  // Validates layer ordering (residual references) before weights arrive.
  const std::vector<TensorShape> shapes = propagate_shapes(graph);
  const std::vector<ParamRef> expected = parameterized_layers(graph, shapes);

  std::ifstream wf(weightsPath, std::ios::binary);
  if (!wf) throw DataError(weightsPath.string() + ": cannot open file");
  const std::string bytes((std::istreambuf_iterator<char>(wf)), std::istreambuf_iterator<char>());
  ByteReader reader{bytes, 0, weightsPath};
  reader.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw DataError(weightsPath.string() + ": bad magic, expected CSW1");
  reader.pos = 4;

  for (const ParamRef& ref : expected) {
    const std::uint32_t idx = reader.u32();
    if (idx != ref.layerIndex)
      throw DataError(weightsPath.string() + ": weight record for layer " + std::to_string(idx) +
                      ", expected layer " + std::to_string(ref.layerIndex));
    const std::uint64_t count = reader.u64();
    if (count != ref.count)
      throw DataError(weightsPath.string() + ": layer " + std::to_string(idx) + " carries " +
                      std::to_string(count) + " parameters (" + std::to_string(count * 4) +
                      " bytes), topology needs " + std::to_string(ref.count) + " (" +
                      std::to_string(ref.count * 4) + " bytes)");
    std::vector<float> params(count);
    reader.floats(params.data(), count);
    const TensorShape inShape = ref.layerIndex == 0
                                    ? TensorShape{graph.inH, graph.inW, graph.inC}
                                    : shapes[ref.layerIndex - 1];
    scatter_params(graph.layers[ref.layerIndex], params, inShape.c,
                   static_cast<std::size_t>(inShape.h) * inShape.w * inShape.c, ref.layerIndex);
  }
  if (reader.pos != bytes.size())
    throw DataError(weightsPath.string() + ": " + std::to_string(bytes.size() - reader.pos) +
                    " trailing bytes after last expected record");
  propagate_shapes(graph);  // full re-check with parameters in place
  return graph;
}

CnnGraph mlp_to_graph(const MlpModel& model, int window, int channels) {
  model.validate();
  if (static_cast<std::size_t>(model.input_dim()) !=
      static_cast<std::size_t>(window) * window * channels)
    throw DataError("mlp_to_graph: input dim != window*window*channels");
  CnnGraph graph;
  graph.inH = graph.inW = window;
  graph.inC = channels;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    Dense dense;
    dense.out = model.layerSizes[l + 1];
    dense.weights.assign(model.weights[l].begin(), model.weights[l].end());
    dense.bias.assign(model.biases[l].begin(), model.biases[l].end());
    graph.layers.emplace_back(std::move(dense));
    if (l + 1 < model.weights.size()) graph.layers.emplace_back(Relu{});
  }
  graph.layers.emplace_back(Softmax{});
  return graph;
}

MlpModel mlp_from_graph(const CnnGraph& graph) {
  std::vector<int> sizes{graph.inH * graph.inW * graph.inC};
  std::vector<std::vector<double>> weights, biases;
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    if (const auto* dense = std::get_if<Dense>(&graph.layers[i])) {
      sizes.push_back(dense->out);
      weights.emplace_back(dense->weights.begin(), dense->weights.end());
      biases.emplace_back(dense->bias.begin(), dense->bias.end());
    } else if (!std::holds_alternative<Relu>(graph.layers[i]) &&
               !std::holds_alternative<Softmax>(graph.layers[i])) {
      throw DataError("mlp_from_graph: graph contains non-perceptron layers");
    }
  }
  MlpModel model = MlpModel::shape(sizes);
  model.weights = std::move(weights);
  model.biases = std::move(biases);
  model.validate();
  return model;
}

CnnGraph make_desk_backbone(int inChannels, Seed seed) {
  CnnGraph graph;
  graph.inH = graph.inW = 227;
  graph.inC = inChannels;

  Rng rng(seed);
  Conv2D conv1;
  conv1.outCh = 8;
  conv1.kH = conv1.kW = 5;
  conv1.strideH = conv1.strideW = 4;
  conv1.padH = conv1.padW = 2;
  conv1.weights.assign(static_cast<std::size_t>(8) * inChannels * 25, 0.0f);
  conv1.bias.assign(8, 0.0f);
  // Filter bank: box mean, +-horizontal edge, +-vertical edge, +-center
  // surround, one seeded random mix. Signed pairs keep edge energy alive
  // through the ReLU.
  auto k1 = [&](int oc, int ic, int ky, int kx) -> float& {
    return conv1.weights[((static_cast<std::size_t>(oc) * inChannels + ic) * 5 + ky) * 5 + kx];
  };
  for (int ic = 0; ic < inChannels; ++ic)
    for (int ky = 0; ky < 5; ++ky)
      for (int kx = 0; kx < 5; ++kx) {
        const float box = 1.0f / (25.0f * inChannels);
        const float edgeH = (ky < 2 ? 1.0f : (ky > 2 ? -1.0f : 0.0f)) / (10.0f * inChannels);
        const float edgeV = (kx < 2 ? 1.0f : (kx > 2 ? -1.0f : 0.0f)) / (10.0f * inChannels);
        const float surround =
            ((ky == 2 && kx == 2) ? 24.0f : -1.0f) / (24.0f * inChannels);
        k1(0, ic, ky, kx) = box;
        k1(1, ic, ky, kx) = edgeH;
        k1(2, ic, ky, kx) = -edgeH;
        k1(3, ic, ky, kx) = edgeV;
        k1(4, ic, ky, kx) = -edgeV;
        k1(5, ic, ky, kx) = surround;
        k1(6, ic, ky, kx) = -surround;
        k1(7, ic, ky, kx) = static_cast<float>(rng.next_range(-0.2, 0.2));
      }
  graph.layers.emplace_back(std::move(conv1));
  graph.layers.emplace_back(Relu{});
  graph.layers.emplace_back(MaxPool{3, 3});

  Conv2D conv2;
  conv2.outCh = 16;
  conv2.kH = conv2.kW = 3;
  conv2.strideH = conv2.strideW = 2;
  conv2.padH = conv2.padW = 1;
  conv2.weights.assign(static_cast<std::size_t>(16) * 8 * 9, 0.0f);
  for (float& w : conv2.weights) w = static_cast<float>(rng.next_range(-0.3, 0.3));
  conv2.bias.assign(16, 0.0f);
  graph.layers.emplace_back(std::move(conv2));
  graph.layers.emplace_back(Relu{});
  graph.layers.emplace_back(GlobalAvgPool{});
  propagate_shapes(graph);
  return graph;
}

CnnGraph append_head(const CnnGraph& backbone, const MlpModel& head) {
  head.validate();
  const std::vector<TensorShape> shapes = propagate_shapes(backbone);
  const TensorShape out = shapes.back();
  if (static_cast<std::size_t>(head.input_dim()) !=
      static_cast<std::size_t>(out.h) * out.w * out.c)
    throw DataError("append_head: backbone output " + out.str() + " != head input dim " +
                    std::to_string(head.input_dim()));
  CnnGraph graph = backbone;
  for (std::size_t l = 0; l < head.weights.size(); ++l) {
    Dense dense;
    dense.out = head.layerSizes[l + 1];
    dense.weights.assign(head.weights[l].begin(), head.weights[l].end());
    dense.bias.assign(head.biases[l].begin(), head.biases[l].end());
    graph.layers.emplace_back(std::move(dense));
    if (l + 1 < head.weights.size()) graph.layers.emplace_back(Relu{});
  }
  graph.layers.emplace_back(Softmax{});
  propagate_shapes(graph);
  return graph;
}

TileClassifier make_cnn_classifier(std::shared_ptr<const CnnGraph> graph) {
  return [graph = std::move(graph)](const Raster& tile) { return cnn_predict(*graph, tile); };
}

}  // namespace crackscope
