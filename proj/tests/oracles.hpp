#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "crackscope/cnn.hpp"
#include "crackscope/rng.hpp"

namespace testsupport {

// Naive reference evaluator for conv/relu/maxpool/batchnorm graphs, written
// as direct per-output triple loops over explicitly padded inputs.
// Independent of the production interpreter.
inline crackscope::Tensor naive_eval(const crackscope::CnnGraph& graph,
                                     const crackscope::Tensor& input) {
  using namespace crackscope;
  Tensor cur = input;
  for (const CnnLayer& layer : graph.layers) {
    if (const auto* conv = std::get_if<Conv2D>(&layer)) {
      const int ph = cur.h + 2 * conv->padH, pw = cur.w + 2 * conv->padW;
      Tensor padded(ph, pw, cur.c);
      for (int y = 0; y < cur.h; ++y)
        for (int x = 0; x < cur.w; ++x)
          for (int ch = 0; ch < cur.c; ++ch)
            padded.at(y + conv->padH, x + conv->padW, ch) = cur.at(y, x, ch);
      const int oh = (ph - conv->kH) / conv->strideH + 1;
      const int ow = (pw - conv->kW) / conv->strideW + 1;
      Tensor out(oh, ow, conv->outCh);
      for (int oc = 0; oc < conv->outCh; ++oc)
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            double acc = conv->bias[static_cast<std::size_t>(oc)];
            for (int ky = 0; ky < conv->kH; ++ky)
              for (int kx = 0; kx < conv->kW; ++kx)
                for (int ic = 0; ic < cur.c; ++ic)
                  acc += static_cast<double>(
                             conv->weights[((static_cast<std::size_t>(oc) * cur.c + ic) *
                                                conv->kH +
                                            ky) *
                                               conv->kW +
                                           kx]) *
                         padded.at(oy * conv->strideH + ky, ox * conv->strideW + kx, ic);
            out.at(oy, ox, oc) = static_cast<float>(acc);
          }
      cur = std::move(out);
    } else if (std::holds_alternative<Relu>(layer)) {
      for (float& v : cur.data) v = std::max(0.0f, v);
    } else if (const auto* pool = std::get_if<MaxPool>(&layer)) {
      const int oh = (cur.h - pool->k) / pool->stride + 1;
      const int ow = (cur.w - pool->k) / pool->stride + 1;
      Tensor out(oh, ow, cur.c);
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
          for (int ch = 0; ch < cur.c; ++ch) {
            float best = -std::numeric_limits<float>::infinity();
            for (int ky = 0; ky < pool->k; ++ky)
              for (int kx = 0; kx < pool->k; ++kx)
                best = std::max(best,
                                cur.at(oy * pool->stride + ky, ox * pool->stride + kx, ch));
            out.at(oy, ox, ch) = best;
          }
      cur = std::move(out);
    } else if (const auto* bn = std::get_if<BatchNorm>(&layer)) {
      for (int y = 0; y < cur.h; ++y)
        for (int x = 0; x < cur.w; ++x)
          for (int ch = 0; ch < cur.c; ++ch) {
            const double norm = (static_cast<double>(cur.at(y, x, ch)) - bn->mean[ch]) /
                                std::sqrt(static_cast<double>(bn->var[ch]) + bn->eps);
            cur.at(y, x, ch) = static_cast<float>(norm * bn->gamma[ch] + bn->beta[ch]);
          }
    } else {
      throw std::runtime_error("naive_eval: unsupported layer");
    }
  }
  return cur;
}

inline crackscope::Tensor random_tensor(int h, int w, int c, crackscope::Rng& rng) {
  crackscope::Tensor t(h, w, c);
  for (float& v : t.data) v = static_cast<float>(rng.next_range(-1.0, 1.0));
  return t;
}

inline crackscope::Conv2D random_conv(int inC, crackscope::Rng& rng, int maxK) {
  crackscope::Conv2D conv;
  conv.outCh = 1 + static_cast<int>(rng.next_below(4));
  conv.kH = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(maxK)));
  conv.kW = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(maxK)));
  conv.strideH = 1 + static_cast<int>(rng.next_below(2));
  conv.strideW = 1 + static_cast<int>(rng.next_below(2));
  conv.padH = static_cast<int>(rng.next_below(2));
  conv.padW = static_cast<int>(rng.next_below(2));
  conv.weights.resize(static_cast<std::size_t>(conv.outCh) * inC * conv.kH * conv.kW);
  for (float& w : conv.weights) w = static_cast<float>(rng.next_range(-1.0, 1.0));
  conv.bias.resize(static_cast<std::size_t>(conv.outCh));
  for (float& b : conv.bias) b = static_cast<float>(rng.next_range(-0.5, 0.5));
  return conv;
}

// Random shape-valid graph of up to maxLayers conv/relu/maxpool/batchnorm
// layers, first layer always a convolution.
inline crackscope::CnnGraph random_graph(int h, int w, int c, int maxLayers,
                                         crackscope::Rng& rng) {
  using namespace crackscope;
  CnnGraph graph;
  graph.inH = h;
  graph.inW = w;
  graph.inC = c;
  const int layers = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(maxLayers)));
  TensorShape cur{h, w, c};
  for (int l = 0; l < layers; ++l) {
    const int kind = l == 0 ? 0 : static_cast<int>(rng.next_below(4));
    if (kind == 0) {
      graph.layers.emplace_back(random_conv(cur.c, rng, std::min({3, cur.h, cur.w})));
    } else if (kind == 1) {
      graph.layers.emplace_back(Relu{});
    } else if (kind == 2 && cur.h >= 2 && cur.w >= 2) {
      graph.layers.emplace_back(MaxPool{2, 2});
    } else {
      BatchNorm bn;
      bn.gamma.resize(static_cast<std::size_t>(cur.c));
      bn.beta.resize(static_cast<std::size_t>(cur.c));
      bn.mean.resize(static_cast<std::size_t>(cur.c));
      bn.var.resize(static_cast<std::size_t>(cur.c));
      for (int i = 0; i < cur.c; ++i) {
        bn.gamma[static_cast<std::size_t>(i)] = static_cast<float>(rng.next_range(0.5, 1.5));
        bn.beta[static_cast<std::size_t>(i)] = static_cast<float>(rng.next_range(-0.5, 0.5));
        bn.mean[static_cast<std::size_t>(i)] = static_cast<float>(rng.next_range(-0.5, 0.5));
        bn.var[static_cast<std::size_t>(i)] = static_cast<float>(rng.next_range(0.2, 1.5));
      }
      graph.layers.emplace_back(std::move(bn));
    }
    cur = propagate_shapes(graph).back();
  }
  return graph;
}

}  // namespace testsupport
