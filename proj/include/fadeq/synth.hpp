/*
 * Copyright 2026 The fadeq Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "fadeq/graph.hpp"
#include "fadeq/store.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace fadeq {

enum class WeightDist { gauss, outlier };

inline std::optional<WeightDist> parse_weight_dist(std::string_view s) noexcept {
  if (s == "gauss") return WeightDist::gauss;
  if (s == "outlier") return WeightDist::outlier;
  return std::nullopt;
}

enum class SynthTopology { encdec, chain };

inline std::optional<SynthTopology> parse_topology(std::string_view s) noexcept {
  if (s == "encdec") return SynthTopology::encdec;
  if (s == "chain") return SynthTopology::chain;
  return std::nullopt;
}

struct SynthOptions {
  int layers = 8;
  SynthTopology topology = SynthTopology::encdec;
  std::uint64_t seed = 0;
  WeightDist dist = WeightDist::gauss;
  Eigen::Index audio_dim = 32;
  Eigen::Index text_dim = 16;
  Eigen::Index hidden = 32;
  Eigen::Index samples = 128;
  double outlier_fraction = 0.01;
  double outlier_scale = 10.0;
};

struct SynthFixture {
  LayerGraph graph;
  TensorStore weights;
  TensorStore calib;
};

namespace detail {

inline Matrix gaussian(std::mt19937_64 &rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  }
  return m;
}

/// Scales a fixed fraction of distinct entries (at least one) by `scale`.
inline void inject_outliers(std::mt19937_64 &rng, Matrix &w, double fraction, double scale) {
  const auto n = static_cast<std::size_t>(w.size());
  const auto count = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t k = 0; k < count; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, n - 1);
    std::swap(idx[k], idx[pick(rng)]);
    w.data()[idx[k]] *= scale;
  }
}

/// Correlated features: (I + 0.5 G / sqrt(d)) Z with Gaussian G and Z.
inline Matrix correlated_activations(std::mt19937_64 &rng, Eigen::Index dim, Eigen::Index samples) {
  const Matrix mix = Matrix::Identity(dim, dim) + 0.5 * gaussian(rng, dim, dim, 1.0 / std::sqrt(static_cast<double>(dim)));
  return mix * gaussian(rng, dim, samples, 1.0);
}

}  // namespace detail

/// Deterministic encoder-decoder chain. ceil(layers/2) encoder linears read
/// the "audio" slot; when there are decoder layers, the last encoder output
/// is concatenated with the "text" slot and fed through the remaining
/// linears. ReLU sits between consecutive linears of each stack. The chain
/// topology is a single stack "fc0".."fc{L-1}" on the "audio" slot.
inline SynthFixture make_synthetic(const SynthOptions &opt) {
  detail::require(opt.layers >= 1, ErrorCode::invalid_argument, "layers must be >= 1");
  detail::require(opt.audio_dim >= 1 && opt.text_dim >= 1 && opt.hidden >= 1 && opt.samples >= 1,
                  ErrorCode::invalid_argument, "synthetic dims must be >= 1");
  std::mt19937_64 rng(opt.seed);
  const bool chain = opt.topology == SynthTopology::chain;
  const int n_enc = chain ? opt.layers : (opt.layers + 1) / 2;
  const int n_dec = opt.layers - n_enc;

  SynthFixture fx;
  fx.graph.slots.push_back({"audio", opt.audio_dim});
  if (n_dec > 0) fx.graph.slots.push_back({"text", opt.text_dim});
  auto add_plain = [&](const std::string &name, NodeKind kind, std::vector<std::string> inputs) {
    GraphNode n;
    n.name = name;
    n.kind = kind;
    n.inputs = std::move(inputs);
    fx.graph.nodes.push_back(std::move(n));
  };
  add_plain("audio_in", NodeKind::input, {"audio"});

  auto add_linear = [&](const std::string &name, const std::string &input, Eigen::Index d_in, bool relu_after) {
    GraphNode n;
    n.name = name;
    n.kind = NodeKind::linear;
    n.inputs = {input};
    n.weight = name + ".weight";
    n.out_features = opt.hidden;
    n.in_features = d_in;
    fx.graph.nodes.push_back(n);
    const double gain = relu_after ? std::sqrt(2.0) : 1.0;
    Matrix w = detail::gaussian(rng, opt.hidden, d_in, gain / std::sqrt(static_cast<double>(d_in)));
    if (opt.dist == WeightDist::outlier) detail::inject_outliers(rng, w, opt.outlier_fraction, opt.outlier_scale);
    fx.weights.entries[n.weight] = Tensor::from_matrix(w);
    if (!relu_after) return name;
    add_plain(name + ".relu", NodeKind::relu, {name});
    return name + ".relu";
  };

  std::string prev = "audio_in";
  Eigen::Index dim = opt.audio_dim;
  for (int i = 0; i < n_enc; ++i) {
    prev = add_linear((chain ? "fc" : "enc") + std::to_string(i), prev, dim, i + 1 < n_enc);
    dim = opt.hidden;
  }
  if (n_dec > 0) {
    add_plain("bridge", NodeKind::concat, {prev, "text"});
    prev = "bridge";
    dim = opt.hidden + opt.text_dim;
    for (int i = 0; i < n_dec; ++i) {
      prev = add_linear("dec" + std::to_string(i), prev, dim, i + 1 < n_dec);
      dim = opt.hidden;
    }
  }

  fx.calib.entries["audio"] = Tensor::from_matrix(detail::correlated_activations(rng, opt.audio_dim, opt.samples));
  if (n_dec > 0) {
    fx.calib.entries["text"] = Tensor::from_matrix(detail::correlated_activations(rng, opt.text_dim, opt.samples));
  }
  const std::string dist = opt.dist == WeightDist::gauss ? "gauss" : "outlier";
  for (auto *store : {&fx.weights, &fx.calib}) {
    store->metadata["generator"] = "fadeq-synth";
    store->metadata["seed"] = std::to_string(opt.seed);
    store->metadata["dist"] = dist;
    store->metadata["layers"] = std::to_string(opt.layers);
    store->metadata["topology"] = chain ? "chain" : "encdec";
  }
  fx.graph.validate();
  return fx;
}

}  // namespace fadeq
