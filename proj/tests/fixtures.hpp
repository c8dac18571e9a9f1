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

#include "fadeq/graph_io.hpp"
#include "fadeq/pipeline.hpp"
#include "fadeq/synth.hpp"

#include <bit>
#include <random>

namespace fadeq::testing {

inline Matrix random_gaussian(std::mt19937_64 &rng, Eigen::Index rows, Eigen::Index cols, double stddev = 1.0) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  }
  return m;
}

/// Gaussian weights with 1% of entries scaled by 10.
inline Matrix random_outlier_weights(std::mt19937_64 &rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix w = random_gaussian(rng, rows, cols);
  std::uniform_int_distribution<Eigen::Index> pick(0, w.size() - 1);
  const auto count = std::max<Eigen::Index>(1, w.size() / 100);
  for (Eigen::Index k = 0; k < count; ++k) w.data()[pick(rng)] *= 10.0;
  return w;
}

/// Calibration with strongly correlated features: a few shared latent
/// factors plus small independent noise.
inline Matrix correlated_calibration(std::mt19937_64 &rng, Eigen::Index dim, Eigen::Index samples) {
  const Eigen::Index factors = std::max<Eigen::Index>(2, dim / 4);
  const Matrix load = random_gaussian(rng, dim, factors);
  return load * random_gaussian(rng, factors, samples) + 0.3 * random_gaussian(rng, dim, samples);
}

/// Random names, ranks 0..4, dims 0..5, f32 (never NaN) or i32 data.
inline TensorStore random_store(std::mt19937_64 &rng) {
  std::uniform_int_distribution<int> n_entries(0, 6), rank_d(0, 4), dim_d(0, 5), name_len(1, 12), byte(0, 255);
  std::uniform_int_distribution<std::uint32_t> bits;
  TensorStore s;
  const int n = n_entries(rng);
  for (int e = 0; e < n; ++e) {
    std::string name;
    const int len = name_len(rng);
    for (int i = 0; i < len; ++i) name.push_back(static_cast<char>('a' + byte(rng) % 26));
    Tensor t;
    const int rank = rank_d(rng);
    for (int r = 0; r < rank; ++r) t.shape.push_back(static_cast<std::uint64_t>(dim_d(rng)));
    const auto count = static_cast<std::size_t>(t.shape_product());
    if (bits(rng) % 2) {
      std::vector<float> v(count);
      for (auto &x : v) {
        float f;
        do {
          f = std::bit_cast<float>(bits(rng));
        } while (f != f);
        x = f;
      }
      t.data = std::move(v);
    } else {
      std::vector<std::int32_t> v(count);
      for (auto &x : v) x = static_cast<std::int32_t>(bits(rng));
      t.data = std::move(v);
    }
    s.entries[name] = std::move(t);
  }
  if (bits(rng) % 2) s.metadata["seed"] = std::to_string(bits(rng));
  return s;
}

/// Synthetic fixture unpacked into the in-memory pipeline inputs.
struct Problem {
  LayerGraph graph;
  WeightMap weights;
  ActivationMap calib;
};

inline Problem make_problem(const SynthOptions &opt) {
  SynthFixture fx = make_synthetic(opt);
  Problem p;
  p.weights = load_weights(fx.graph, fx.weights);
  p.calib = calibration_from_store(fx.graph, fx.calib);
  p.graph = std::move(fx.graph);
  return p;
}

inline Problem make_chain(int layers, std::uint64_t seed, WeightDist dist = WeightDist::gauss) {
  SynthOptions opt;
  opt.layers = layers;
  opt.seed = seed;
  opt.dist = dist;
  opt.topology = SynthTopology::chain;
  return make_problem(opt);
}

}  // namespace fadeq::testing
