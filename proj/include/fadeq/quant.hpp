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

#include "fadeq/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>

namespace fadeq {

struct QuantConfig {
  int bits = 4;
  /// Elements per group along the input dimension of each output row.
  int group_size = 64;
  /// Guard added to denominators of normalized metrics.
  double epsilon = 1e-8;
  /// Damping lambda as a fraction of the mean Hessian diagonal.
  double damping_ratio = 0.01;

  void validate() const {
    using detail::require;
    require(bits >= 2 && bits <= 8, ErrorCode::invalid_argument,
            "bits must be in [2, 8], got " + std::to_string(bits));
    require(group_size >= 1, ErrorCode::invalid_argument, "group_size must be >= 1");
    require(epsilon > 0.0, ErrorCode::invalid_argument, "epsilon must be > 0");
    require(damping_ratio >= 0.0, ErrorCode::invalid_argument, "damping_ratio must be >= 0");
  }
};

using CodeMatrix = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Integer codes with one scale per (row, group). Reconstructs exactly to
/// codes(i, j) * scales(i, j / group_size).
struct QuantizedMatrix {
  CodeMatrix codes;
  Matrix scales;
  int bits = 4;
  int group_size = 64;
};

constexpr int code_min(int bits) noexcept { return -(1 << (bits - 1)); }
constexpr int code_max(int bits) noexcept { return (1 << (bits - 1)) - 1; }

constexpr Eigen::Index num_groups(Eigen::Index d_in, Eigen::Index group_size) noexcept {
  return (d_in + group_size - 1) / group_size;
}

/// Symmetric max-calibrated scale: max|w| / (2^{b-1} - 1). An all-zero group
/// gets scale 1.0 so it quantizes to zero codes.
template <typename Derived>
double compute_group_scale(const Eigen::DenseBase<Derived> &group, int bits) {
  detail::require(bits >= 2 && bits <= 8, ErrorCode::invalid_argument, "bits must be in [2, 8]");
  detail::require(group.size() > 0, ErrorCode::invalid_argument, "empty quantization group");
  double max_abs = 0.0;
  for (Eigen::Index i = 0; i < group.size(); ++i) {
    const double v = group.derived().coeff(i);
    if (!std::isfinite(v)) throw Error(ErrorCode::non_finite, "non-finite value in quantization group");
    max_abs = std::max(max_abs, std::abs(v));
  }
  if (max_abs == 0.0) return 1.0;
  return max_abs / static_cast<double>(code_max(bits));
}

inline double compute_group_scale(std::span<const double> group, int bits) {
  return compute_group_scale(
      Eigen::Map<const Vector>(group.data(), static_cast<Eigen::Index>(group.size())), bits);
}

/// clamp(round(w / s)) with halves rounded away from zero.
inline std::int32_t quantize_value(double w, double scale, int bits) noexcept {
  const double q = std::round(w / scale);
  const double lo = code_min(bits);
  const double hi = code_max(bits);
  return static_cast<std::int32_t>(std::clamp(q, lo, hi));
}

/// Nearest grid point of `scale` at `bits` (value, not code).
inline double quantize_dequantize(double w, double scale, int bits) noexcept {
  return static_cast<double>(quantize_value(w, scale, bits)) * scale;
}

/// Per-(row, group) scales by the max rule.
inline Matrix rtn_scales(const Matrix &w, const QuantConfig &cfg) {
  cfg.validate();
  detail::require_finite(w, "weight matrix");
  const Eigen::Index g = cfg.group_size;
  const Eigen::Index groups = num_groups(w.cols(), g);
  Matrix scales(w.rows(), groups);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index k = 0; k < groups; ++k) {
      const Eigen::Index start = k * g;
      const Eigen::Index len = std::min(g, w.cols() - start);
      scales(i, k) = compute_group_scale(w.row(i).segment(start, len), cfg.bits);
    }
  }
  return scales;
}

/// Round-to-nearest against externally supplied scales.
inline QuantizedMatrix quantize_with_scales(const Matrix &w, const Matrix &scales,
                                            const QuantConfig &cfg) {
  cfg.validate();
  detail::require_finite(w, "weight matrix");
  const Eigen::Index g = cfg.group_size;
  if (scales.rows() != w.rows() || scales.cols() != num_groups(w.cols(), g)) {
    throw Error(ErrorCode::shape_mismatch, "scale matrix " + detail::shape_str(scales) +
                                               " does not match weight " + detail::shape_str(w) +
                                               " with group size " + std::to_string(g));
  }
  detail::require((scales.array() > 0.0).all() && scales.allFinite(), ErrorCode::invalid_argument,
                  "scales must be finite and positive");
  QuantizedMatrix q{CodeMatrix(w.rows(), w.cols()), scales, cfg.bits, cfg.group_size};
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      q.codes(i, j) = quantize_value(w(i, j), scales(i, j / g), cfg.bits);
    }
  }
  return q;
}

/// Data-free round-to-nearest baseline: each group quantized with its own
/// max-calibrated scale.
inline QuantizedMatrix quantize_rtn(const Matrix &w, const QuantConfig &cfg) {
  return quantize_with_scales(w, rtn_scales(w, cfg), cfg);
}

inline Matrix reconstruct(const QuantizedMatrix &q) {
  const Eigen::Index g = q.group_size;
  Matrix out(q.codes.rows(), q.codes.cols());
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      out(i, j) = static_cast<double>(q.codes(i, j)) * q.scales(i, j / g);
    }
  }
  return out;
}

}  // namespace fadeq
