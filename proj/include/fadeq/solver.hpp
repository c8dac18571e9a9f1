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
#include "fadeq/hessian.hpp"
#include "fadeq/parallel.hpp"
#include "fadeq/quant.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace fadeq {

struct SolveResult {
  QuantizedMatrix quantized;
  /// Tr(dW H dW^T) under the damped Hessian, dW = W_hat - W.
  double trace_loss = 0.0;
  Vector per_row_loss;
};

/// One quantized row produced by the per-row oracles.
struct QuantizedRow {
  std::vector<std::int32_t> codes;
  Vector scales;  // one per group
  Vector values;  // codes times group scale
  double loss = 0.0;
};

/// (w - w_hat)^T H (w - w_hat) for every row.
inline Vector row_losses(const Matrix &w, const Matrix &w_hat, const Matrix &h) {
  if (w.rows() != w_hat.rows() || w.cols() != w_hat.cols() || h.rows() != w.cols()) {
    throw Error(ErrorCode::shape_mismatch, "row_losses: incompatible shapes");
  }
  const Matrix diff = w_hat - w;
  return ((diff * h).array() * diff.array()).rowwise().sum();
}

inline double row_loss(const Vector &w, const Vector &w_hat, const Matrix &h) {
  const Vector diff = w_hat - w;
  return diff.dot(h * diff);
}

/// Column-sequential Hessian-aware quantization with error compensation.
///
/// Columns are visited in index order. Each committed column's rounding
/// error is pushed onto the remaining columns with the inverse-Hessian
/// ratios of the still-unquantized subset, read off the upper Cholesky
/// factor of H^{-1}. A group's scale is taken from the compensated weights
/// when its first column is reached and stays fixed for the group.
inline SolveResult gptq_quantize(const Matrix &w, const HessianInfo &h, const QuantConfig &cfg) {
  cfg.validate();
  detail::require_finite(w, "weight matrix");
  if (h.dim != w.cols() || h.inverse_factor.rows() != w.cols()) {
    throw Error(ErrorCode::shape_mismatch, "gptq: weight " + detail::shape_str(w) +
                                               " does not match Hessian dim " + std::to_string(h.dim));
  }
  const Eigen::Index rows = w.rows();
  const Eigen::Index cols = w.cols();
  const Eigen::Index g = cfg.group_size;
  const Matrix &u = h.inverse_factor;

  SolveResult result;
  result.quantized = QuantizedMatrix{CodeMatrix(rows, cols), Matrix(rows, num_groups(cols, g)), cfg.bits,
                                     cfg.group_size};
  QuantizedMatrix &q = result.quantized;

  parallel_for(static_cast<long>(rows), [&](long row) {
    const Eigen::Index i = row;
    Vector work = w.row(i).transpose();
    double scale = 1.0;
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (j % g == 0) {
        const Eigen::Index len = std::min(g, cols - j);
        scale = compute_group_scale(work.segment(j, len), cfg.bits);
        q.scales(i, j / g) = scale;
      }
      const std::int32_t code = quantize_value(work(j), scale, cfg.bits);
      q.codes(i, j) = code;
      const double committed = static_cast<double>(code) * scale;
      const double err = work(j) - committed;
      work(j) = committed;
      const double step = err / u(j, j);
      for (Eigen::Index k = j + 1; k < cols; ++k) {
        work(k) -= step * u(j, k);
      }
      if (j + 1 < cols && !work.tail(cols - j - 1).allFinite()) {
        throw Error(ErrorCode::non_finite, "gptq: non-finite compensation at column " + std::to_string(j) +
                                               "; increase damping_ratio");
      }
    }
  });

  result.per_row_loss = row_losses(w, reconstruct(q), h.damped);
  result.trace_loss = result.per_row_loss.sum();
  return result;
}

/// Trace loss of an arbitrary quantized matrix under the damped Hessian.
inline double trace_loss(const Matrix &w, const QuantizedMatrix &q, const HessianInfo &h) {
  return row_losses(w, reconstruct(q), h.damped).sum();
}

namespace detail {

inline Vector row_group_scales(const Vector &w_row, const QuantConfig &cfg) {
  const Eigen::Index g = cfg.group_size;
  const Eigen::Index n = w_row.size();
  Vector scales(num_groups(n, g));
  for (Eigen::Index k = 0; k < scales.size(); ++k) {
    const Eigen::Index start = k * g;
    scales(k) = compute_group_scale(w_row.segment(start, std::min(g, n - start)), cfg.bits);
  }
  return scales;
}

inline void check_row_inputs(const Vector &w_row, const HessianInfo &h, const Vector &scales,
                             const QuantConfig &cfg, const char *who) {
  cfg.validate();
  if (h.dim != w_row.size()) {
    throw Error(ErrorCode::shape_mismatch, std::string(who) + ": row length " + std::to_string(w_row.size()) +
                                               " does not match Hessian dim " + std::to_string(h.dim));
  }
  if (scales.size() != num_groups(w_row.size(), cfg.group_size)) {
    throw Error(ErrorCode::shape_mismatch, std::string(who) + ": wrong number of group scales");
  }
  if (!w_row.allFinite()) throw Error(ErrorCode::non_finite, std::string(who) + ": non-finite weights");
}

}  // namespace detail

/// Greedy one-weight-at-a-time quantizer (OBQ). Picks the unquantized weight
/// with the smallest (w_q - Q(w_q))^2 / [H_F^{-1}]_qq, compensates the rest
/// of F along (H_F^{-1})_{:,q}, and recomputes H_F^{-1} from scratch each
/// step. Oracle for small rows only.
inline QuantizedRow obq_oracle(const Vector &w_row, const HessianInfo &h, const Vector &scales,
                               const QuantConfig &cfg) {
  detail::check_row_inputs(w_row, h, scales, cfg, "obq_oracle");
  const Eigen::Index n = w_row.size();
  detail::require(n <= 16, ErrorCode::invalid_argument, "obq_oracle supports at most 16 weights");
  const Eigen::Index g = cfg.group_size;

  Vector work = w_row;
  QuantizedRow out;
  out.codes.assign(static_cast<std::size_t>(n), 0);
  out.scales = scales;
  std::vector<Eigen::Index> remaining(static_cast<std::size_t>(n));
  std::iota(remaining.begin(), remaining.end(), Eigen::Index{0});

  while (!remaining.empty()) {
    const auto m = static_cast<Eigen::Index>(remaining.size());
    Matrix sub(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
      for (Eigen::Index b = 0; b < m; ++b) sub(a, b) = h.damped(remaining[a], remaining[b]);
    }
    const Matrix sub_inv = inverse_from_cholesky(cholesky_factor(sub));

    Eigen::Index best = 0;
    double best_score = std::numeric_limits<double>::infinity();
    for (Eigen::Index p = 0; p < m; ++p) {
      const Eigen::Index idx = remaining[p];
      const double target = quantize_dequantize(work(idx), scales(idx / g), cfg.bits);
      const double e = work(idx) - target;
      const double score = e * e / sub_inv(p, p);
      if (score < best_score) {
        best_score = score;
        best = p;
      }
    }

    const Eigen::Index idx = remaining[best];
    const double s = scales(idx / g);
    const std::int32_t code = quantize_value(work(idx), s, cfg.bits);
    const double committed = static_cast<double>(code) * s;
    const double step = (work(idx) - committed) / sub_inv(best, best);
    for (Eigen::Index r = 0; r < m; ++r) {
      if (r != best) work(remaining[r]) -= step * sub_inv(r, best);
    }
    work(idx) = committed;
    out.codes[static_cast<std::size_t>(idx)] = code;
    remaining.erase(remaining.begin() + best);
  }

  out.values = work;
  out.loss = row_loss(w_row, out.values, h.damped);
  return out;
}

/// OBQ with scales from the uncompensated row (max rule per group).
inline QuantizedRow obq_oracle(const Vector &w_row, const HessianInfo &h, const QuantConfig &cfg) {
  cfg.validate();
  return obq_oracle(w_row, h, detail::row_group_scales(w_row, cfg), cfg);
}

inline constexpr double kExhaustiveLimit = 1e6;

/// Brute-force minimizer of (w - w_hat)^T H (w - w_hat) over every grid
/// assignment for fixed scales. Ties keep the lexicographically smallest
/// code vector.
inline QuantizedRow exhaustive_oracle(const Vector &w_row, const HessianInfo &h, const Vector &scales,
                                      const QuantConfig &cfg) {
  detail::check_row_inputs(w_row, h, scales, cfg, "exhaustive_oracle");
  const Eigen::Index n = w_row.size();
  const int lo = code_min(cfg.bits);
  const int hi = code_max(cfg.bits);
  const double levels = hi - lo + 1;
  if (std::pow(levels, static_cast<double>(n)) > kExhaustiveLimit) {
    throw Error(ErrorCode::search_overflow, "exhaustive_oracle: search space of " + std::to_string(levels) + "^" +
                                                std::to_string(n) + " exceeds 1e6");
  }
  const Eigen::Index g = cfg.group_size;
  std::vector<std::int32_t> codes(static_cast<std::size_t>(n), lo);
  Vector values(n);
  for (Eigen::Index j = 0; j < n; ++j) values(j) = lo * scales(j / g);

  QuantizedRow best;
  best.scales = scales;
  best.loss = std::numeric_limits<double>::infinity();
  while (true) {
    const double loss = row_loss(w_row, values, h.damped);
    if (loss < best.loss) {
      best.loss = loss;
      best.codes = codes;
      best.values = values;
    }
    // Odometer with index 0 most significant.
    Eigen::Index j = n - 1;
    while (j >= 0 && codes[static_cast<std::size_t>(j)] == hi) {
      codes[static_cast<std::size_t>(j)] = lo;
      values(j) = lo * scales(j / g);
      --j;
    }
    if (j < 0) break;
    ++codes[static_cast<std::size_t>(j)];
    values(j) = codes[static_cast<std::size_t>(j)] * scales(j / g);
  }
  return best;
}

}  // namespace fadeq
