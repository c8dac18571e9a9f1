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

#include <algorithm>
#include <cmath>
#include <string>

namespace fadeq {

/// Weights of the three score components and the alpha range.
struct FadeParams {
  double k1 = 1.0;
  double k2 = 1.0;
  double k3 = 1.0;
  double alpha_min = 0.1;
  double alpha_max = 0.8;

  void validate() const {
    using detail::require;
    require(k1 >= 0.0 && k2 >= 0.0 && k3 >= 0.0, ErrorCode::invalid_argument, "k1, k2, k3 must be >= 0");
    require(alpha_min >= 0.0 && alpha_min < alpha_max && alpha_max <= 1.0, ErrorCode::invalid_argument,
            "alpha bounds must satisfy 0 <= alpha_min < alpha_max <= 1");
  }
};

/// Per-layer diagnostics. compute_diagnostics fills the four metrics;
/// score_layer fills the score components and alpha.
struct LayerDiagnostics {
  std::string layer_id;
  double e_r = 0.0;         // normalized RTN error
  double e_calib = 0.0;     // normalized calibrated (GPTQ) error
  double e_stab = 0.0;      // RTN vs calibrated divergence
  double delta_gain = 0.0;  // relative gain of calibration over RTN
  double v_int = 0.0;
  double r_calib = 0.0;
  double score = 0.0;
  double alpha = 0.0;
};

inline LayerDiagnostics compute_diagnostics(const Matrix &w, const Matrix &w_rtn, const Matrix &w_calib,
                                            double epsilon) {
  if (w.rows() != w_rtn.rows() || w.cols() != w_rtn.cols() || w.rows() != w_calib.rows() ||
      w.cols() != w_calib.cols()) {
    throw Error(ErrorCode::shape_mismatch, "compute_diagnostics: shapes " + detail::shape_str(w) + ", " +
                                               detail::shape_str(w_rtn) + ", " + detail::shape_str(w_calib) +
                                               " differ");
  }
  detail::require(epsilon > 0.0, ErrorCode::invalid_argument, "epsilon must be > 0");
  detail::require_finite(w, "weights");
  detail::require_finite(w_rtn, "RTN weights");
  detail::require_finite(w_calib, "calibrated weights");

  const double denom = w.norm() + epsilon;
  LayerDiagnostics d;
  d.e_r = (w - w_rtn).norm() / denom;
  d.e_calib = (w - w_calib).norm() / denom;
  d.e_stab = (w_rtn - w_calib).norm() / denom;
  d.delta_gain = (d.e_r - d.e_calib) / (d.e_r + epsilon);
  return d;
}

inline double logistic(double s) noexcept { return 1.0 / (1.0 + std::exp(-s)); }

/// alpha_min + (alpha_max - alpha_min) * sigmoid(score), clipped to the range.
inline double alpha_from_score(double score, const FadeParams &params) {
  // Written around the midpoint so that score 0 lands exactly on it.
  const double mid = 0.5 * (params.alpha_min + params.alpha_max);
  const double half = 0.5 * (params.alpha_max - params.alpha_min);
  const double a = mid + half * (2.0 * logistic(score) - 1.0);
  return std::clamp(a, params.alpha_min, params.alpha_max);
}

/// Fills v_int = k1 log(1 + e_r), r_calib = k2 max(delta, 0) - k3 log(1 + e_stab),
/// score = v_int + r_calib and alpha.
inline LayerDiagnostics score_layer(LayerDiagnostics d, const FadeParams &params) {
  params.validate();
  d.v_int = params.k1 * std::log1p(d.e_r);
  d.r_calib = params.k2 * std::max(d.delta_gain, 0.0) - params.k3 * std::log1p(d.e_stab);
  d.score = d.v_int + d.r_calib;
  d.alpha = alpha_from_score(d.score, params);
  return d;
}

inline double synthesize_alpha(const LayerDiagnostics &d, const FadeParams &params) {
  return score_layer(d, params).alpha;
}

/// Alpha-independent correction direction W delta X_hat^T H^{-1}, where
/// delta = X - X_hat is the upstream activation error. The corrected target
/// is W + alpha * correction.
inline Matrix compute_correction(const Matrix &w, const Matrix &delta_act, const Matrix &x_hat,
                                 const HessianInfo &h) {
  if (delta_act.rows() != w.cols() || x_hat.rows() != w.cols() || delta_act.cols() != x_hat.cols() ||
      h.dim != w.cols()) {
    throw Error(ErrorCode::shape_mismatch, "compute_correction: weight " + detail::shape_str(w) + ", delta " +
                                               detail::shape_str(delta_act) + ", X_hat " +
                                               detail::shape_str(x_hat) + ", Hessian dim " +
                                               std::to_string(h.dim));
  }
  const Matrix cross = delta_act * x_hat.transpose();
  return (w * cross) * h.inverse;
}

inline Matrix corrected_target(const Matrix &w, const Matrix &correction, double alpha) {
  return w + alpha * correction;
}

}  // namespace fadeq
