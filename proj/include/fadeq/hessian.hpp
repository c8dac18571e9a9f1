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
#include "fadeq/quant.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace fadeq {

/// Damped calibration Hessian X X^T + lambda I with its inverse. Immutable
/// once built; safe to share across row workers.
struct HessianInfo {
  Eigen::Index dim = 0;
  Matrix damped;
  Matrix inverse;
  /// Upper-triangular U with U^T U = inverse. Row j scaled by 1/U(j,j) holds
  /// the inverse-Hessian ratios over the not-yet-quantized columns j..d-1.
  Matrix inverse_factor;
  double lambda = 0.0;
};

/// Lower-triangular L with L L^T = h and a positive diagonal.
inline Matrix cholesky_factor(const Matrix &h) {
  if (h.rows() != h.cols()) {
    throw Error(ErrorCode::shape_mismatch, "cholesky: matrix is not square (" + detail::shape_str(h) + ")");
  }
  detail::require_finite(h, "cholesky input");
  const Eigen::Index n = h.rows();
  const double scale = n > 0 ? h.diagonal().cwiseAbs().maxCoeff() : 0.0;
  const double sym_tol = 1e-12 * std::max(scale, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      if (std::abs(h(i, j) - h(j, i)) > sym_tol) {
        throw Error(ErrorCode::invalid_argument, "cholesky: matrix is not symmetric");
      }
    }
  }
  const double pivot_floor = std::numeric_limits<double>::epsilon() * static_cast<double>(n) * scale;
  Matrix l = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = h(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > pivot_floor)) {
      throw Error(ErrorCode::singular_hessian,
                  "cholesky: matrix is not positive definite (pivot " + std::to_string(j) + ")");
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = h(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

/// Inverse of L L^T from its lower factor, by two triangular solves.
inline Matrix inverse_from_cholesky(const Matrix &l) {
  const Eigen::Index n = l.rows();
  Matrix linv = l.triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n));
  Matrix inv = linv.transpose() * linv;
  return 0.5 * (inv + inv.transpose());
}

/// Builds HessianInfo around an already damped symmetric matrix.
inline HessianInfo make_hessian_info(const Matrix &damped, double lambda) {
  HessianInfo info;
  info.dim = damped.rows();
  info.damped = damped;
  info.lambda = lambda;
  try {
    const Matrix l = cholesky_factor(damped);
    info.inverse = inverse_from_cholesky(l);
    info.inverse_factor = cholesky_factor(info.inverse).transpose();
  } catch (const Error &e) {
    if (e.code() != ErrorCode::singular_hessian) throw;
    throw Error(ErrorCode::singular_hessian,
                std::string("Hessian factorization failed after damping (lambda=") + std::to_string(lambda) +
                    "); increase damping_ratio. " + e.what());
  }
  return info;
}

/// H = X X^T + lambda I with lambda = damping_ratio * mean(diag(X X^T)),
/// or epsilon when that mean is zero.
inline HessianInfo compute_hessian(const Matrix &x_hat, const QuantConfig &cfg) {
  cfg.validate();
  detail::require(x_hat.rows() >= 1 && x_hat.cols() >= 1, ErrorCode::invalid_argument,
                  "calibration activations must be non-empty, got " + detail::shape_str(x_hat));
  detail::require_finite(x_hat, "calibration activations");
  Matrix h = x_hat * x_hat.transpose();
  h = 0.5 * (h + h.transpose());
  const double mean_diag = h.diagonal().mean();
  const double lambda = mean_diag > 0.0 ? cfg.damping_ratio * mean_diag : cfg.epsilon;
  h.diagonal().array() += lambda;
  return make_hessian_info(h, lambda);
}

}  // namespace fadeq
