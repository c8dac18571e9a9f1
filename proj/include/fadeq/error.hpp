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

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <string_view>

namespace fadeq {

/// Dense row-by-column matrix used for weights (d_out x d_in) and
/// activations (features x samples).
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class ErrorCode {
  invalid_argument,
  shape_mismatch,
  non_finite,
  singular_hessian,
  search_overflow,
  graph_invalid,
  io_failure,
  bad_magic,
  version_mismatch,
  crc_mismatch,
  truncated,
  malformed,
};

inline std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::shape_mismatch: return "shape-mismatch";
    case ErrorCode::non_finite: return "non-finite";
    case ErrorCode::singular_hessian: return "singular-hessian";
    case ErrorCode::search_overflow: return "search-overflow";
    case ErrorCode::graph_invalid: return "graph-invalid";
    case ErrorCode::io_failure: return "io-failure";
    case ErrorCode::bad_magic: return "bad-magic";
    case ErrorCode::version_mismatch: return "version-mismatch";
    case ErrorCode::crc_mismatch: return "crc-mismatch";
    case ErrorCode::truncated: return "truncated";
    case ErrorCode::malformed: return "malformed";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string &what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// Same error with `context: ` prepended to the message.
  Error with_context(std::string_view context) const {
    return Error(code_, std::string(context) + ": " + what());
  }

 private:
  ErrorCode code_;
};

namespace detail {

inline void require(bool cond, ErrorCode code, const std::string &msg) {
  if (!cond) throw Error(code, msg);
}

inline std::string shape_str(const Matrix &m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require_finite(const Matrix &m, const std::string &what) {
  if (!m.allFinite()) throw Error(ErrorCode::non_finite, what + " contains non-finite values");
}

}  // namespace detail
}  // namespace fadeq
