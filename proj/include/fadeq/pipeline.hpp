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

#include "fadeq/correction.hpp"
#include "fadeq/graph.hpp"
#include "fadeq/graph_io.hpp"
#include "fadeq/hessian.hpp"
#include "fadeq/quant.hpp"
#include "fadeq/solver.hpp"
#include "fadeq/store.hpp"

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace fadeq {

/// rtn: data-free rounding. gptq: Hessian solver on W. qep: solver on
/// W + alpha * correction with a fixed alpha. fade: same with a per-layer
/// alpha synthesized from diagnostics.
enum class Method { rtn, gptq, qep, fade };

inline std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::rtn: return "rtn";
    case Method::gptq: return "gptq";
    case Method::qep: return "qep";
    case Method::fade: return "fade";
  }
  return "unknown";
}

inline std::optional<Method> parse_method(std::string_view s) noexcept {
  for (Method m : {Method::rtn, Method::gptq, Method::qep, Method::fade}) {
    if (to_string(m) == s) return m;
  }
  if (s == "qep-fixed") return Method::qep;
  return std::nullopt;
}

struct RunConfig {
  Method method = Method::fade;
  double fixed_alpha = 0.5;
  QuantConfig quant;
  FadeParams fade;
  std::uint64_t seed = 0;

  void validate() const {
    quant.validate();
    fade.validate();
    if (method == Method::qep) {
      detail::require(fixed_alpha >= 0.0 && fixed_alpha <= 1.0, ErrorCode::invalid_argument,
                      "fixed alpha must be in [0, 1]");
    }
  }
};

struct LayerReport {
  std::string layer_id;
  int depth = 0;
  /// Absent for the rtn method.
  std::optional<LayerDiagnostics> diagnostics;
  /// Alpha actually used for the corrected target (0 for rtn and gptq).
  double applied_alpha = 0.0;
  /// ||f_l(X) - f_hat_l(X)||_F at this node, and relative to ||f_l(X)||_F.
  double output_error = 0.0;
  double output_rel_error = 0.0;
  /// Tr(dW H dW^T) of the final quantized weight against W (0 for rtn).
  double trace_loss = 0.0;
  double seconds = 0.0;

  friend bool operator==(const LayerReport &a, const LayerReport &b) {
    auto same_diag = [](const std::optional<LayerDiagnostics> &x, const std::optional<LayerDiagnostics> &y) {
      if (x.has_value() != y.has_value()) return false;
      if (!x) return true;
      return x->layer_id == y->layer_id && x->e_r == y->e_r && x->e_calib == y->e_calib && x->e_stab == y->e_stab &&
             x->delta_gain == y->delta_gain && x->v_int == y->v_int && x->r_calib == y->r_calib &&
             x->score == y->score && x->alpha == y->alpha;
    };
    return a.layer_id == b.layer_id && a.depth == b.depth && same_diag(a.diagnostics, b.diagnostics) &&
           a.applied_alpha == b.applied_alpha && a.output_error == b.output_error &&
           a.output_rel_error == b.output_rel_error && a.trace_loss == b.trace_loss;
  }
};

struct QuantReport {
  RunConfig config;
  std::vector<LayerReport> layers;
  /// Squared Frobenius error summed over the graph's sink nodes.
  double delta_total = 0.0;
  double end_to_end_error = 0.0;
  double end_to_end_rel_error = 0.0;
  double total_seconds = 0.0;
};

/// Weight name -> matrix.
using WeightMap = std::map<std::string, Matrix, std::less<>>;

struct QuantResult {
  /// Every weight the graph uses; quantized ones replaced by their grid values.
  WeightMap weights;
  std::map<std::string, QuantizedMatrix> quantized;
  QuantReport report;
};

inline WeightMap load_weights(const LayerGraph &graph, const TensorStore &store) {
  WeightMap out;
  for (const auto &n : graph.nodes) {
    if (n.kind == NodeKind::linear && !out.count(n.weight)) out.emplace(n.weight, node_weight(store, n));
  }
  return out;
}

inline WeightProvider provider_for(const WeightMap &weights) {
  return [&weights](const GraphNode &n) -> const Matrix & {
    auto it = weights.find(n.weight);
    if (it == weights.end()) throw Error(ErrorCode::invalid_argument, "weight '" + n.weight + "' not provided");
    return it->second;
  };
}

namespace detail {

inline double frobenius_sq_over(const std::vector<std::string> &names, const ActivationMap &a, const ActivationMap &b) {
  double sum = 0.0;
  for (const auto &n : names) sum += (lookup(a, n) - lookup(b, n)).squaredNorm();
  return sum;
}

inline void check_weights(const LayerGraph &graph, const WeightMap &weights) {
  std::set<std::string, std::less<>> quantized;
  for (const auto &n : graph.nodes) {
    if (n.kind != NodeKind::linear) continue;
    auto it = weights.find(n.weight);
    if (it == weights.end()) throw Error(ErrorCode::invalid_argument, "node '" + n.name + "': weight '" + n.weight + "' missing");
    if (it->second.rows() != n.out_features || it->second.cols() != n.in_features) {
      throw Error(ErrorCode::shape_mismatch, "node '" + n.name + "': weight is " + shape_str(it->second) +
                                                 ", graph declares " + std::to_string(n.out_features) + "x" +
                                                 std::to_string(n.in_features));
    }
    require_finite(it->second, "weight '" + n.weight + "'");
    if (n.quantize && !quantized.insert(n.weight).second) {
      throw Error(ErrorCode::graph_invalid, "weight '" + n.weight + "' is quantized by more than one node");
    }
  }
}

}  // namespace detail

/// Layer-by-layer quantization of every quantizable linear node.
///
/// For each such node, in graph order: X comes from the all-clean forward
/// pass and X_hat from the pass through the layers quantized so far. The
/// Hessian is built from X_hat; RTN and GPTQ(W) provide the diagnostics;
/// alpha is 0 (gptq), fixed (qep) or synthesized (fade); the final weight
/// is GPTQ(W + alpha * W delta X_hat^T H^{-1}). The rtn method quantizes W
/// directly and records no diagnostics.
inline QuantResult run_quantization(const LayerGraph &graph, const WeightMap &weights, const ActivationMap &calib,
                                    const RunConfig &cfg) {
  using clock = std::chrono::steady_clock;
  const auto run_start = clock::now();
  cfg.validate();
  graph.validate();
  check_calibration(graph, calib);
  detail::check_weights(graph, weights);

  const ActivationMap clean = forward(graph, provider_for(weights), calib);
  const std::vector<int> depths = graph.depths();

  QuantResult result;
  result.weights = weights;
  result.report.config = cfg;

  ActivationMap quant;
  for (const auto &s : graph.slots) quant.emplace(s.name, calib.find(s.name)->second);

  for (std::size_t idx = 0; idx < graph.nodes.size(); ++idx) {
    const GraphNode &node = graph.nodes[idx];
    if (node.kind != NodeKind::linear || !node.quantize) {
      const Matrix *w = node.kind == NodeKind::linear ? &weights.find(node.weight)->second : nullptr;
      quant[node.name] = eval_node(node, quant, w);
      continue;
    }
    const auto layer_start = clock::now();
    LayerReport layer;
    layer.layer_id = node.name;
    layer.depth = depths[idx];
    try {
      QuantConfig qc = cfg.quant;
      if (node.group_size) qc.group_size = *node.group_size;
      const Matrix &w = weights.find(node.weight)->second;
      const Matrix &x_clean = detail::lookup(clean, node.inputs[0]);
      const Matrix &x_hat = detail::lookup(quant, node.inputs[0]);

      QuantizedMatrix final_q;
      if (cfg.method == Method::rtn) {
        final_q = quantize_rtn(w, qc);
      } else {
        const HessianInfo h = compute_hessian(x_hat, qc);
        const Matrix w_rtn = reconstruct(quantize_rtn(w, qc));
        SolveResult calibrated = gptq_quantize(w, h, qc);
        const Matrix w_calib = reconstruct(calibrated.quantized);
        LayerDiagnostics diag = score_layer(compute_diagnostics(w, w_rtn, w_calib, qc.epsilon), cfg.fade);
        diag.layer_id = node.name;
        layer.diagnostics = diag;

        if (cfg.method == Method::gptq) {
          layer.applied_alpha = 0.0;
          final_q = std::move(calibrated.quantized);
          layer.trace_loss = calibrated.trace_loss;
        } else {
          layer.applied_alpha = cfg.method == Method::qep ? cfg.fixed_alpha : diag.alpha;
          const Matrix correction = compute_correction(w, x_clean - x_hat, x_hat, h);
          const Matrix target = corrected_target(w, correction, layer.applied_alpha);
          detail::require_finite(target, "corrected target");
          final_q = gptq_quantize(target, h, qc).quantized;
          layer.trace_loss = trace_loss(w, final_q, h);
        }
      }
      Matrix w_hat = reconstruct(final_q);
      quant[node.name] = eval_node(node, quant, &w_hat);
      result.weights[node.weight] = std::move(w_hat);
      result.quantized[node.weight] = std::move(final_q);
    } catch (const Error &e) {
      throw e.with_context("layer '" + node.name + "'");
    }
    const Matrix &clean_out = clean.find(node.name)->second;
    layer.output_error = (clean_out - quant[node.name]).norm();
    layer.output_rel_error = layer.output_error / (clean_out.norm() + cfg.quant.epsilon);
    layer.seconds = std::chrono::duration<double>(clock::now() - layer_start).count();
    result.report.layers.push_back(std::move(layer));
  }

  const auto sinks = graph.sinks();
  result.report.delta_total = detail::frobenius_sq_over(sinks, clean, quant);
  double clean_sq = 0.0;
  for (const auto &s : sinks) clean_sq += detail::lookup(clean, s).squaredNorm();
  result.report.end_to_end_error = std::sqrt(result.report.delta_total);
  result.report.end_to_end_rel_error = result.report.end_to_end_error / (std::sqrt(clean_sq) + cfg.quant.epsilon);
  result.report.total_seconds = std::chrono::duration<double>(clock::now() - run_start).count();
  return result;
}

struct AccumulationPoint {
  std::string node;
  int depth = 0;
  double abs_error = 0.0;
  double rel_error = 0.0;
};

/// ||clean - quantized|| at every non-input node, ordered by depth (ties in
/// graph order).
inline std::vector<AccumulationPoint> measure_accumulation(const LayerGraph &graph, const WeightMap &clean_weights,
                                                           const WeightMap &quant_weights, const ActivationMap &calib,
                                                           double epsilon = 1e-12) {
  const ActivationMap clean = forward(graph, provider_for(clean_weights), calib);
  const ActivationMap quant = forward(graph, provider_for(quant_weights), calib);
  const auto depths = graph.depths();
  std::vector<AccumulationPoint> curve;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const auto &n = graph.nodes[i];
    if (n.kind == NodeKind::input) continue;
    const Matrix &c = clean.find(n.name)->second;
    const double err = (c - quant.find(n.name)->second).norm();
    curve.push_back({n.name, depths[i], err, err / (c.norm() + epsilon)});
  }
  std::stable_sort(curve.begin(), curve.end(),
                   [](const AccumulationPoint &a, const AccumulationPoint &b) { return a.depth < b.depth; });
  return curve;
}

/// End-to-end Frobenius error ||f(X) - f_hat(X)||_F over the sink nodes.
inline double end_to_end_error(const LayerGraph &graph, const WeightMap &clean_weights, const WeightMap &quant_weights,
                               const ActivationMap &calib) {
  const ActivationMap clean = forward(graph, provider_for(clean_weights), calib);
  const ActivationMap quant = forward(graph, provider_for(quant_weights), calib);
  return std::sqrt(detail::frobenius_sq_over(graph.sinks(), clean, quant));
}

/// Output store: every graph weight (quantized ones as f32 grid values)
/// plus "<weight>.codes" (i32) and "<weight>.scales" (f32) per quantized
/// weight.
inline TensorStore to_store(const QuantResult &result) {
  TensorStore store;
  for (const auto &[name, w] : result.weights) store.entries[name] = Tensor::from_matrix(w);
  for (const auto &[name, q] : result.quantized) {
    store.entries[name + ".codes"] = Tensor::from_codes(q.codes);
    store.entries[name + ".scales"] = Tensor::from_matrix(q.scales);
    store.metadata[name + ".bits"] = std::to_string(q.bits);
    store.metadata[name + ".group_size"] = std::to_string(q.group_size);
  }
  return store;
}

}  // namespace fadeq
