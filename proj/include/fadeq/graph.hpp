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
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace fadeq {

enum class NodeKind { input, linear, relu, add, concat };

inline std::string_view to_string(NodeKind kind) noexcept {
  switch (kind) {
    case NodeKind::input: return "input";
    case NodeKind::linear: return "linear";
    case NodeKind::relu: return "relu";
    case NodeKind::add: return "add";
    case NodeKind::concat: return "concat";
  }
  return "unknown";
}

inline std::optional<NodeKind> parse_node_kind(std::string_view s) noexcept {
  for (NodeKind k : {NodeKind::input, NodeKind::linear, NodeKind::relu, NodeKind::add, NodeKind::concat}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

struct GraphNode {
  std::string name;
  NodeKind kind = NodeKind::linear;
  /// Earlier node names or calibration slot names.
  std::vector<std::string> inputs;
  // linear only
  std::string weight;
  Eigen::Index out_features = 0;
  Eigen::Index in_features = 0;
  bool quantize = true;
  std::optional<int> group_size;
};

struct CalibSlot {
  std::string name;
  Eigen::Index dim = 0;
};

/// Activations keyed by slot or node name; each is features x samples.
using ActivationMap = std::map<std::string, Matrix, std::less<>>;

/// Supplies the weight used when evaluating a linear node.
using WeightProvider = std::function<const Matrix &(const GraphNode &)>;

/// Ordered DAG of linear layers and combinators. List order is the
/// topological order: a node may only reference slots or earlier nodes.
struct LayerGraph {
  std::vector<CalibSlot> slots;
  std::vector<GraphNode> nodes;

  const GraphNode *find(std::string_view name) const {
    for (const auto &n : nodes) {
      if (n.name == name) return &n;
    }
    return nullptr;
  }

  const CalibSlot *find_slot(std::string_view name) const {
    for (const auto &s : slots) {
      if (s.name == name) return &s;
    }
    return nullptr;
  }

  /// Checks references, arity and feature dims. Returns the output feature
  /// count of every node, indexed like `nodes`.
  std::vector<Eigen::Index> validate() const {
    auto fail = [](const std::string &who, const std::string &msg) -> Error {
      return Error(ErrorCode::graph_invalid, "node '" + who + "': " + msg);
    };
    std::set<std::string, std::less<>> seen;
    for (const auto &s : slots) {
      if (s.name.empty()) throw Error(ErrorCode::graph_invalid, "slot with empty name");
      if (s.dim < 1) throw Error(ErrorCode::graph_invalid, "slot '" + s.name + "': dim must be >= 1");
      if (!seen.insert(s.name).second) throw Error(ErrorCode::graph_invalid, "duplicate name '" + s.name + "'");
    }
    std::set<std::string, std::less<>> all_nodes;
    for (const auto &n : nodes) all_nodes.insert(n.name);

    std::map<std::string, Eigen::Index, std::less<>> dims;
    for (const auto &s : slots) dims[s.name] = s.dim;
    std::vector<Eigen::Index> out;
    out.reserve(nodes.size());

    for (const auto &n : nodes) {
      if (n.name.empty()) throw Error(ErrorCode::graph_invalid, "node with empty name");
      if (!seen.insert(n.name).second) throw fail(n.name, "duplicate name");
      std::vector<Eigen::Index> in_dims;
      for (const auto &ref : n.inputs) {
        auto it = dims.find(ref);
        if (it == dims.end()) {
          if (ref == n.name || all_nodes.count(ref)) throw fail(n.name, "forward reference or cycle via '" + ref + "'");
          throw fail(n.name, "unresolved input '" + ref + "'");
        }
        in_dims.push_back(it->second);
      }
      Eigen::Index d = 0;
      switch (n.kind) {
        case NodeKind::input:
          if (n.inputs.size() != 1 || !find_slot(n.inputs[0])) throw fail(n.name, "input node needs exactly one slot");
          d = in_dims[0];
          break;
        case NodeKind::linear:
          if (n.inputs.size() != 1) throw fail(n.name, "linear node needs exactly one input");
          if (n.out_features < 1 || n.in_features < 1) throw fail(n.name, "linear node needs a positive shape");
          if (n.in_features != in_dims[0]) {
            throw fail(n.name, "in_features " + std::to_string(n.in_features) + " does not match input dim " +
                                   std::to_string(in_dims[0]));
          }
          if (n.weight.empty()) throw fail(n.name, "linear node needs a weight name");
          if (n.group_size && *n.group_size < 1) throw fail(n.name, "group_size must be >= 1");
          d = n.out_features;
          break;
        case NodeKind::relu:
          if (n.inputs.size() != 1) throw fail(n.name, "relu node needs exactly one input");
          d = in_dims[0];
          break;
        case NodeKind::add:
          if (n.inputs.size() < 2) throw fail(n.name, "add node needs at least two inputs");
          for (auto v : in_dims) {
            if (v != in_dims[0]) throw fail(n.name, "add operands differ in feature dim");
          }
          d = in_dims[0];
          break;
        case NodeKind::concat:
          if (n.inputs.empty()) throw fail(n.name, "concat node needs inputs");
          for (auto v : in_dims) d += v;
          break;
      }
      dims[n.name] = d;
      out.push_back(d);
    }
    return out;
  }

  /// Number of linear layers on the longest path from the inputs to each node.
  std::vector<int> depths() const {
    std::map<std::string, int, std::less<>> depth;
    std::vector<int> out;
    for (const auto &n : nodes) {
      int d = 0;
      for (const auto &ref : n.inputs) {
        auto it = depth.find(ref);
        if (it != depth.end()) d = std::max(d, it->second);
      }
      if (n.kind == NodeKind::linear) ++d;
      depth[n.name] = d;
      out.push_back(d);
    }
    return out;
  }

  /// Nodes no other node consumes.
  std::vector<std::string> sinks() const {
    std::set<std::string, std::less<>> consumed;
    for (const auto &n : nodes) consumed.insert(n.inputs.begin(), n.inputs.end());
    std::vector<std::string> out;
    for (const auto &n : nodes) {
      if (!consumed.count(n.name) && n.kind != NodeKind::input) out.push_back(n.name);
    }
    return out;
  }
};

/// Checks that every slot is present with its declared dim and that all
/// slots share one sample count. Returns that count.
inline Eigen::Index check_calibration(const LayerGraph &graph, const ActivationMap &calib) {
  Eigen::Index samples = -1;
  for (const auto &s : graph.slots) {
    auto it = calib.find(s.name);
    if (it == calib.end()) throw Error(ErrorCode::invalid_argument, "calibration slot '" + s.name + "' missing");
    const Matrix &x = it->second;
    if (x.rows() != s.dim) {
      throw Error(ErrorCode::shape_mismatch, "calibration slot '" + s.name + "' has " + std::to_string(x.rows()) +
                                                 " features, expected " + std::to_string(s.dim));
    }
    if (x.cols() < 1) throw Error(ErrorCode::invalid_argument, "calibration slot '" + s.name + "' has no samples");
    if (samples >= 0 && x.cols() != samples) {
      throw Error(ErrorCode::shape_mismatch, "calibration slots disagree on sample count");
    }
    detail::require_finite(x, "calibration slot '" + s.name + "'");
    samples = x.cols();
  }
  return samples;
}

namespace detail {

inline const Matrix &lookup(const ActivationMap &acts, const std::string &name) {
  auto it = acts.find(name);
  if (it == acts.end()) throw Error(ErrorCode::graph_invalid, "no activation for '" + name + "'");
  return it->second;
}

}  // namespace detail

/// Evaluates one node given the activations computed so far. `weight` is
/// only read for linear nodes.
inline Matrix eval_node(const GraphNode &node, const ActivationMap &acts, const Matrix *weight) {
  using detail::lookup;
  switch (node.kind) {
    case NodeKind::input:
      return lookup(acts, node.inputs[0]);
    case NodeKind::linear: {
      const Matrix &x = lookup(acts, node.inputs[0]);
      if (!weight || weight->cols() != x.rows()) {
        throw Error(ErrorCode::shape_mismatch, "node '" + node.name + "': weight " +
                                                   (weight ? detail::shape_str(*weight) : std::string("missing")) +
                                                   " cannot multiply input " + detail::shape_str(x));
      }
      return (*weight) * x;
    }
    case NodeKind::relu:
      return lookup(acts, node.inputs[0]).cwiseMax(0.0);
    case NodeKind::add: {
      Matrix sum = lookup(acts, node.inputs[0]);
      for (std::size_t i = 1; i < node.inputs.size(); ++i) {
        const Matrix &x = lookup(acts, node.inputs[i]);
        if (x.rows() != sum.rows() || x.cols() != sum.cols()) {
          throw Error(ErrorCode::shape_mismatch, "node '" + node.name + "': add operands differ in shape");
        }
        sum += x;
      }
      return sum;
    }
    case NodeKind::concat: {
      Eigen::Index rows = 0;
      const Eigen::Index cols = lookup(acts, node.inputs[0]).cols();
      for (const auto &ref : node.inputs) {
        const Matrix &x = lookup(acts, ref);
        if (x.cols() != cols) {
          throw Error(ErrorCode::shape_mismatch, "node '" + node.name + "': concat operands differ in sample count");
        }
        rows += x.rows();
      }
      Matrix out(rows, cols);
      Eigen::Index at = 0;
      for (const auto &ref : node.inputs) {
        const Matrix &x = lookup(acts, ref);
        out.middleRows(at, x.rows()) = x;
        at += x.rows();
      }
      return out;
    }
  }
  throw Error(ErrorCode::graph_invalid, "unknown node kind");
}

/// Full forward pass. The returned map holds the calibration slots plus one
/// activation per node.
inline ActivationMap forward(const LayerGraph &graph, const WeightProvider &weights, const ActivationMap &calib) {
  graph.validate();
  check_calibration(graph, calib);
  ActivationMap acts;
  for (const auto &s : graph.slots) acts.emplace(s.name, calib.find(s.name)->second);
  for (const auto &node : graph.nodes) {
    const Matrix *w = node.kind == NodeKind::linear ? &weights(node) : nullptr;
    acts[node.name] = eval_node(node, acts, w);
  }
  return acts;
}

}  // namespace fadeq
