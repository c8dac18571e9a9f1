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

#include <filesystem>
#include <string>

#include <json.hpp>

namespace fadeq {

/// Graph files are JSON:
///
///   {
///     "slots": [{"name": "audio", "dim": 16}, ...]   (or {"audio": 16, ...}),
///     "nodes": [
///       {"name": "x", "kind": "input", "inputs": ["audio"]},
///       {"name": "fc1", "kind": "linear", "inputs": ["x"], "weight": "fc1.weight",
///        "shape": [d_out, d_in], "quantize": true, "group_size": 64},
///       {"name": "a1", "kind": "relu", "inputs": ["fc1"]},
///       {"name": "cat", "kind": "concat", "inputs": ["a1", "text"]}
///     ]
///   }
///
/// "weight" defaults to the node name, "quantize" to true, "group_size" to
/// the run-wide setting.
inline LayerGraph parse_graph(const nlohmann::json &doc) {
  using nlohmann::json;
  auto bad = [](const std::string &msg) { return Error(ErrorCode::graph_invalid, msg); };
  if (!doc.is_object()) throw bad("graph document must be a JSON object");
  LayerGraph g;
  try {
    const json &slots = doc.at("slots");
    if (slots.is_object()) {
      for (const auto &[name, dim] : slots.items()) g.slots.push_back({name, dim.get<Eigen::Index>()});
    } else {
      for (const auto &s : slots) g.slots.push_back({s.at("name").get<std::string>(), s.at("dim").get<Eigen::Index>()});
    }
    for (const auto &n : doc.at("nodes")) {
      GraphNode node;
      node.name = n.at("name").get<std::string>();
      const auto kind_name = n.at("kind").get<std::string>();
      const auto kind = parse_node_kind(kind_name);
      if (!kind) throw bad("node '" + node.name + "': unknown kind '" + kind_name + "'");
      node.kind = *kind;
      if (n.contains("inputs")) node.inputs = n.at("inputs").get<std::vector<std::string>>();
      if (node.kind == NodeKind::linear) {
        node.weight = n.value("weight", node.name);
        const auto shape = n.at("shape").get<std::vector<Eigen::Index>>();
        if (shape.size() != 2) throw bad("node '" + node.name + "': shape must be [d_out, d_in]");
        node.out_features = shape[0];
        node.in_features = shape[1];
        node.quantize = n.value("quantize", true);
        if (n.contains("group_size") && !n.at("group_size").is_null()) node.group_size = n.at("group_size").get<int>();
      }
      g.nodes.push_back(std::move(node));
    }
  } catch (const json::exception &e) {
    throw bad(std::string("malformed graph description: ") + e.what());
  }
  g.validate();
  return g;
}

inline nlohmann::json graph_to_json(const LayerGraph &g) {
  using nlohmann::json;
  json slots = json::array();
  for (const auto &s : g.slots) slots.push_back({{"name", s.name}, {"dim", s.dim}});
  json nodes = json::array();
  for (const auto &n : g.nodes) {
    json j = {{"name", n.name}, {"kind", std::string(to_string(n.kind))}, {"inputs", n.inputs}};
    if (n.kind == NodeKind::linear) {
      j["weight"] = n.weight;
      j["shape"] = {n.out_features, n.in_features};
      j["quantize"] = n.quantize;
      if (n.group_size) j["group_size"] = *n.group_size;
    }
    nodes.push_back(std::move(j));
  }
  return {{"slots", slots}, {"nodes", nodes}};
}

inline LayerGraph read_graph(const std::filesystem::path &path) {
  const auto bytes = read_bytes(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception &e) {
    throw Error(ErrorCode::graph_invalid, path.string() + ": " + e.what());
  }
  try {
    return parse_graph(doc);
  } catch (const Error &e) {
    throw e.with_context(path.string());
  }
}

inline void write_graph(const LayerGraph &g, const std::filesystem::path &path) {
  const std::string text = graph_to_json(g).dump(2) + "\n";
  write_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

/// Weight matrix for a linear node, checked against the node's shape.
inline Matrix node_weight(const TensorStore &store, const GraphNode &node) {
  const Matrix w = store.at(node.weight).to_matrix();
  if (w.rows() != node.out_features || w.cols() != node.in_features) {
    throw Error(ErrorCode::shape_mismatch, "node '" + node.name + "': weight '" + node.weight + "' is " +
                                               detail::shape_str(w) + ", graph declares " +
                                               std::to_string(node.out_features) + "x" +
                                               std::to_string(node.in_features));
  }
  return w;
}

/// Calibration activations for every slot of the graph.
inline ActivationMap calibration_from_store(const LayerGraph &g, const TensorStore &store) {
  ActivationMap calib;
  for (const auto &s : g.slots) calib.emplace(s.name, store.at(s.name).to_matrix());
  check_calibration(g, calib);
  return calib;
}

}  // namespace fadeq
