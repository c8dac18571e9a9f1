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

#include "fadeq/graph_io.hpp"
#include "fadeq/report.hpp"
#include "fadeq/store.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <random>

namespace fadeq {
namespace {

using Bytes = std::vector<std::uint8_t>;

void append(Bytes &out, std::initializer_list<int> bytes) {
  for (int b : bytes) out.push_back(static_cast<std::uint8_t>(b));
}

void append_u64(Bytes &out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

Bytes magic_and_version() {
  Bytes b = {'F', 'A', 'D', 'E', 'T', 'N', 'S', 'R'};
  append(b, {1, 0, 0, 0});
  return b;
}

TensorStore one_tensor_store() {
  Matrix m(1, 1);
  m << 1.5;
  TensorStore s;
  s.entries["a"] = Tensor::from_matrix(m);
  return s;
}

TEST(Store, EmptyStoreIsHeaderOnly) {
  Bytes expected = magic_and_version();
  append(expected, {0, 0, 0, 0});  // count
  append(expected, {0, 0, 0, 0});  // crc32 of nothing
  const Bytes got = encode_store({});
  EXPECT_EQ(got, expected);
  const TensorStore back = decode_store(got);
  EXPECT_TRUE(back.entries.empty());
  EXPECT_TRUE(back.metadata.empty());
}

TEST(Store, SingleFloatLayout) {
  Bytes expected = magic_and_version();
  append(expected, {1, 0, 0, 0});
  append(expected, {1, 0, 'a', 0, 2});
  append_u64(expected, 1);
  append_u64(expected, 1);
  append_u64(expected, 0);
  append(expected, {0x00, 0x00, 0xC0, 0x3F});
  append(expected, {0x6F, 0x25, 0xD8, 0x5C});
  EXPECT_EQ(encode_store(one_tensor_store()), expected);
  EXPECT_EQ(decode_store(expected).at("a").to_matrix()(0, 0), 1.5);
}

TEST(Store, CorruptPayloadByteFailsCrc) {
  Bytes b = encode_store(one_tensor_store());
  b[b.size() - 6] ^= 0x01;
  EXPECT_FADEQ_ERROR(decode_store(b), ErrorCode::crc_mismatch);
  Bytes c = encode_store(one_tensor_store());
  c.back() ^= 0x80;
  EXPECT_FADEQ_ERROR(decode_store(c), ErrorCode::crc_mismatch);
}

TEST(Store, DistinctHeaderErrors) {
  Bytes b = encode_store(one_tensor_store());
  Bytes bad_magic = b;
  bad_magic[0] = 'X';
  EXPECT_FADEQ_ERROR(decode_store(bad_magic), ErrorCode::bad_magic);
  Bytes bad_version = b;
  bad_version[8] = 2;
  EXPECT_FADEQ_ERROR(decode_store(bad_version), ErrorCode::version_mismatch);
  Bytes trailing = b;
  trailing.insert(trailing.end() - 4, {0, 0, 0, 0});
  EXPECT_FADEQ_ERROR(decode_store(trailing), ErrorCode::malformed);
  Bytes bad_dtype = b;
  bad_dtype[16 + 3] = 7;
  EXPECT_FADEQ_ERROR(decode_store(bad_dtype), ErrorCode::malformed);
}

TEST(Store, EveryPrefixIsTruncated) {
  TensorStore s = one_tensor_store();
  s.metadata["k"] = "v";
  const Bytes b = encode_store(s);
  for (std::size_t n = 0; n < b.size(); ++n) {
    EXPECT_FADEQ_ERROR(decode_store(Bytes(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(n))),
                       ErrorCode::truncated);
  }
}

TEST(Store, RejectsInconsistentTensors) {
  TensorStore s;
  Tensor t;
  t.shape = {2, 2};
  t.data = std::vector<float>{1, 2, 3};
  s.entries["bad"] = t;
  EXPECT_FADEQ_ERROR(encode_store(s), ErrorCode::shape_mismatch);
  TensorStore reserved;
  reserved.entries["__metadata__"] = Tensor::from_matrix(Matrix::Zero(1, 1));
  EXPECT_FADEQ_ERROR(encode_store(reserved), ErrorCode::invalid_argument);
}

TEST(Store, MetadataRoundTrip) {
  TensorStore s;
  s.metadata = {{"seed", "7"}, {"note", "odd, \"quoted\" \xc3\xa9"}, {"", "empty key"}};
  const TensorStore back = decode_store(encode_store(s));
  EXPECT_EQ(back.metadata, s.metadata);
  EXPECT_TRUE(back.entries.empty());
}

TEST(Store, FileRoundTripAndIoErrors) {
  testing::TempDir dir;
  TensorStore s = one_tensor_store();
  s.metadata["x"] = "y";
  write_store(s, dir / "s.bin");
  EXPECT_EQ(read_store(dir / "s.bin"), s);
  EXPECT_FADEQ_ERROR(read_store(dir / "missing.bin"), ErrorCode::io_failure);
  EXPECT_FADEQ_ERROR(write_store(s, dir / "no" / "such" / "dir.bin"), ErrorCode::io_failure);
}

TEST(StoreProperties, RandomRoundTripIsBitExact) {
  std::mt19937_64 rng(2026);
  for (int trial = 0; trial < 300; ++trial) {
    const TensorStore s = testing::random_store(rng);
    const Bytes b = encode_store(s);
    const TensorStore back = decode_store(b);
    EXPECT_EQ(back, s) << "trial " << trial;
    EXPECT_EQ(encode_store(back), b) << "trial " << trial;
  }
}

TEST(StoreProperties, NanPayloadsSurviveBitExact) {
  Tensor t;
  t.shape = {3};
  t.data = std::vector<float>{std::bit_cast<float>(0x7FC00001u), std::bit_cast<float>(0xFFA00000u), -0.0f};
  TensorStore s;
  s.entries["n"] = t;
  const Bytes b = encode_store(s);
  EXPECT_EQ(encode_store(decode_store(b)), b);
}

void write_file(const std::filesystem::path &p, const std::string &text) {
  std::ofstream(p) << text;
}

TEST(GraphFile, MinimalGraph) {
  testing::TempDir dir;
  write_file(dir / "g.json", R"({
    "slots": [{"name": "x", "dim": 3}],
    "nodes": [
      {"name": "in", "kind": "input", "inputs": ["x"]},
      {"name": "fc", "kind": "linear", "inputs": ["in"], "shape": [2, 3]}
    ]})");
  const LayerGraph g = read_graph(dir / "g.json");
  ASSERT_EQ(g.nodes.size(), 2u);
  EXPECT_EQ(g.nodes[1].weight, "fc");
  EXPECT_TRUE(g.nodes[1].quantize);
  EXPECT_FALSE(g.nodes[1].group_size.has_value());
}

TEST(GraphFile, ForwardReferenceIsRejected) {
  const auto doc = nlohmann::json::parse(R"({
    "slots": {"x": 2},
    "nodes": [
      {"name": "a", "kind": "relu", "inputs": ["b"]},
      {"name": "b", "kind": "input", "inputs": ["x"]}
    ]})");
  try {
    parse_graph(doc);
    FAIL() << "expected graph error";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::graph_invalid);
    EXPECT_NE(std::string(e.what()).find("'a'"), std::string::npos) << e.what();
  }
}

TEST(GraphFile, SchemaErrors) {
  using nlohmann::json;
  EXPECT_FADEQ_ERROR(parse_graph(json::parse(R"({"slots": {"x": 2}, "nodes": [{"name": "a", "kind": "softmax", "inputs": ["x"]}]})")),
                     ErrorCode::graph_invalid);
  EXPECT_FADEQ_ERROR(parse_graph(json::parse(R"({"slots": {"x": 2}, "nodes": [{"name": "a", "kind": "linear", "inputs": ["x"]}]})")),
                     ErrorCode::graph_invalid);
  EXPECT_FADEQ_ERROR(parse_graph(json::parse(R"({"slots": {"x": 2}, "nodes": [{"name": "a", "kind": "linear", "inputs": ["x"], "shape": [4, 3]}]})")),
                     ErrorCode::graph_invalid);
  EXPECT_FADEQ_ERROR(parse_graph(json::parse(R"({"nodes": []})")), ErrorCode::graph_invalid);
  EXPECT_FADEQ_ERROR(parse_graph(json::parse("[]")), ErrorCode::graph_invalid);
  testing::TempDir dir;
  write_file(dir / "broken.json", "{\"slots\": ");
  EXPECT_FADEQ_ERROR(read_graph(dir / "broken.json"), ErrorCode::graph_invalid);
  EXPECT_FADEQ_ERROR(read_graph(dir / "absent.json"), ErrorCode::io_failure);
}

TEST(GraphFile, EncoderDecoderToy) {
  nlohmann::json nodes = nlohmann::json::array();
  nodes.push_back({{"name", "audio_in"}, {"kind", "input"}, {"inputs", {"audio"}}});
  std::string prev = "audio_in";
  for (int i = 0; i < 4; ++i) {
    const std::string name = "enc" + std::to_string(i);
    nodes.push_back({{"name", name}, {"kind", "linear"}, {"inputs", {prev}}, {"shape", {16, 16}}});
    prev = name;
  }
  nodes.push_back({{"name", "cat"}, {"kind", "concat"}, {"inputs", {prev, "text"}}});
  nodes.push_back({{"name", "dec0"}, {"kind", "linear"}, {"inputs", {"cat"}}, {"shape", {8, 24}}});
  for (int i = 1; i < 4; ++i) {
    nodes.push_back({{"name", "dec" + std::to_string(i)},
                     {"kind", "linear"},
                     {"inputs", {"dec" + std::to_string(i - 1)}},
                     {"shape", {8, 8}}});
  }
  const nlohmann::json doc = {{"slots", {{"audio", 16}, {"text", 8}}}, {"nodes", nodes}};
  const LayerGraph g = parse_graph(doc);
  EXPECT_EQ(g.nodes.size(), 10u);
  const auto dims = g.validate();
  EXPECT_EQ(dims[5], 24);
  EXPECT_EQ(g.nodes[5].name, "cat");

  testing::TempDir dir;
  write_graph(g, dir / "g.json");
  const LayerGraph back = read_graph(dir / "g.json");
  EXPECT_EQ(graph_to_json(back), graph_to_json(g));
}

TEST(GraphFile, WeightsAndCalibrationFromStores) {
  const LayerGraph g = parse_graph(nlohmann::json::parse(R"({
    "slots": {"x": 3},
    "nodes": [{"name": "fc", "kind": "linear", "inputs": ["x"], "weight": "w", "shape": [2, 3], "group_size": 2}]})"));
  EXPECT_EQ(g.nodes[0].group_size, 2);
  TensorStore s;
  s.entries["w"] = Tensor::from_matrix(Matrix::Ones(2, 3));
  EXPECT_EQ(node_weight(s, g.nodes[0]), Matrix::Ones(2, 3));
  s.entries["w"] = Tensor::from_matrix(Matrix::Ones(3, 2));
  EXPECT_FADEQ_ERROR(node_weight(s, g.nodes[0]), ErrorCode::shape_mismatch);
  TensorStore c;
  c.entries["x"] = Tensor::from_matrix(Matrix::Ones(3, 7));
  EXPECT_EQ(calibration_from_store(g, c).at("x").cols(), 7);
  c.entries["x"] = Tensor::from_matrix(Matrix::Ones(4, 7));
  EXPECT_FADEQ_ERROR(calibration_from_store(g, c), ErrorCode::shape_mismatch);
}

LayerReport sample_layer(const std::string &name) {
  LayerReport l;
  l.layer_id = name;
  l.depth = 2;
  LayerDiagnostics d;
  d.layer_id = name;
  d.e_r = 0.3;
  d.e_calib = 0.1;
  d.e_stab = 0.05;
  d.delta_gain = 0.6666666666666666;
  d.v_int = 0.26236426446749106;
  d.r_calib = 0.6178765;
  d.score = 0.88;
  d.alpha = 0.5648;
  l.diagnostics = d;
  l.applied_alpha = 0.5648;
  l.output_error = 1.0 / 3.0;
  l.output_rel_error = 1e-7;
  l.trace_loss = 12.5;
  l.seconds = 0.25;
  return l;
}

TEST(Report, JsonRoundTrip) {
  QuantReport r;
  r.config.method = Method::qep;
  r.config.fixed_alpha = 0.3;
  r.config.quant.bits = 3;
  r.config.seed = 42;
  r.layers = {sample_layer("enc0"), sample_layer("dec,0")};
  r.layers[1].diagnostics.reset();
  r.delta_total = 2.75;
  r.end_to_end_error = std::sqrt(2.75);
  r.end_to_end_rel_error = 0.01;
  r.total_seconds = 1.5;
  testing::TempDir dir;
  write_report(r, dir / "r.json", ReportFormat::json);
  const QuantReport back = read_report(dir / "r.json");
  EXPECT_EQ(back.layers, r.layers);
  EXPECT_EQ(back.layers[0].seconds, 0.25);
  EXPECT_EQ(report_to_json(back), report_to_json(r));
}

TEST(Report, CsvHeaderOnly) {
  EXPECT_EQ(report_to_csv({}), "layer_id,e_r,e_calib,e_stab,delta_gain,score,alpha,layer_out_err,depth\n");
}

TEST(Report, CsvOneLayer) {
  QuantReport r;
  r.layers = {sample_layer("fc")};
  const std::string csv = report_to_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_NE(csv.find("\nfc,0.3,0.1,0.05,0.6666666666666666,0.88,0.5648,"), std::string::npos) << csv;
  EXPECT_EQ(csv.substr(csv.size() - 3), ",2\n");
}

TEST(Report, CsvQuotesAwkwardNames) {
  QuantReport r;
  r.layers = {sample_layer("blk,1 \"q\"")};
  r.layers[0].diagnostics.reset();
  r.layers[0].applied_alpha = 0.0;
  const std::string csv = report_to_csv(r);
  EXPECT_NE(csv.find("\n\"blk,1 \"\"q\"\"\",,,,,,0,"), std::string::npos) << csv;
}

TEST(Report, FormatFromExtension) {
  EXPECT_EQ(report_format_for("a/b.csv"), ReportFormat::csv);
  EXPECT_EQ(report_format_for("a/b.json"), ReportFormat::json);
  EXPECT_EQ(report_format_for("report"), ReportFormat::json);
}

TEST(Report, MalformedJson) {
  testing::TempDir dir;
  write_file(dir / "r.json", "{\"config\": {}}");
  EXPECT_FADEQ_ERROR(read_report(dir / "r.json"), ErrorCode::malformed);
  write_file(dir / "s.json", "not json");
  EXPECT_FADEQ_ERROR(read_report(dir / "s.json"), ErrorCode::malformed);
}

}  // namespace
}  // namespace fadeq
