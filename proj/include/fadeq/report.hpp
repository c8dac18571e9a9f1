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

#include "fadeq/pipeline.hpp"
#include "fadeq/store.hpp"

#include <charconv>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace fadeq {

enum class ReportFormat { json, csv };

namespace detail {

/// Shortest decimal form that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline nlohmann::json diagnostics_to_json(const LayerDiagnostics &d) {
  return {{"layer_id", d.layer_id}, {"e_r", d.e_r},     {"e_calib", d.e_calib}, {"e_stab", d.e_stab},
          {"delta_gain", d.delta_gain}, {"v_int", d.v_int}, {"r_calib", d.r_calib}, {"score", d.score},
          {"alpha", d.alpha}};
}

inline LayerDiagnostics diagnostics_from_json(const nlohmann::json &j) {
  LayerDiagnostics d;
  d.layer_id = j.at("layer_id").get<std::string>();
  d.e_r = j.at("e_r").get<double>();
  d.e_calib = j.at("e_calib").get<double>();
  d.e_stab = j.at("e_stab").get<double>();
  d.delta_gain = j.at("delta_gain").get<double>();
  d.v_int = j.at("v_int").get<double>();
  d.r_calib = j.at("r_calib").get<double>();
  d.score = j.at("score").get<double>();
  d.alpha = j.at("alpha").get<double>();
  return d;
}

}  // namespace detail

inline nlohmann::json report_to_json(const QuantReport &r) {
  using nlohmann::json;
  const RunConfig &c = r.config;
  json config = {{"method", std::string(to_string(c.method))},
                 {"fixed_alpha", c.fixed_alpha},
                 {"bits", c.quant.bits},
                 {"group_size", c.quant.group_size},
                 {"epsilon", c.quant.epsilon},
                 {"damping_ratio", c.quant.damping_ratio},
                 {"k1", c.fade.k1},
                 {"k2", c.fade.k2},
                 {"k3", c.fade.k3},
                 {"alpha_min", c.fade.alpha_min},
                 {"alpha_max", c.fade.alpha_max},
                 {"seed", c.seed}};
  json layers = json::array();
  for (const auto &l : r.layers) {
    layers.push_back({{"layer_id", l.layer_id},
                      {"depth", l.depth},
                      {"diagnostics", l.diagnostics ? detail::diagnostics_to_json(*l.diagnostics) : json(nullptr)},
                      {"applied_alpha", l.applied_alpha},
                      {"output_error", l.output_error},
                      {"output_rel_error", l.output_rel_error},
                      {"trace_loss", l.trace_loss},
                      {"seconds", l.seconds}});
  }
  return {{"config", config},
          {"layers", layers},
          {"end_to_end",
           {{"delta_total", r.delta_total}, {"frobenius", r.end_to_end_error}, {"relative", r.end_to_end_rel_error}}},
          {"total_seconds", r.total_seconds}};
}

inline QuantReport report_from_json(const nlohmann::json &j) {
  QuantReport r;
  try {
    const auto &c = j.at("config");
    const auto method = parse_method(c.at("method").get<std::string>());
    if (!method) throw Error(ErrorCode::malformed, "report has unknown method");
    r.config.method = *method;
    r.config.fixed_alpha = c.at("fixed_alpha").get<double>();
    r.config.quant.bits = c.at("bits").get<int>();
    r.config.quant.group_size = c.at("group_size").get<int>();
    r.config.quant.epsilon = c.at("epsilon").get<double>();
    r.config.quant.damping_ratio = c.at("damping_ratio").get<double>();
    r.config.fade.k1 = c.at("k1").get<double>();
    r.config.fade.k2 = c.at("k2").get<double>();
    r.config.fade.k3 = c.at("k3").get<double>();
    r.config.fade.alpha_min = c.at("alpha_min").get<double>();
    r.config.fade.alpha_max = c.at("alpha_max").get<double>();
    r.config.seed = c.at("seed").get<std::uint64_t>();
    for (const auto &l : j.at("layers")) {
      LayerReport lr;
      lr.layer_id = l.at("layer_id").get<std::string>();
      lr.depth = l.at("depth").get<int>();
      if (!l.at("diagnostics").is_null()) lr.diagnostics = detail::diagnostics_from_json(l.at("diagnostics"));
      lr.applied_alpha = l.at("applied_alpha").get<double>();
      lr.output_error = l.at("output_error").get<double>();
      lr.output_rel_error = l.at("output_rel_error").get<double>();
      lr.trace_loss = l.at("trace_loss").get<double>();
      lr.seconds = l.at("seconds").get<double>();
      r.layers.push_back(std::move(lr));
    }
    const auto &e = j.at("end_to_end");
    r.delta_total = e.at("delta_total").get<double>();
    r.end_to_end_error = e.at("frobenius").get<double>();
    r.end_to_end_rel_error = e.at("relative").get<double>();
    r.total_seconds = j.at("total_seconds").get<double>();
  } catch (const nlohmann::json::exception &e) {
    throw Error(ErrorCode::malformed, std::string("malformed report: ") + e.what());
  }
  return r;
}

inline const char *kReportCsvHeader = "layer_id,e_r,e_calib,e_stab,delta_gain,score,alpha,layer_out_err,depth";

/// One row per quantized layer. Diagnostic cells are empty for rtn runs;
/// `alpha` is the alpha applied to the layer.
inline std::string report_to_csv(const QuantReport &r) {
  using detail::format_double;
  std::string out = std::string(kReportCsvHeader) + "\n";
  for (const auto &l : r.layers) {
    out += detail::csv_field(l.layer_id);
    if (l.diagnostics) {
      const auto &d = *l.diagnostics;
      for (double v : {d.e_r, d.e_calib, d.e_stab, d.delta_gain, d.score}) out += "," + format_double(v);
    } else {
      out += ",,,,,";
    }
    out += "," + format_double(l.applied_alpha) + "," + format_double(l.output_error) + "," + std::to_string(l.depth) +
           "\n";
  }
  return out;
}

inline void write_text(const std::filesystem::path &path, const std::string &text) {
  write_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

inline void write_report(const QuantReport &r, const std::filesystem::path &path, ReportFormat format) {
  write_text(path, format == ReportFormat::json ? report_to_json(r).dump(2) + "\n" : report_to_csv(r));
}

inline QuantReport read_report(const std::filesystem::path &path) {
  const auto bytes = read_bytes(path);
  try {
    return report_from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
  } catch (const nlohmann::json::exception &e) {
    throw Error(ErrorCode::malformed, path.string() + ": " + e.what());
  }
}

/// Picks the format from the extension: ".csv" means CSV, anything else JSON.
inline ReportFormat report_format_for(const std::filesystem::path &path) {
  return path.extension() == ".csv" ? ReportFormat::csv : ReportFormat::json;
}

}  // namespace fadeq
