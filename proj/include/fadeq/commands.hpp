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

#include "fadeq/graph_io.hpp"
#include "fadeq/pipeline.hpp"
#include "fadeq/report.hpp"
#include "fadeq/store.hpp"
#include "fadeq/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fadeq::cli {

namespace fs = std::filesystem;

/// Process exit codes. Usage errors are detected before any file I/O.
enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kInvalidArgument = 3,
  kShapeMismatch = 4,
  kGraphInvalid = 5,
  kIoFailure = 6,
  kBadMagic = 7,
  kVersionMismatch = 8,
  kCrcMismatch = 9,
  kTruncated = 10,
  kMalformed = 11,
  kNonFinite = 12,
  kSingularHessian = 13,
  kSearchOverflow = 14,
};

inline int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return kInvalidArgument;
    case ErrorCode::shape_mismatch: return kShapeMismatch;
    case ErrorCode::graph_invalid: return kGraphInvalid;
    case ErrorCode::io_failure: return kIoFailure;
    case ErrorCode::bad_magic: return kBadMagic;
    case ErrorCode::version_mismatch: return kVersionMismatch;
    case ErrorCode::crc_mismatch: return kCrcMismatch;
    case ErrorCode::truncated: return kTruncated;
    case ErrorCode::malformed: return kMalformed;
    case ErrorCode::non_finite: return kNonFinite;
    case ErrorCode::singular_hessian: return kSingularHessian;
    case ErrorCode::search_overflow: return kSearchOverflow;
  }
  return kInternal;
}

inline const char *kExitCodeHelp =
    "Exit codes:\n"
    "   0  success\n"
    "   1  internal error\n"
    "   2  usage error (bad flags or flag combination)\n"
    "   3  invalid argument\n"
    "   4  shape mismatch\n"
    "   5  invalid graph description\n"
    "   6  I/O failure\n"
    "   7  tensor store: bad magic\n"
    "   8  tensor store: version mismatch\n"
    "   9  tensor store: CRC mismatch\n"
    "  10  tensor store: truncated\n"
    "  11  malformed file\n"
    "  12  non-finite values\n"
    "  13  singular Hessian (raise --damping)\n"
    "  14  oracle search space overflow\n";

/// Flags shared by quantize, diagnose and sweep.
struct QuantizeOptions {
  fs::path graph;
  fs::path weights;
  fs::path calib;
  RunConfig run;
  /// Columns of the calibration set drawn (per seed) for calibration;
  /// 0 uses every sample.
  Eigen::Index calib_samples = 0;
  fs::path out;
  fs::path report;
};

struct SweepOptions {
  QuantizeOptions base;
  std::vector<double> alpha_grid;
  int seeds = 1;
  fs::path out;
};

struct Inputs {
  LayerGraph graph;
  TensorStore weight_store;
  WeightMap weights;
  ActivationMap calib;
};

inline Inputs load_inputs(const QuantizeOptions &opt) {
  Inputs in;
  in.graph = read_graph(opt.graph);
  in.weight_store = read_store(opt.weights);
  in.weights = load_weights(in.graph, in.weight_store);
  const TensorStore calib_store = read_store(opt.calib);
  in.calib = calibration_from_store(in.graph, calib_store);
  return in;
}

/// Seeded draw of `count` sample columns, shared by every slot. Returns the
/// input unchanged when count is 0 or covers every sample.
inline ActivationMap subsample_calibration(const ActivationMap &calib, Eigen::Index count, std::uint64_t seed) {
  if (calib.empty() || count <= 0) return calib;
  const Eigen::Index n = calib.begin()->second.cols();
  if (count >= n) return calib;
  std::vector<Eigen::Index> cols(static_cast<std::size_t>(n));
  std::iota(cols.begin(), cols.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  for (Eigen::Index k = 0; k < count; ++k) {
    std::uniform_int_distribution<Eigen::Index> pick(k, n - 1);
    std::swap(cols[static_cast<std::size_t>(k)], cols[static_cast<std::size_t>(pick(rng))]);
  }
  std::sort(cols.begin(), cols.begin() + count);
  ActivationMap out;
  for (const auto &[name, x] : calib) {
    Matrix sub(x.rows(), count);
    for (Eigen::Index k = 0; k < count; ++k) sub.col(k) = x.col(cols[static_cast<std::size_t>(k)]);
    out.emplace(name, std::move(sub));
  }
  return out;
}

inline QuantResult run_on(const Inputs &in, const RunConfig &run, Eigen::Index calib_samples) {
  return run_quantization(in.graph, in.weights, subsample_calibration(in.calib, calib_samples, run.seed), run);
}

/// quantize: writes the quantized store and the report.
inline QuantResult cmd_quantize(const QuantizeOptions &opt) {
  opt.run.validate();
  const Inputs in = load_inputs(opt);
  QuantResult result = run_on(in, opt.run, opt.calib_samples);
  write_store(to_store(result), opt.out);
  if (!opt.report.empty()) write_report(result.report, opt.report, report_format_for(opt.report));
  return result;
}

/// diagnose: FADE diagnostics and alphas per layer; report only.
inline QuantReport cmd_diagnose(QuantizeOptions opt) {
  opt.run.method = Method::fade;
  opt.run.validate();
  const Inputs in = load_inputs(opt);
  QuantReport report = run_on(in, opt.run, opt.calib_samples).report;
  write_report(report, opt.report, report_format_for(opt.report));
  return report;
}

/// "0,0.1,0.2" or the progression shorthand "0,0.1,...,1".
inline std::vector<double> parse_alpha_grid(const std::string &text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    parts.push_back(item);
  }
  auto to_num = [](const std::string &s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception &) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw Error(ErrorCode::invalid_argument, "bad alpha grid value '" + s + "'");
    return v;
  };
  std::vector<double> grid;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i] != "...") {
      grid.push_back(to_num(parts[i]));
      continue;
    }
    if (grid.size() < 2 || i + 1 >= parts.size()) {
      throw Error(ErrorCode::invalid_argument, "'...' needs two leading values and an end value");
    }
    const double step = grid[grid.size() - 1] - grid[grid.size() - 2];
    const double stop = to_num(parts[i + 1]);
    if (!(step > 0.0)) throw Error(ErrorCode::invalid_argument, "'...' needs an increasing progression");
    const double start = grid.back();
    const auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9));
    for (long k = 1; k < count; ++k) grid.push_back(start + static_cast<double>(k) * step);
  }
  if (grid.empty()) throw Error(ErrorCode::invalid_argument, "empty alpha grid");
  for (double a : grid) {
    if (!(a >= 0.0 && a <= 1.0)) throw Error(ErrorCode::invalid_argument, "alpha grid values must be in [0, 1]");
  }
  return grid;
}

struct SweepRow {
  std::string method;
  double alpha = 0.0;
  int seeds = 0;
  double mean_error = 0.0;
  double std_error = 0.0;
};

inline void mean_std(const std::vector<double> &v, double &mean, double &stddev) {
  mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  stddev = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
}

/// sweep: fixed-alpha runs over the grid and one FADE run, each repeated
/// per seed (seed, seed+1, ...). With --calib-samples the seed selects the
/// calibration subset; the error is always the end-to-end Frobenius error on
/// the full calibration set. Std is the sample standard deviation.
inline std::vector<SweepRow> cmd_sweep(const SweepOptions &opt) {
  detail::require(opt.seeds >= 1, ErrorCode::invalid_argument, "seeds must be >= 1");
  detail::require(!opt.alpha_grid.empty(), ErrorCode::invalid_argument, "empty alpha grid");
  for (double a : opt.alpha_grid) {
    detail::require(a >= 0.0 && a <= 1.0, ErrorCode::invalid_argument, "alpha grid values must be in [0, 1]");
  }
  opt.base.run.validate();
  const Inputs in = load_inputs(opt.base);

  auto run_seeds = [&](RunConfig run, double *mean_alpha) {
    std::vector<double> errors;
    double alpha_sum = 0.0;
    std::size_t alpha_count = 0;
    for (int s = 0; s < opt.seeds; ++s) {
      run.seed = opt.base.run.seed + static_cast<std::uint64_t>(s);
      const QuantResult r = run_on(in, run, opt.base.calib_samples);
      errors.push_back(end_to_end_error(in.graph, in.weights, r.weights, in.calib));
      for (const auto &l : r.report.layers) {
        alpha_sum += l.applied_alpha;
        ++alpha_count;
      }
    }
    if (mean_alpha) *mean_alpha = alpha_count ? alpha_sum / static_cast<double>(alpha_count) : 0.0;
    return errors;
  };

  std::vector<SweepRow> rows;
  for (double a : opt.alpha_grid) {
    RunConfig run = opt.base.run;
    run.method = Method::qep;
    run.fixed_alpha = a;
    SweepRow row{"qep", a, opt.seeds};
    mean_std(run_seeds(run, nullptr), row.mean_error, row.std_error);
    rows.push_back(row);
  }
  RunConfig fade = opt.base.run;
  fade.method = Method::fade;
  SweepRow row{"fade", 0.0, opt.seeds};
  mean_std(run_seeds(fade, &row.alpha), row.mean_error, row.std_error);
  rows.push_back(row);

  std::string csv = "method,alpha,seeds,mean_error,std_error\n";
  for (const auto &r : rows) {
    csv += r.method + "," + detail::format_double(r.alpha) + "," + std::to_string(r.seeds) + "," +
           detail::format_double(r.mean_error) + "," + detail::format_double(r.std_error) + "\n";
  }
  write_text(opt.out, csv);
  return rows;
}

struct SynthPaths {
  fs::path weights;
  fs::path calib;
  fs::path graph;
};

/// synth: writes the weight store, calibration store and graph file.
inline SynthFixture cmd_synth(const SynthOptions &opt, const SynthPaths &paths) {
  SynthFixture fx = make_synthetic(opt);
  write_store(fx.weights, paths.weights);
  write_store(fx.calib, paths.calib);
  write_graph(fx.graph, paths.graph);
  return fx;
}

}  // namespace fadeq::cli
