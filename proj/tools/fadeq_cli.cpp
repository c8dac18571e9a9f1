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

#include "fadeq/commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace fadeq;
using namespace fadeq::cli;

struct QuantizeFlags {
  std::string graph, weights, calib, out, report;
  int bits = 4;
  int group_size = 64;
  std::string method = "fade";
  std::optional<double> alpha;
  double k1 = 1.0, k2 = 1.0, k3 = 1.0;
  double alpha_min = 0.1, alpha_max = 0.8;
  double damping = 0.01;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  long calib_samples = 0;
};

void add_run_flags(CLI::App *cmd, QuantizeFlags &f, bool with_method) {
  cmd->add_option("--graph", f.graph, "Graph description (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--weights", f.weights, "Weight tensor store")->required()->check(CLI::ExistingFile);
  cmd->add_option("--calib", f.calib, "Calibration tensor store, one entry per slot")->required()->check(CLI::ExistingFile);
  cmd->add_option("--bits", f.bits, "Weight bit-width, 2..8")->capture_default_str()->check(CLI::Range(2, 8));
  cmd->add_option("--group-size", f.group_size, "Elements per quantization group")->capture_default_str()->check(CLI::PositiveNumber);
  if (with_method) {
    cmd->add_option("--method", f.method, "rtn | gptq | qep | fade")
        ->capture_default_str()
        ->check(CLI::IsMember({"rtn", "gptq", "qep", "fade"}));
    cmd->add_option("--alpha", f.alpha, "Fixed alpha in [0,1] for --method qep (default 0.5)")->check(CLI::Range(0.0, 1.0));
  }
  cmd->add_option("--k1", f.k1, "Weight of the RTN-error term")->capture_default_str()->check(CLI::NonNegativeNumber);
  cmd->add_option("--k2", f.k2, "Weight of the calibration-gain term")->capture_default_str()->check(CLI::NonNegativeNumber);
  cmd->add_option("--k3", f.k3, "Weight of the instability penalty")->capture_default_str()->check(CLI::NonNegativeNumber);
  cmd->add_option("--alpha-min", f.alpha_min, "Lower alpha bound")->capture_default_str();
  cmd->add_option("--alpha-max", f.alpha_max, "Upper alpha bound")->capture_default_str();
  cmd->add_option("--damping", f.damping, "Hessian damping as a fraction of its mean diagonal")->capture_default_str()->check(CLI::NonNegativeNumber);
  cmd->add_option("--epsilon", f.epsilon, "Denominator guard for normalized metrics")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--seed", f.seed, "Seed for calibration subsampling")->capture_default_str();
  cmd->add_option("--calib-samples", f.calib_samples, "Calibration columns drawn per seed (0 = all)")->capture_default_str()->check(CLI::NonNegativeNumber);
}

/// Builds and checks the run configuration before any file is touched.
QuantizeOptions to_options(const QuantizeFlags &f) {
  QuantizeOptions opt;
  opt.graph = f.graph;
  opt.weights = f.weights;
  opt.calib = f.calib;
  opt.out = f.out;
  opt.report = f.report;
  opt.calib_samples = f.calib_samples;
  opt.run.method = *parse_method(f.method);
  if (f.alpha && opt.run.method != Method::qep) {
    throw CLI::ValidationError("--alpha", "only valid with --method qep");
  }
  opt.run.fixed_alpha = f.alpha.value_or(0.5);
  opt.run.quant.bits = f.bits;
  opt.run.quant.group_size = f.group_size;
  opt.run.quant.damping_ratio = f.damping;
  opt.run.quant.epsilon = f.epsilon;
  opt.run.fade = {f.k1, f.k2, f.k3, f.alpha_min, f.alpha_max};
  opt.run.seed = f.seed;
  try {
    opt.run.validate();
  } catch (const Error &e) {
    throw CLI::ValidationError(e.what());
  }
  return opt;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"fadeq: layer-wise post-training weight quantization (RTN, GPTQ, QEP, FADE)"};
  app.footer(std::string("\nEnvironment:\n  FADEQ_THREADS  caps solver worker threads\n\n") + kExitCodeHelp);
  app.require_subcommand(1);

  QuantizeFlags qf;
  auto *quantize = app.add_subcommand("quantize", "Quantize every linear layer of a graph");
  add_run_flags(quantize, qf, true);
  quantize->add_option("--out", qf.out, "Output tensor store")->required();
  quantize->add_option("--report", qf.report, "Report path (.csv for CSV, otherwise JSON)");

  QuantizeFlags df;
  auto *diagnose = app.add_subcommand("diagnose", "Per-layer FADE diagnostics and alphas, report only");
  add_run_flags(diagnose, df, false);
  diagnose->add_option("--report", df.report, "Report path (.csv for CSV, otherwise JSON)")->required();

  QuantizeFlags sf;
  std::string grid_text = "0,0.1,...,1";
  int seeds = 3;
  std::string sweep_out;
  auto *sweep = app.add_subcommand("sweep", "End-to-end error over a fixed-alpha grid plus FADE");
  add_run_flags(sweep, sf, false);
  sweep->add_option("--alpha-grid", grid_text, "Comma list of alphas; 'a,b,...,c' expands a progression")->capture_default_str();
  sweep->add_option("--seeds", seeds, "Runs per grid point")->capture_default_str()->check(CLI::PositiveNumber);
  sweep->add_option("--out", sweep_out, "Output CSV")->required();

  SynthOptions synth_opt;
  std::string dist = "gauss";
  std::string topology = "encdec";
  SynthPaths synth_paths;
  std::string synth_w, synth_c, synth_g;
  auto *synth = app.add_subcommand("synth", "Write a synthetic fixture (encoder-decoder or plain chain)");
  synth->add_option("--layers", synth_opt.layers, "Number of linear layers")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_opt.seed, "Generator seed")->capture_default_str();
  synth->add_option("--dist", dist, "gauss | outlier (1% of weights scaled by 10)")
      ->capture_default_str()
      ->check(CLI::IsMember({"gauss", "outlier"}));
  synth->add_option("--topology", topology, "encdec | chain")
      ->capture_default_str()
      ->check(CLI::IsMember({"encdec", "chain"}));
  synth->add_option("--samples", synth_opt.samples, "Calibration samples")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--out-weights", synth_w, "Weight store path")->required();
  synth->add_option("--out-calib", synth_c, "Calibration store path")->required();
  synth->add_option("--out-graph", synth_g, "Graph file path")->required();

  try {
    app.parse(argc, argv);
    if (*quantize) {
      cmd_quantize(to_options(qf));
    } else if (*diagnose) {
      df.method = "fade";
      cmd_diagnose(to_options(df));
    } else if (*sweep) {
      sf.method = "fade";
      SweepOptions opt;
      opt.base = to_options(sf);
      try {
        opt.alpha_grid = parse_alpha_grid(grid_text);
      } catch (const Error &e) {
        throw CLI::ValidationError("--alpha-grid", e.what());
      }
      opt.seeds = seeds;
      opt.out = sweep_out;
      cmd_sweep(opt);
    } else if (*synth) {
      synth_opt.dist = *parse_weight_dist(dist);
      synth_opt.topology = *parse_topology(topology);
      cmd_synth(synth_opt, {synth_w, synth_c, synth_g});
    }
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  } catch (const Error &e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception &e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kOk;
}
