// Copyright 2026 The DAA Lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// daa_lab: desk-scale over-optimization experiments for direct alignment
// algorithms on an enumerable tree MDP.
//
// Exit codes: 0 success, 1 check or experiment failure, 2 configuration error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "daalab/experiment.hpp"

namespace fs = std::filesystem;
using namespace daalab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

struct GridFlags {
  std::string manifest;
  std::string out;
  std::optional<int> seeds;
  std::vector<double> betas;
  std::vector<std::string> losses;
  std::optional<double> snapshot_every;
  std::optional<int> steps;
  std::optional<unsigned> workers;
};

void add_grid_flags(CLI::App* cmd, GridFlags& f) {
  cmd->add_option("--manifest", f.manifest, "Experiment manifest (JSON)");
  cmd->add_option("--out", f.out, "Output directory (default $DAA_LAB_OUT/<name>)");
  cmd->add_option("--seeds", f.seeds, "Number of seeds");
  cmd->add_option("--betas", f.betas, "Comma-separated beta grid")->delimiter(',');
  cmd->add_option("--losses", f.losses, "Comma-separated losses (dpo,ipo,slic)")->delimiter(',');
  cmd->add_option("--snapshot-every", f.snapshot_every, "Snapshot cadence as a fraction of the run");
  cmd->add_option("--steps", f.steps, "Alignment steps per cell");
  cmd->add_option("--workers", f.workers, "Worker threads (0 = all cores)");
}

ExperimentManifest resolve_manifest(const GridFlags& f, ExperimentManifest defaults) {
  ExperimentManifest m = f.manifest.empty() ? defaults : manifest_from_json(io::read_json(f.manifest), defaults);
  if (f.seeds) m.seeds = *f.seeds;
  if (!f.betas.empty()) m.betas = f.betas;
  if (!f.losses.empty()) {
    m.losses.clear();
    for (const auto& l : f.losses) m.losses.push_back(loss_kind_from_string(l));
  }
  if (f.snapshot_every) m.snapshot_every = *f.snapshot_every;
  if (f.steps) m.steps = *f.steps;
  if (f.workers) m.workers = *f.workers;
  if (!f.out.empty()) {
    m.out_dir = f.out;
  } else if (m.out_dir.empty()) {
    const char* root = std::getenv("DAA_LAB_OUT");
    m.out_dir = (fs::path(root && *root ? root : "daa_lab_out") / m.name).string();
  }
  m.validate();
  return m;
}

int report_failures(const std::vector<std::string>& failures) {
  for (const auto& f : failures) std::cerr << "cell failed: " << f << "\n";
  return failures.empty() ? kExitOk : kExitFailure;
}

int cmd_demo_appendix(const GridFlags& flags) {
  const auto m = resolve_manifest(flags, demo_appendix_manifest());
  if (m.dataset != DatasetKind::canonical_appendix) throw ConfigError("demo-appendix needs the canonical-appendix dataset");
  const auto result = run_experiment(m);
  const fs::path out = m.out_dir;
  const auto failures = write_cell_artifacts(result, out);
  const auto rows = demo_summary(result);
  io::write_file(out / "summary.csv", demo_summary_csv(rows));
  std::printf("%-5s %-6s %14s %14s\n", "loss", "beta", "median_dOOD", "median_dPair");
  for (const auto& c : demo_cell_medians(rows)) {
    std::printf("%-5s %-6s %14.6f %14.6f\n", c.loss.c_str(), io::format_real(c.beta).c_str(), c.ood_delta,
                c.pair_delta);
  }
  std::printf("wrote %zu traces and %zu SFT traces to %s\n", result.cells.size() - failures.size(),
              result.seeds.size(), out.string().c_str());
  return report_failures(failures);
}

int cmd_sweep(const GridFlags& flags) {
  const auto m = resolve_manifest(flags, gold_sweep_manifest());
  if (m.dataset != DatasetKind::gold_generated) throw ConfigError("sweep needs a gold-generated dataset");
  const auto result = run_experiment(m);
  const fs::path out = m.out_dir;
  const auto failures = write_cell_artifacts(result, out);
  const auto rows = sweep_rows(result);
  io::write_file(out / "sweep.csv", sweep_csv(rows));
  std::printf("wrote %zu rows from %zu cells to %s\n", rows.size(), result.cells.size() - failures.size(),
              (out / "sweep.csv").string().c_str());
  return report_failures(failures);
}

int cmd_fit(const std::string& input, const std::string& x_kind, bool intercept, const std::string& loss,
            bool no_aggregate, const std::string& out) {
  std::ifstream in(input);
  if (!in) throw ConfigError("cannot open '" + input + "'");
  const auto rows = io::read_sweep_csv(in);
  const auto pts = fit_points(rows, x_kind_from_string(x_kind), loss, !no_aggregate);
  const auto report = fit_report(pts, x_kind_from_string(x_kind));
  const auto j = fit_report_to_json(report, intercept);
  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    io::write_file(out, j.dump(2) + "\n");
  }
  return kExitOk;
}

int cmd_analyze(const std::string& dir, int samples, const std::string& out) {
  const auto j = analyze_directory(dir, samples);
  const fs::path target = out.empty() ? fs::path(dir) / "analysis.json" : fs::path(out);
  io::write_file(target, j.dump(2) + "\n");
  std::printf("wrote %s\n", target.string().c_str());
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, int cases, bool sabotage, const std::string& out) {
  const auto report = run_gradcheck(seed, cases, sabotage);
  for (const auto& c : report.cases) {
    std::printf("case %3d %-9s %-4s beta=%.4f alpha=%.1f B=%d D=%d stop=%d error=%.3e\n", c.index,
                to_string(c.kind).c_str(), to_string(c.loss).c_str(), c.beta, c.length_alpha, c.branching, c.depth,
                c.stop_action ? 1 : 0, c.error);
  }
  std::printf("max relative error %.3e (tolerance %.0e): %s\n", report.max_error, report.tolerance,
              report.passed() ? "PASS" : "FAIL");
  if (!out.empty()) io::write_file(out, gradcheck_to_json(report).dump(2) + "\n");
  return report.passed() ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Over-optimization lab for direct alignment algorithms on a tree MDP"};
  app.require_subcommand(1);

  GridFlags demo_flags;
  auto* demo = app.add_subcommand("demo-appendix", "Canonical single-preference grid (3 losses x 3 betas x seeds)");
  add_grid_flags(demo, demo_flags);

  GridFlags sweep_flags;
  auto* sweep_cmd = app.add_subcommand("sweep", "Gold-reward sweep over losses, betas and seeds");
  add_grid_flags(sweep_cmd, sweep_flags);

  std::string fit_in, fit_out, fit_loss, x_kind = "sqrt_kl";
  bool intercept = false, no_aggregate = false;
  auto* fit = app.add_subcommand("fit", "Scaling-law fit with quadratic baselines over sweep CSV");
  fit->add_option("--in", fit_in, "Sweep CSV")->required();
  fit->add_option("--x-kind", x_kind, "sqrt_kl or sqrt_fwd_kl")->check(CLI::IsMember({"sqrt_kl", "sqrt_fwd_kl"}));
  fit->add_option("--intercept", intercept, "Report the intercept fit as primary (true/false)");
  fit->add_option("--loss", fit_loss, "Restrict to one loss");
  fit->add_flag("--no-aggregate", no_aggregate, "Fit every row instead of per-checkpoint seed medians");
  fit->add_option("--out", fit_out, "Output JSON (default stdout)");

  std::string an_in, an_out;
  int samples = 512;
  auto* analyze = app.add_subcommand("analyze", "Length regression and correlations over a sweep directory");
  analyze->add_option("--in", an_in, "Sweep output directory")->required();
  analyze->add_option("--samples", samples, "Policy samples per length regression");
  analyze->add_option("--out", an_out, "Output JSON (default <in>/analysis.json)");

  std::uint64_t gc_seed = 0;
  int gc_cases = 100;
  bool sabotage = false;
  std::string gc_out;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every DAA loss gradient");
  gradcheck->add_option("--seed", gc_seed, "Random seed");
  gradcheck->add_option("--cases", gc_cases, "Number of random cases");
  gradcheck->add_flag("--sabotage", sabotage, "Flip the analytic gradient sign (must fail)");
  gradcheck->add_option("--out", gc_out, "Write the JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*demo) return cmd_demo_appendix(demo_flags);
    if (*sweep_cmd) return cmd_sweep(sweep_flags);
    if (*fit) return cmd_fit(fit_in, x_kind, intercept, fit_loss, no_aggregate, fit_out);
    if (*analyze) return cmd_analyze(an_in, samples, an_out);
    if (*gradcheck) return cmd_gradcheck(gc_seed, gc_cases, sabotage, gc_out);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitConfig;
}
