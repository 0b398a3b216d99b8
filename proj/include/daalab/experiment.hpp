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

// Experiment orchestration behind the command-line tool: manifests, the
// appendix demo grid, the gold-reward sweep, fit reports, gradient checks and
// post-hoc analysis over sweep output.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "daalab/analysis.hpp"
#include "daalab/dataset.hpp"
#include "daalab/diffcore.hpp"
#include "daalab/errors.hpp"
#include "daalab/io.hpp"
#include "daalab/metrics.hpp"
#include "daalab/objectives.hpp"
#include "daalab/policy.hpp"
#include "daalab/trainer.hpp"

namespace daalab {

enum class DatasetKind { canonical_appendix, gold_generated };

inline std::string to_string(DatasetKind k) {
  return k == DatasetKind::canonical_appendix ? "canonical-appendix" : "gold-generated";
}

inline DatasetKind dataset_kind_from_string(std::string_view s) {
  if (s == "canonical-appendix") return DatasetKind::canonical_appendix;
  if (s == "gold-generated") return DatasetKind::gold_generated;
  throw ConfigError("unknown dataset kind '" + std::string(s) + "'");
}

// splitmix64 finalizer; gives independent streams from one run seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace stream {
inline constexpr std::uint64_t policy_init = 1;
inline constexpr std::uint64_t gold = 2;
inline constexpr std::uint64_t demos = 3;
inline constexpr std::uint64_t pairs = 4;
}  // namespace stream

struct ExperimentManifest {
  std::string name = "experiment";
  int branching = 3;
  int depth = 3;
  bool stop_action = false;
  DatasetKind dataset = DatasetKind::canonical_appendix;
  int n_pairs = 200;  // gold-generated only
  int n_demos = 16;   // gold-generated only
  double length_coeff = 0.0;
  std::vector<LossKind> losses{LossKind::dpo, LossKind::ipo, LossKind::slic};
  std::vector<double> betas{0.01, 0.1, 0.5};
  int seeds = 10;
  std::uint64_t seed_base = 0;
  std::string out_dir;
  double snapshot_every = 0.05;  // fraction of the run
  int steps = 2000;
  int sft_steps = 500;
  double lr = 1e-2;
  std::size_t hidden_size = kDefaultHiddenSize;
  double init_std = kDefaultInitStd;
  RecurrentInput input = RecurrentInput::state;
  double length_alpha = 0.0;
  unsigned workers = 0;  // 0 = hardware concurrency

  TreeMdp mdp() const { return build_tree(branching, depth, stop_action); }

  void validate() const {
    if (losses.empty() || betas.empty() || seeds < 1) throw ConfigError("manifest: grid must be non-empty");
    for (double b : betas) {
      if (!(b > 0.0)) throw ConfigError("manifest: betas must be > 0");
    }
    if (dataset == DatasetKind::canonical_appendix && (branching != 3 || depth != 3 || stop_action)) {
      throw ConfigError("manifest: the canonical appendix dataset needs B=3, D=3 without stop");
    }
    if (dataset == DatasetKind::gold_generated && (n_pairs < 1 || n_demos < 1)) {
      throw ConfigError("manifest: n_pairs and n_demos must be >= 1");
    }
    if (sft_steps < 1) throw ConfigError("manifest: sft_steps must be >= 1");
    (void)snapshot_interval(steps, snapshot_every);
    (void)mdp();
    daa_config(losses.front(), betas.front(), 0).validate();
  }

  int snapshot_steps_interval() const { return snapshot_interval(steps, snapshot_every); }

  TrainConfig daa_config(LossKind loss, double beta, std::uint64_t seed) const {
    TrainConfig c;
    c.stage = Stage::daa;
    c.loss = loss;
    c.beta = beta;
    c.length_alpha = length_alpha;
    c.steps = steps;
    c.snapshot_every = snapshot_steps_interval();
    c.optimizer.lr = lr;
    c.seed = seed;
    c.dataset = to_string(dataset);
    return c;
  }

  TrainConfig sft_config(std::uint64_t seed) const {
    TrainConfig c;
    c.stage = Stage::sft;
    c.steps = sft_steps;
    c.snapshot_every = snapshot_interval(sft_steps, snapshot_every);
    c.optimizer.lr = lr;
    c.seed = seed;
    c.dataset = to_string(dataset);
    return c;
  }
};

inline ExperimentManifest demo_appendix_manifest() {
  ExperimentManifest m;
  m.name = "demo-appendix";
  return m;
}

inline ExperimentManifest gold_sweep_manifest() {
  ExperimentManifest m;
  m.name = "gold-sweep";
  m.depth = 4;
  m.dataset = DatasetKind::gold_generated;
  m.betas = {0.005, 0.01, 0.025, 0.05, 0.1, 0.25, 0.5};
  m.seeds = 3;
  m.seed_base = 100;
  return m;
}

inline nlohmann::json manifest_to_json(const ExperimentManifest& m) {
  nlohmann::json losses = nlohmann::json::array();
  for (auto l : m.losses) losses.push_back(to_string(l));
  return {{"name", m.name},
          {"mdp", {{"B", m.branching}, {"D", m.depth}, {"stop_action", m.stop_action}}},
          {"dataset",
           {{"kind", to_string(m.dataset)},
            {"n_pairs", m.n_pairs},
            {"n_demos", m.n_demos},
            {"length_coeff", m.length_coeff}}},
          {"grid", {{"losses", losses}, {"betas", m.betas}, {"seeds", m.seeds}, {"seed_base", m.seed_base}}},
          {"out_dir", m.out_dir},
          {"snapshot_every", m.snapshot_every},
          {"training",
           {{"steps", m.steps},
            {"sft_steps", m.sft_steps},
            {"lr", m.lr},
            {"length_alpha", m.length_alpha},
            {"workers", m.workers}}},
          {"policy", {{"hidden_size", m.hidden_size}, {"init_std", m.init_std}, {"input", to_string(m.input)}}}};
}

// Absent fields keep the defaults of `base`.
inline ExperimentManifest manifest_from_json(const nlohmann::json& j, ExperimentManifest base = {}) {
  ExperimentManifest m = std::move(base);
  try {
    m.name = j.value("name", m.name);
    if (j.contains("mdp")) {
      const auto& x = j.at("mdp");
      m.branching = x.value("B", m.branching);
      m.depth = x.value("D", m.depth);
      m.stop_action = x.value("stop_action", m.stop_action);
    }
    if (j.contains("dataset")) {
      const auto& x = j.at("dataset");
      if (x.contains("kind")) m.dataset = dataset_kind_from_string(x.at("kind").get<std::string>());
      m.n_pairs = x.value("n_pairs", m.n_pairs);
      m.n_demos = x.value("n_demos", m.n_demos);
      m.length_coeff = x.value("length_coeff", m.length_coeff);
    }
    if (j.contains("grid")) {
      const auto& x = j.at("grid");
      if (x.contains("losses")) {
        m.losses.clear();
        for (const auto& l : x.at("losses")) m.losses.push_back(loss_kind_from_string(l.get<std::string>()));
      }
      if (x.contains("betas")) m.betas = x.at("betas").get<std::vector<double>>();
      m.seeds = x.value("seeds", m.seeds);
      m.seed_base = x.value("seed_base", m.seed_base);
    }
    m.out_dir = j.value("out_dir", m.out_dir);
    m.snapshot_every = j.value("snapshot_every", m.snapshot_every);
    if (j.contains("training")) {
      const auto& x = j.at("training");
      m.steps = x.value("steps", m.steps);
      m.sft_steps = x.value("sft_steps", m.sft_steps);
      m.lr = x.value("lr", m.lr);
      m.length_alpha = x.value("length_alpha", m.length_alpha);
      m.workers = x.value("workers", m.workers);
    }
    if (j.contains("policy")) {
      const auto& x = j.at("policy");
      m.hidden_size = x.value("hidden_size", m.hidden_size);
      m.init_std = x.value("init_std", m.init_std);
      if (x.contains("input")) m.input = recurrent_input_from_string(x.at("input").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  m.validate();
  return m;
}

// Everything one seed contributes: its dataset, gold judge and SFT reference.
struct SeedSetup {
  std::uint64_t seed = 0;
  std::shared_ptr<const Dataset> data;
  std::shared_ptr<const GoldReward> gold;
  std::shared_ptr<const PolicyModel> ref;
  SftTrace sft;
};

inline SeedSetup prepare_seed(const ExperimentManifest& m, int index) {
  SeedSetup s;
  s.seed = m.seed_base + static_cast<std::uint64_t>(index);
  const auto mdp = m.mdp();
  auto gold = std::make_shared<GoldReward>(make_gold_reward(mdp, derive_seed(s.seed, stream::gold), m.length_coeff));
  auto data = std::make_shared<Dataset>();
  if (m.dataset == DatasetKind::canonical_appendix) {
    *data = canonical_dataset(gold->seed);
  } else {
    data->mdp = mdp;
    data->gold_seed = gold->seed;
    data->length_coeff = m.length_coeff;
    data->demos = sample_distinct_demos(mdp, m.n_demos, derive_seed(s.seed, stream::demos));
  }
  const auto init = make_recurrent(mdp, derive_seed(s.seed, stream::policy_init), m.hidden_size, m.init_std, m.input);
  auto [ref, trace] = run_sft(init, data->demos, m.sft_config(s.seed));
  if (m.dataset == DatasetKind::gold_generated) {
    data->pairs = sample_labeled_pairs(ref, *gold, m.n_pairs, derive_seed(s.seed, stream::pairs));
  }
  s.data = std::move(data);
  s.gold = std::move(gold);
  s.ref = std::make_shared<const PolicyModel>(std::move(ref));
  s.sft = std::move(trace);
  return s;
}

struct ExperimentCell {
  LossKind loss = LossKind::dpo;
  double beta = 0.0;
  int seed_index = 0;
  CellResult result;
};

struct ExperimentResult {
  ExperimentManifest manifest;
  std::vector<SeedSetup> seeds;
  std::vector<ExperimentCell> cells;  // loss-major, then beta, then seed

  bool all_ok() const {
    return std::all_of(cells.begin(), cells.end(), [](const auto& c) { return c.result.ok(); });
  }
};

// Observer hook for every checkpoint of every cell; called concurrently
// across cells when workers > 1.
using CellObserver = std::function<void(std::size_t cell, const TraceRecord&, const PolicyModel&)>;

inline ExperimentResult run_experiment(const ExperimentManifest& m, const CellObserver& observer = {}) {
  m.validate();
  ExperimentResult out;
  out.manifest = m;
  for (int s = 0; s < m.seeds; ++s) out.seeds.push_back(prepare_seed(m, s));
  std::vector<SweepCell> cells;
  for (auto loss : m.losses) {
    for (double beta : m.betas) {
      for (int s = 0; s < m.seeds; ++s) {
        const auto& seed = out.seeds[static_cast<std::size_t>(s)];
        SweepCell c{m.daa_config(loss, beta, seed.seed), seed.ref, seed.data, seed.gold, {}};
        if (observer) {
          const std::size_t index = cells.size();
          c.observer = [observer, index](const TraceRecord& r, const PolicyModel& p) { observer(index, r, p); };
        }
        cells.push_back(std::move(c));
        out.cells.push_back({loss, beta, s, {}});
      }
    }
  }
  auto results = sweep(cells, m.workers);
  for (std::size_t i = 0; i < results.size(); ++i) out.cells[i].result = std::move(results[i]);
  return out;
}

inline std::string cell_stem(const ExperimentCell& c, std::uint64_t seed) {
  return to_string(c.loss) + "_b" + io::format_real(c.beta) + "_s" + std::to_string(seed);
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw InvalidArgument("median of an empty sequence");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---- appendix demo summaries ----

struct DemoSummaryRow {
  std::string loss;
  double beta = 0.0;
  std::uint64_t seed = 0;
  double sft_ood = 0.0;
  double final_ood = 0.0;
  double sft_pair_mass = 0.0;  // p_win + p_lose right after SFT
  double final_pair_mass = 0.0;
  double final_p_win = 0.0;
  double final_p_lose = 0.0;
};

inline std::vector<DemoSummaryRow> demo_summary(const ExperimentResult& r) {
  std::vector<DemoSummaryRow> rows;
  for (const auto& c : r.cells) {
    if (!c.result.ok()) continue;
    const auto& t = *c.result.trace;
    const auto& first = t.records.front().metrics;
    const auto& last = t.final_record().metrics;
    rows.push_back({to_string(c.loss), c.beta, r.seeds[static_cast<std::size_t>(c.seed_index)].seed, first.ood_mass,
                    last.ood_mass, first.p_win + first.p_lose, last.p_win + last.p_lose, last.p_win, last.p_lose});
  }
  return rows;
}

struct DemoCellMedian {
  std::string loss;
  double beta = 0.0;
  double ood_delta = 0.0;   // median final - post-SFT OOD mass
  double pair_delta = 0.0;  // median final - post-SFT p_win + p_lose
  int n = 0;
};

inline std::vector<DemoCellMedian> demo_cell_medians(const std::vector<DemoSummaryRow>& rows) {
  std::map<std::pair<std::string, double>, std::pair<std::vector<double>, std::vector<double>>> groups;
  std::vector<std::pair<std::string, double>> order;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.loss, r.beta);
    if (!groups.count(key)) order.push_back(key);
    groups[key].first.push_back(r.final_ood - r.sft_ood);
    groups[key].second.push_back(r.final_pair_mass - r.sft_pair_mass);
  }
  std::vector<DemoCellMedian> out;
  for (const auto& key : order) {
    const auto& g = groups[key];
    out.push_back({key.first, key.second, median(g.first), median(g.second), static_cast<int>(g.first.size())});
  }
  return out;
}

inline std::string demo_summary_csv(const std::vector<DemoSummaryRow>& rows) {
  std::ostringstream os;
  os << "loss,beta,seed,sft_ood_mass,final_ood_mass,sft_pair_mass,final_pair_mass,final_p_win,final_p_lose\n";
  for (const auto& r : rows) {
    os << r.loss << ',' << io::format_real(r.beta) << ',' << r.seed << ',' << io::format_real(r.sft_ood) << ','
       << io::format_real(r.final_ood) << ',' << io::format_real(r.sft_pair_mass) << ','
       << io::format_real(r.final_pair_mass) << ',' << io::format_real(r.final_p_win) << ','
       << io::format_real(r.final_p_lose) << '\n';
  }
  return os.str();
}

// ---- sweep rows ----

inline std::vector<io::SweepRow> sweep_rows(const ExperimentResult& r) {
  std::vector<io::SweepRow> rows;
  for (const auto& c : r.cells) {
    if (!c.result.ok()) continue;
    for (const auto& rec : c.result.trace->records) rows.push_back(io::sweep_row(c.result.config, rec));
  }
  return rows;
}

inline std::string sweep_csv(const std::vector<io::SweepRow>& rows) {
  std::string out = io::sweep_csv_header();
  for (const auto& r : rows) out += io::sweep_csv_line(r);
  return out;
}

// Writes manifest, per-seed SFT traces and reference checkpoints, per-cell
// traces and final checkpoints. Returns the per-cell failure report.
inline std::vector<std::string> write_cell_artifacts(const ExperimentResult& r, const std::filesystem::path& out) {
  io::write_file(out / "manifest.json", manifest_to_json(r.manifest).dump(2) + "\n");
  for (const auto& s : r.seeds) {
    const auto stem = "s" + std::to_string(s.seed);
    io::write_file(out / ("sft_" + stem + ".jsonl"), io::sft_trace_to_jsonl(s.sft));
    io::write_file(out / ("ref_" + stem + ".policy.json"), io::policy_to_json(*s.ref).dump() + "\n");
    io::write_file(out / ("dataset_" + stem + ".json"), io::dataset_to_json(*s.data).dump() + "\n");
  }
  std::vector<std::string> failures;
  for (const auto& c : r.cells) {
    const auto stem = cell_stem(c, r.seeds[static_cast<std::size_t>(c.seed_index)].seed);
    if (!c.result.ok()) {
      failures.push_back(stem + ": " + c.result.error);
      continue;
    }
    RunTrace t = *c.result.trace;
    t.checkpoint = "policy_" + stem + ".policy.json";
    io::write_file(out / ("trace_" + stem + ".jsonl"), io::trace_to_jsonl(t));
    io::write_file(out / t.checkpoint, io::policy_to_json(*c.result.policy).dump() + "\n");
  }
  return failures;
}

// ---- fits ----

enum class XKind { sqrt_kl, sqrt_fwd_kl };

inline std::string to_string(XKind k) { return k == XKind::sqrt_kl ? "sqrt_kl" : "sqrt_fwd_kl"; }

inline XKind x_kind_from_string(std::string_view s) {
  if (s == "sqrt_kl") return XKind::sqrt_kl;
  if (s == "sqrt_fwd_kl") return XKind::sqrt_fwd_kl;
  throw ConfigError("unknown x kind '" + std::string(s) + "'");
}

// sqrt_fwd_kl reads the forward KL off the dataset proxy, -fwd_kl_proxy.
inline double row_x(const io::SweepRow& r, XKind k) {
  return k == XKind::sqrt_kl ? r.sqrt_kl : std::sqrt(std::max(0.0, -r.fwd_kl_proxy));
}

// One (d, winrate) point per (loss, beta, step_frac) with the median over
// seeds of both coordinates; step 0 (d = 0) is dropped. With
// aggregate = false every row becomes a point.
inline std::vector<Point> fit_points(const std::vector<io::SweepRow>& rows, XKind k, const std::string& loss = "",
                                     bool aggregate = true) {
  std::vector<Point> pts;
  if (!aggregate) {
    for (const auto& r : rows) {
      if ((loss.empty() || r.loss == loss) && r.step_frac > 0.0 && row_x(r, k) > 0.0) pts.push_back({row_x(r, k), r.winrate});
    }
    return pts;
  }
  std::map<std::tuple<std::string, double, double>, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& r : rows) {
    if ((!loss.empty() && r.loss != loss) || !(r.step_frac > 0.0)) continue;
    auto& g = groups[{r.loss, r.beta, r.step_frac}];
    g.first.push_back(row_x(r, k));
    g.second.push_back(r.winrate);
  }
  for (const auto& [key, g] : groups) {
    const double x = median(g.first);
    if (x > 0.0) pts.push_back({x, median(g.second)});
  }
  return pts;
}

struct FitReport {
  ScalingFit scaling;            // no intercept
  ScalingFit scaling_intercept;  // with intercept
  QuadraticFit quadratic_kl;     // on d^2
  QuadraticFit quadratic_d;      // on d
};

inline FitReport fit_report(std::span<const Point> pts, XKind k) {
  FitReport r;
  r.scaling = fit_scaling_law(pts, false, to_string(k));
  r.scaling_intercept = fit_scaling_law(pts, true, to_string(k));
  std::vector<Point> kl;
  for (const auto& p : pts) kl.push_back({p.x * p.x, p.y});
  r.quadratic_kl = fit_quadratic(kl);
  r.quadratic_d = fit_quadratic(pts);
  return r;
}

inline nlohmann::json fit_report_to_json(const FitReport& r, bool intercept_primary) {
  const auto& primary = intercept_primary ? r.scaling_intercept : r.scaling;
  return {{"fit", io::fit_to_json(primary)},
          {"scaling_no_intercept", io::fit_to_json(r.scaling)},
          {"scaling_with_intercept", io::fit_to_json(r.scaling_intercept)},
          {"quadratic_kl", io::quadratic_to_json(r.quadratic_kl, "kl")},
          {"quadratic_sqrt_kl", io::quadratic_to_json(r.quadratic_d, "sqrt_kl")}};
}

// ---- gradient check ----

struct GradcheckCase {
  int index = 0;
  PolicyKind kind = PolicyKind::tabular;
  LossKind loss = LossKind::dpo;
  double beta = 0.0;
  double length_alpha = 0.0;
  int branching = 0;
  int depth = 0;
  bool stop_action = false;
  std::size_t n_params = 0;
  double error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckCase> cases;
  double max_error = 0.0;
  double tolerance = 1e-4;

  bool passed() const { return !cases.empty() && max_error < tolerance; }
};

inline PolicyModel random_policy(PolicyKind kind, const TreeMdp& mdp, std::mt19937_64& rng) {
  if (kind == PolicyKind::recurrent) return make_recurrent(mdp, rng(), 4, 0.5);
  PolicyModel p = make_tabular(mdp);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (auto& v : p.params.values()) v = n01(rng);
  return p;
}

// Each case draws a tree, a policy, a tabular reference and three pairs,
// then compares the tape gradient of daa_loss with central differences.
// `sabotage` flips the analytic gradient's sign to exercise the failure path.
inline GradcheckReport run_gradcheck(std::uint64_t seed, int n_cases, bool sabotage = false) {
  if (n_cases < 1) throw ConfigError("gradcheck: n_cases must be >= 1");
  GradcheckReport report;
  for (int i = 0; i < n_cases; ++i) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    GradcheckCase c;
    c.index = i;
    c.kind = i % 2 == 0 ? PolicyKind::tabular : PolicyKind::recurrent;
    c.loss = kAllLossKinds[(i / 2) % 3];
    c.length_alpha = (i / 6) % 2 == 0 ? 0.0 : 0.1;
    c.beta = 0.01 + 0.49 * uniform01(rng);
    c.branching = 2 + static_cast<int>(rng() % 2);
    c.depth = 2 + static_cast<int>(rng() % 2);
    c.stop_action = rng() % 2 == 1;
    const auto mdp = build_tree(c.branching, c.depth, c.stop_action);
    const auto policy = random_policy(c.kind, mdp, rng);
    const auto ref = random_policy(PolicyKind::tabular, mdp, rng);
    const ReferenceLogprobs ref_lp(ref);
    const DaaSettings settings{c.loss, c.beta, c.length_alpha};
    std::vector<PreferencePair> pairs;
    // SLiC's hinge is not differentiable at margin 1; redraw pairs near it.
    for (int attempt = 0; attempt < 100; ++attempt) {
      pairs.clear();
      while (pairs.size() < 3) {
        const auto a = static_cast<TrajectoryId>(rng() % mdp.trajectory_count());
        const auto b = static_cast<TrajectoryId>(rng() % mdp.trajectory_count());
        if (a != b) pairs.push_back({mdp.decode(a), mdp.decode(b)});
      }
      bool near_kink = false;
      if (c.loss == LossKind::slic) {
        for (const auto& p : pairs) {
          const double x = margin(policy, ref, p, c.beta).value -
                           c.length_alpha * (mdp.token_length(p.winner) - mdp.token_length(p.loser));
          near_kink = near_kink || std::abs(1.0 - x) < 1e-3;
        }
      }
      if (!near_kink) break;
    }
    auto loss_fn = [&](auto& tape) {
      using Real = typename std::remove_reference_t<decltype(tape)>::real_type;
      PolicyGraph<Real> g(tape, policy);
      return daa_loss(g, ref_lp, pairs, settings);
    };
    auto analytic = evaluate_with_gradient(loss_fn, policy.params).grad;
    if (sabotage) {
      for (auto& g : analytic) g = -g;
    }
    const auto numeric = finite_difference_gradient(loss_fn, policy.params);
    c.n_params = policy.params.size();
    c.error = max_relative_error(analytic, numeric);
    report.max_error = std::max(report.max_error, c.error);
    report.cases.push_back(c);
  }
  return report;
}

inline nlohmann::json gradcheck_to_json(const GradcheckReport& r) {
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& c : r.cases) {
    cases.push_back({{"index", c.index},
                     {"kind", to_string(c.kind)},
                     {"loss", to_string(c.loss)},
                     {"beta", c.beta},
                     {"length_alpha", c.length_alpha},
                     {"mdp", {{"B", c.branching}, {"D", c.depth}, {"stop_action", c.stop_action}}},
                     {"n_params", c.n_params},
                     {"error", c.error}});
  }
  return {{"passed", r.passed()}, {"max_error", r.max_error}, {"tolerance", r.tolerance}, {"cases", cases}};
}

// ---- analysis over sweep output ----

struct CorrelationEntry {
  std::string x;
  std::string y;
  std::string loss;  // empty = all losses
  Correlation value;
  std::string error;
};

// Correlations among final-checkpoint rows, per loss and pooled.
inline std::vector<CorrelationEntry> final_correlations(const std::vector<io::SweepRow>& rows) {
  std::vector<std::string> losses{""};
  for (const auto& r : rows) {
    if (std::find(losses.begin(), losses.end(), r.loss) == losses.end()) losses.push_back(r.loss);
  }
  const std::vector<std::pair<std::string, double io::SweepRow::*>> fields{
      {"accuracy", &io::SweepRow::accuracy},
      {"loss_value", &io::SweepRow::loss_value},
      {"sqrt_kl", &io::SweepRow::sqrt_kl},
      {"ood_mass", &io::SweepRow::ood_mass}};
  std::vector<CorrelationEntry> out;
  for (const auto& loss : losses) {
    for (const auto& [name, field] : fields) {
      std::vector<double> xs, ys;
      for (const auto& r : rows) {
        if (r.step_frac == 1.0 && (loss.empty() || r.loss == loss)) {
          xs.push_back(r.*field);
          ys.push_back(r.winrate);
        }
      }
      CorrelationEntry e{name, "winrate", loss, {}, {}};
      try {
        e.value = correlate(xs, ys);
      } catch (const Error& err) {
        e.error = err.what();
      }
      out.push_back(std::move(e));
    }
  }
  return out;
}

struct LengthEntry {
  std::string cell;
  RegressionFit fit;
  std::string error;
};

// Length regression of log(pi/ref) on token length over samples drawn from
// the trained policy.
inline RegressionFit sampled_length_regression(const PolicyModel& policy, const PolicyModel& ref, int n_samples,
                                               std::uint64_t seed) {
  const auto pi = trajectory_log_probs(policy);
  const auto rf = trajectory_log_probs(ref);
  std::mt19937_64 rng(seed);
  std::vector<LengthRecord> records;
  for (int i = 0; i < n_samples; ++i) {
    const auto t = sample(policy, rng);
    records.push_back({pi[t.id] - rf[t.id], policy.mdp.token_length(t)});
  }
  return length_regression(records);
}

inline nlohmann::json analyze_directory(const std::filesystem::path& dir, int n_samples = 512) {
  std::ifstream in(dir / "sweep.csv");
  if (!in) throw ConfigError("analyze: no sweep.csv in '" + dir.string() + "'");
  const auto rows = io::read_sweep_csv(in);
  if (rows.empty()) throw ConfigError("analyze: sweep.csv has no rows");
  nlohmann::json corr = nlohmann::json::array();
  for (const auto& e : final_correlations(rows)) {
    nlohmann::json j = {{"x", e.x}, {"y", e.y}, {"loss", e.loss.empty() ? "all" : e.loss}};
    if (e.error.empty()) {
      j["pearson"] = e.value.pearson;
      j["spearman"] = e.value.spearman;
    } else {
      j["error"] = e.error;
    }
    corr.push_back(j);
  }
  nlohmann::json lengths = nlohmann::json::array();
  std::vector<std::filesystem::path> traces;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("trace_", 0) == 0 && entry.path().extension() == ".jsonl") traces.push_back(entry.path());
  }
  std::sort(traces.begin(), traces.end());
  for (const auto& path : traces) {
    std::ifstream tin(path);
    const auto trace = io::trace_from_jsonl(tin);
    nlohmann::json j = {{"cell", path.stem().string().substr(6)},
                        {"loss", to_string(trace.config.loss)},
                        {"beta", trace.config.beta},
                        {"seed", trace.config.seed}};
    try {
      const auto policy = io::policy_from_json(io::read_json(dir / trace.checkpoint));
      const auto ref = io::policy_from_json(io::read_json(dir / ("ref_s" + std::to_string(trace.config.seed) +
                                                                 ".policy.json")));
      const auto fit = sampled_length_regression(policy, ref, n_samples, trace.config.seed);
      j["gamma"] = fit.slope;
      j["intercept"] = fit.intercept;
      j["r_squared"] = fit.r_squared;
      j["n"] = fit.n;
    } catch (const Error& err) {
      j["error"] = err.what();
    }
    lengths.push_back(j);
  }
  return {{"correlations", corr}, {"length_regression", lengths}};
}

}  // namespace daalab
