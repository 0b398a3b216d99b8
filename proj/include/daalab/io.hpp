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

// JSON, JSONL and CSV persistence for datasets, checkpoints, run configs,
// traces and fits.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "daalab/analysis.hpp"
#include "daalab/dataset.hpp"
#include "daalab/errors.hpp"
#include "daalab/objectives.hpp"
#include "daalab/policy.hpp"
#include "daalab/trainer.hpp"

namespace daalab::io {

using json = nlohmann::json;


inline Stage stage_from_string(std::string_view s) {
  if (s == "sft") return Stage::sft;
  if (s == "daa") return Stage::daa;
  throw ConfigError("unknown stage '" + std::string(s) + "'");
}

// Shortest round-trip representation, locale independent.
inline std::string format_real(double v) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline json mdp_to_json(const TreeMdp& mdp) {
  return {{"B", mdp.branching()}, {"D", mdp.depth()}, {"stop_action", mdp.stop_action()}};
}

inline TreeMdp mdp_from_json(const json& j) {
  return build_tree(j.at("B").get<int>(), j.at("D").get<int>(), j.value("stop_action", false));
}

// ---- dataset ----

inline json dataset_to_json(const Dataset& d) {
  json pairs = json::array();
  for (const auto& p : d.pairs) pairs.push_back({p.winner.id, p.loser.id});
  json demos = json::array();
  for (const auto& t : d.demos) demos.push_back(t.id);
  return {{"branching", d.mdp.branching()}, {"depth", d.mdp.depth()},     {"stop_action", d.mdp.stop_action()},
          {"gold_seed", d.gold_seed},       {"length_coeff", d.length_coeff}, {"pairs", pairs},
          {"demos", demos}};
}

inline Dataset dataset_from_json(const json& j) {
  Dataset d;
  d.mdp = build_tree(j.at("branching").get<int>(), j.at("depth").get<int>(), j.value("stop_action", false));
  d.gold_seed = j.value("gold_seed", std::uint64_t{0});
  d.length_coeff = j.value("length_coeff", 0.0);
  auto traj = [&](const json& id) {
    const auto v = id.get<std::int64_t>();
    if (v < 0 || static_cast<std::uint64_t>(v) >= d.mdp.trajectory_count()) {
      throw ConfigError("dataset: trajectory id " + std::to_string(v) + " out of range");
    }
    return d.mdp.decode(static_cast<TrajectoryId>(v));
  };
  for (const auto& p : j.at("pairs")) {
    if (!p.is_array() || p.size() != 2) throw ConfigError("dataset: pairs must be [winner, loser]");
    d.pairs.push_back({traj(p[0]), traj(p[1])});
  }
  for (const auto& id : j.value("demos", json::array())) d.demos.push_back(traj(id));
  return d;
}

// ---- policy checkpoint ----

inline json policy_to_json(const PolicyModel& p) {
  json layout = json::array();
  for (const auto& s : p.params.layout()) {
    layout.push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}, {"offset", s.offset}});
  }
  json j = {{"kind", to_string(p.kind)},
            {"mdp", mdp_to_json(p.mdp)},
            {"hidden_size", p.hidden_size},
            {"param_layout", layout},
            {"values", p.params.values()},
            {"seed", p.seed}};
  if (p.kind == PolicyKind::recurrent) j["input"] = to_string(p.input);
  return j;
}

inline PolicyModel policy_from_json(const json& j) {
  PolicyModel p;
  p.kind = policy_kind_from_string(j.at("kind").get<std::string>());
  p.mdp = mdp_from_json(j.at("mdp"));
  p.hidden_size = j.value("hidden_size", std::size_t{0});
  p.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("input")) p.input = recurrent_input_from_string(j.at("input").get<std::string>());
  for (const auto& s : j.at("param_layout")) {
    p.params.add_slice(s.at("name").get<std::string>(), s.at("rows").get<std::size_t>(),
                       s.at("cols").get<std::size_t>());
  }
  const auto values = j.at("values").get<std::vector<double>>();
  if (values.size() != p.params.size()) throw ConfigError("checkpoint: values do not match param_layout");
  p.params.values() = values;
  // Rebuild the expected shapes and compare, so a mismatched checkpoint fails here.
  PolicyModel shape = p.kind == PolicyKind::tabular ? make_tabular(p.mdp)
                                                    : make_recurrent(p.mdp, 0, p.hidden_size, 0.1, p.input);
  const auto& want = shape.params.layout();
  const auto& got = p.params.layout();
  const bool same = want.size() == got.size() &&
                    std::equal(want.begin(), want.end(), got.begin(), [](const auto& a, const auto& b) {
                      return a.name == b.name && a.rows == b.rows && a.cols == b.cols;
                    });
  if (!same) throw ConfigError("checkpoint: param_layout does not fit the mdp");
  return p;
}

// ---- run config ----

inline json config_to_json(const TrainConfig& c) {
  return {{"stage", daalab::to_string(c.stage)},
          {"loss", daalab::to_string(c.loss)},
          {"beta", c.beta},
          {"length_alpha", c.length_alpha},
          {"steps", c.steps},
          {"snapshot_every", c.snapshot_every},
          {"optimizer",
           {{"name", "adam"},
            {"lr", c.optimizer.lr},
            {"beta1", c.optimizer.beta1},
            {"beta2", c.optimizer.beta2},
            {"eps", c.optimizer.eps}}},
          {"seed", c.seed},
          {"dataset", c.dataset}};
}

inline TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.stage = stage_from_string(j.value("stage", std::string("daa")));
  c.loss = loss_kind_from_string(j.value("loss", std::string("dpo")));
  c.beta = j.value("beta", c.beta);
  c.length_alpha = j.value("length_alpha", c.length_alpha);
  c.steps = j.value("steps", c.steps);
  c.snapshot_every = j.value("snapshot_every", c.snapshot_every);
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    c.optimizer.lr = o.value("lr", c.optimizer.lr);
    c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
    c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
    c.optimizer.eps = o.value("eps", c.optimizer.eps);
  }
  c.seed = j.value("seed", c.seed);
  c.dataset = j.value("dataset", std::string());
  c.validate();
  return c;
}

// ---- traces ----

inline json metrics_to_json(const MetricsSnapshot& m) {
  return {{"kl_reverse", m.kl_reverse}, {"kl_forward", m.kl_forward},     {"ood_mass", m.ood_mass},
          {"p_win", m.p_win},           {"p_lose", m.p_lose},             {"in_dist_other", m.in_dist_other},
          {"accuracy", m.accuracy},     {"winrate", m.winrate},           {"fwd_kl_proxy", m.fwd_kl_proxy},
          {"fwd_kl_proxy_scaled", m.fwd_kl_proxy_scaled}};
}

inline MetricsSnapshot metrics_from_json(const json& j) {
  MetricsSnapshot m;
  m.kl_reverse = j.at("kl_reverse").get<double>();
  m.kl_forward = j.at("kl_forward").get<double>();
  m.ood_mass = j.at("ood_mass").get<double>();
  m.p_win = j.at("p_win").get<double>();
  m.p_lose = j.at("p_lose").get<double>();
  m.in_dist_other = j.value("in_dist_other", 0.0);
  m.accuracy = j.at("accuracy").get<double>();
  m.winrate = j.at("winrate").get<double>();
  m.fwd_kl_proxy = j.at("fwd_kl_proxy").get<double>();
  m.fwd_kl_proxy_scaled = j.value("fwd_kl_proxy_scaled", 0.0);
  return m;
}

inline json record_to_json(const TraceRecord& r) {
  json j = {{"step", r.step}, {"step_frac", r.step_frac}, {"loss", r.loss}, {"mean_margin", r.mean_margin}};
  j.update(metrics_to_json(r.metrics));
  return j;
}

inline TraceRecord record_from_json(const json& j) {
  TraceRecord r;
  r.step = j.at("step").get<int>();
  r.step_frac = j.at("step_frac").get<double>();
  r.loss = j.at("loss").get<double>();
  r.mean_margin = j.value("mean_margin", 0.0);
  r.metrics = metrics_from_json(j);
  return r;
}

// First line is the run config, then one snapshot per line.
inline std::string trace_to_jsonl(const RunTrace& t) {
  std::string out;
  json head = {{"config", config_to_json(t.config)}};
  if (!t.checkpoint.empty()) head["checkpoint"] = t.checkpoint;
  out += head.dump() + "\n";
  for (const auto& r : t.records) out += record_to_json(r).dump() + "\n";
  return out;
}

inline RunTrace trace_from_jsonl(std::istream& in) {
  RunTrace t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    if (first) {
      t.config = config_from_json(j.at("config"));
      t.checkpoint = j.value("checkpoint", std::string());
      first = false;
    } else {
      t.records.push_back(record_from_json(j));
    }
  }
  if (first) throw ConfigError("trace: empty JSONL stream");
  return t;
}

inline std::string sft_trace_to_jsonl(const SftTrace& t) {
  std::string out = json{{"config", config_to_json(t.config)}}.dump() + "\n";
  for (const auto& r : t.records) {
    out += json{{"step", r.step}, {"step_frac", r.step_frac}, {"loss", r.loss}, {"ood_mass", r.ood_mass}}.dump() +
           "\n";
  }
  return out;
}

// ---- fits ----

inline json fit_to_json(const ScalingFit& f) {
  return {{"x_kind", f.x_kind},        {"alpha", f.alpha}, {"beta_coeff", f.beta_coeff}, {"intercept", f.intercept},
          {"rmse", f.rmse},            {"n_points", f.n_points}, {"with_intercept", f.with_intercept}};
}

inline ScalingFit fit_from_json(const json& j) {
  ScalingFit f;
  f.x_kind = j.at("x_kind").get<std::string>();
  f.alpha = j.at("alpha").get<double>();
  f.beta_coeff = j.at("beta_coeff").get<double>();
  f.intercept = j.value("intercept", 0.0);
  f.rmse = j.at("rmse").get<double>();
  f.n_points = j.at("n_points").get<int>();
  f.with_intercept = j.value("with_intercept", f.intercept != 0.0);
  return f;
}

inline json quadratic_to_json(const QuadraticFit& q, const std::string& x) {
  return {{"x", x},      {"c0", q.c0}, {"c1", q.c1}, {"c2", q.c2}, {"rmse", q.rmse}, {"r_squared", q.r_squared},
          {"n_points", q.n_points}};
}

// ---- sweep CSV ----

inline const std::vector<std::string>& sweep_csv_columns() {
  static const std::vector<std::string> cols{"loss",       "beta",     "seed",       "step_frac",
                                             "sqrt_kl",    "winrate",  "accuracy",   "loss_value",
                                             "ood_mass",   "fwd_kl_proxy"};
  return cols;
}

struct SweepRow {
  std::string loss;
  double beta = 0.0;
  std::uint64_t seed = 0;
  double step_frac = 0.0;
  double sqrt_kl = 0.0;
  double winrate = 0.0;
  double accuracy = 0.0;
  double loss_value = 0.0;
  double ood_mass = 0.0;
  double fwd_kl_proxy = 0.0;
};

inline SweepRow sweep_row(const TrainConfig& c, const TraceRecord& r) {
  return {daalab::to_string(c.loss),
          c.beta,
          c.seed,
          r.step_frac,
          std::sqrt(std::max(0.0, r.metrics.kl_reverse)),
          r.metrics.winrate,
          r.metrics.accuracy,
          r.loss,
          r.metrics.ood_mass,
          r.metrics.fwd_kl_proxy};
}

inline std::string sweep_csv_header() {
  std::string out;
  for (const auto& c : sweep_csv_columns()) out += (out.empty() ? "" : ",") + c;
  return out + "\n";
}

inline std::string sweep_csv_line(const SweepRow& r) {
  std::ostringstream os;
  os << r.loss << ',' << format_real(r.beta) << ',' << r.seed << ',' << format_real(r.step_frac) << ','
     << format_real(r.sqrt_kl) << ',' << format_real(r.winrate) << ',' << format_real(r.accuracy) << ','
     << format_real(r.loss_value) << ',' << format_real(r.ood_mass) << ',' << format_real(r.fwd_kl_proxy) << '\n';
  return os.str();
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline double parse_real(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("malformed CSV: bad ") + what + " value '" + s + "'");
  }
}

// Accepts exactly the schema written by sweep_csv_header.
inline std::vector<SweepRow> read_sweep_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("malformed CSV: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (split(line, ',') != sweep_csv_columns()) throw ConfigError("malformed CSV: unexpected header '" + line + "'");
  std::vector<SweepRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != sweep_csv_columns().size()) {
      throw ConfigError("malformed CSV: line " + std::to_string(lineno) + " has " + std::to_string(f.size()) +
                        " fields");
    }
    SweepRow r;
    r.loss = f[0];
    r.beta = parse_real(f[1], "beta");
    r.seed = static_cast<std::uint64_t>(parse_real(f[2], "seed"));
    r.step_frac = parse_real(f[3], "step_frac");
    r.sqrt_kl = parse_real(f[4], "sqrt_kl");
    r.winrate = parse_real(f[5], "winrate");
    r.accuracy = parse_real(f[6], "accuracy");
    r.loss_value = parse_real(f[7], "loss_value");
    r.ood_mass = parse_real(f[8], "ood_mass");
    r.fwd_kl_proxy = parse_real(f[9], "fwd_kl_proxy");
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---- files ----

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + p.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + p.string() + "'");
  out << content;
  if (!out) throw ConfigError("write failed for '" + p.string() + "'");
}

inline json read_json(const std::filesystem::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw ConfigError("invalid JSON in '" + p.string() + "': " + e.what());
  }
}

}  // namespace daalab::io
