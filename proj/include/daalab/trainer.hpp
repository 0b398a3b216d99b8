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

#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "daalab/dataset.hpp"
#include "daalab/diffcore.hpp"
#include "daalab/errors.hpp"
#include "daalab/metrics.hpp"
#include "daalab/objectives.hpp"
#include "daalab/policy.hpp"

namespace daalab {

enum class Stage { sft, daa };

inline std::string to_string(Stage s) { return s == Stage::sft ? "sft" : "daa"; }

struct AdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  Stage stage = Stage::daa;
  LossKind loss = LossKind::dpo;
  double beta = 0.1;
  double length_alpha = 0.0;
  int steps = 2000;
  int snapshot_every = 100;  // 5% of the default step count
  AdamConfig optimizer;
  std::uint64_t seed = 0;
  std::string dataset;  // free-form dataset reference, echoed into traces

  DaaSettings daa() const { return {loss, beta, length_alpha}; }

  // Zero steps is allowed and leaves the policy untouched.
  void validate() const {
    if (steps < 0) throw ConfigError("steps must be >= 0");
    if (snapshot_every < 1) throw ConfigError("snapshot_every must be >= 1");
    if (steps > 0 && steps / snapshot_every < 2) throw ConfigError("snapshot_every must give at least 2 snapshots");
    if (!(optimizer.lr > 0.0)) throw ConfigError("learning rate must be > 0");
    if (stage == Stage::daa && !(beta > 0.0)) throw ConfigError("beta must be > 0");
  }

  // Steps at which a snapshot is recorded: 0, every snapshot_every, final.
  std::vector<int> snapshot_steps() const {
    std::vector<int> out{0};
    for (int s = snapshot_every; s < steps; s += snapshot_every) out.push_back(s);
    if (steps > 0) out.push_back(steps);
    return out;
  }
};

// Snapshot cadence from a fraction of the run (0.05 -> every 5%).
inline int snapshot_interval(int steps, double fraction) {
  if (!(fraction > 0.0 && fraction <= 0.5)) throw ConfigError("snapshot fraction must be in (0, 0.5]");
  return std::max(1, static_cast<int>(std::lround(steps * fraction)));
}

class Adam {
 public:
  Adam(const AdamConfig& cfg, std::size_t size) : cfg_(cfg), m_(size, 0.0), v_(size, 0.0) {}

  void step(std::vector<double>& params, std::span<const double> grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      params[i] -= cfg_.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.eps);
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

struct SftRecord {
  int step = 0;
  double step_frac = 0.0;
  double loss = 0.0;
  double ood_mass = 0.0;  // w.r.t. the demonstrations
};

struct SftTrace {
  TrainConfig config;
  std::vector<SftRecord> records;
};

struct TraceRecord {
  int step = 0;
  double step_frac = 0.0;  // fraction of the run; the full-batch analogue of epoch fraction
  double loss = 0.0;
  double mean_margin = 0.0;
  MetricsSnapshot metrics;
};

struct RunTrace {
  TrainConfig config;
  std::vector<TraceRecord> records;
  std::string checkpoint;  // path of the final checkpoint, when persisted

  const TraceRecord& final_record() const { return records.back(); }
};

namespace detail {
inline void check_finite_loss(double loss, int step) {
  if (!std::isfinite(loss)) throw TrainingError(step, "non-finite loss");
}

template <class LossFn>
ValueAndGradient guarded_eval(LossFn&& fn, const ParamVector& params, int step) {
  try {
    auto r = evaluate_with_gradient(fn, params);
    check_finite_loss(r.value, step);
    return r;
  } catch (const NumericDomainError& e) {
    throw TrainingError(step, e.what());
  }
}
}  // namespace detail

inline std::pair<PolicyModel, SftTrace> run_sft(const PolicyModel& policy_init, std::span<const Trajectory> demos,
                                                const TrainConfig& config) {
  if (config.stage != Stage::sft) throw ConfigError("run_sft: config stage must be sft");
  config.validate();
  if (demos.empty()) throw InvalidArgument("run_sft: empty demonstrations");
  PolicyModel policy = policy_init;
  SftTrace trace{config, {}};
  std::vector<TrajectoryId> demo_ids;
  for (const auto& d : demos) demo_ids.push_back(d.id);
  const auto snaps = config.snapshot_steps();
  std::size_t next = 0;
  Adam adam(config.optimizer, policy.params.size());
  for (int step = 0; step <= config.steps; ++step) {
    const auto r = detail::guarded_eval(
        [&](Tape<double>& t) {
          PolicyGraph<double> g(t, policy);
          return sft_loss(g, demos);
        },
        policy.params, step);
    if (next < snaps.size() && snaps[next] == step) {
      const double frac = config.steps > 0 ? static_cast<double>(step) / config.steps : 0.0;
      trace.records.push_back({step, frac, r.value, ood_mass(policy, demo_ids)});
      ++next;
    }
    if (step < config.steps) adam.step(policy.params.values(), r.grad);
  }
  return {std::move(policy), std::move(trace)};
}

inline double mean_margin(const PolicyDistribution& dist, const PolicyDistribution& ref,
                          std::span<const PreferencePair> pairs, double beta) {
  if (pairs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& p : pairs) {
    s += beta * ((dist.log_probs[p.winner.id] - ref.log_probs[p.winner.id]) -
                 (dist.log_probs[p.loser.id] - ref.log_probs[p.loser.id]));
  }
  return s / static_cast<double>(pairs.size());
}

// Called at every snapshot with the record and the policy it measured.
using SnapshotObserver = std::function<void(const TraceRecord&, const PolicyModel&)>;

// Full-batch DAA alignment of a copy of policy_init against a frozen ref.
inline std::pair<PolicyModel, RunTrace> run_daa(const PolicyModel& policy_init, const PolicyModel& ref,
                                                const Dataset& data, const GoldReward& gold,
                                                const TrainConfig& config, const SnapshotObserver& observer = {}) {
  if (config.stage != Stage::daa) throw ConfigError("run_daa: config stage must be daa");
  config.validate();
  if (!(policy_init.mdp == ref.mdp) || !(ref.mdp == data.mdp)) {
    throw InvalidArgument("run_daa: policy, reference and dataset must share one tree");
  }
  if (data.pairs.empty()) throw InvalidArgument("run_daa: no preference pairs");
  PolicyModel policy = policy_init;
  RunTrace trace{config, {}, {}};
  const ReferenceLogprobs ref_lp(ref);
  const SnapshotEvaluator evaluate(ref, data, gold, config.beta);
  const DaaSettings settings = config.daa();
  const auto snaps = config.snapshot_steps();
  std::size_t next = 0;
  Adam adam(config.optimizer, policy.params.size());
  for (int step = 0; step <= config.steps; ++step) {
    const auto r = detail::guarded_eval(
        [&](Tape<double>& t) {
          PolicyGraph<double> g(t, policy);
          return daa_loss(g, ref_lp, data.pairs, settings);
        },
        policy.params, step);
    if (next < snaps.size() && snaps[next] == step) {
      const PolicyDistribution dist = full_distribution(policy);
      TraceRecord rec;
      rec.step = step;
      rec.step_frac = config.steps > 0 ? static_cast<double>(step) / config.steps : 0.0;
      rec.loss = r.value;
      rec.mean_margin = mean_margin(dist, evaluate.reference(), data.pairs, config.beta);
      rec.metrics = evaluate(dist);
      trace.records.push_back(rec);
      if (observer) observer(rec, policy);
      ++next;
    }
    if (step < config.steps) adam.step(policy.params.values(), r.grad);
  }
  return {std::move(policy), std::move(trace)};
}

struct SweepCell {
  TrainConfig config;
  std::shared_ptr<const PolicyModel> ref;  // also the initial policy
  std::shared_ptr<const Dataset> data;
  std::shared_ptr<const GoldReward> gold;
  SnapshotObserver observer;  // optional; runs on the worker thread
};

struct CellResult {
  TrainConfig config;
  std::optional<RunTrace> trace;
  std::optional<PolicyModel> policy;
  std::string error;  // empty on success

  bool ok() const noexcept { return error.empty(); }
};

// Runs every cell independently on up to `workers` threads (0 = hardware
// concurrency). Results keep the order of `cells`; a failing cell is
// reported in its result without stopping the others.
inline std::vector<CellResult> sweep(std::span<const SweepCell> cells, unsigned workers = 0) {
  for (const auto& c : cells) {
    if (!c.ref || !c.data || !c.gold) throw InvalidArgument("sweep: cell is missing its reference or datasets");
    if (!(c.ref->mdp == cells.front().ref->mdp)) throw InvalidArgument("sweep: cells bind different trees");
  }
  std::vector<CellResult> results(cells.size());
  std::atomic<std::size_t> cursor{0};
  auto worker = [&] {
    for (std::size_t i = cursor++; i < cells.size(); i = cursor++) {
      const auto& c = cells[i];
      results[i].config = c.config;
      try {
        auto [policy, trace] = run_daa(*c.ref, *c.ref, *c.data, *c.gold, c.config, c.observer);
        results[i].policy = std::move(policy);
        results[i].trace = std::move(trace);
      } catch (const std::exception& e) {
        results[i].error = e.what();
      }
    }
  };
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(cells.size(), 1)));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  return results;
}

}  // namespace daalab
