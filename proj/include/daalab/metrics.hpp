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

// Exact, enumeration-based measurements of a policy against its reference.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <span>
#include <vector>

#include "daalab/dataset.hpp"
#include "daalab/errors.hpp"
#include "daalab/objectives.hpp"
#include "daalab/policy.hpp"
#include "daalab/tree_mdp.hpp"

namespace daalab {

// KL(p || q), summed in log space. Terms with p < 1e-300 are skipped. A
// q entry below 1e-300 is a support violation only if its log-probability
// is -inf too; a tiny but representable log q still gives a finite term.
inline double kl_exact(const PolicyDistribution& p, const PolicyDistribution& q) {
  if (p.size() != q.size()) throw InvalidArgument("kl_exact: distributions over different index spaces");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.probs[i] < 1e-300) continue;
    if (q.probs[i] < 1e-300 && !std::isfinite(q.log_probs[i])) {
      if (p.probs[i] > 1e-12) throw InfiniteDivergence("kl_exact: q has no support where p > 1e-12");
      continue;
    }
    kl += p.probs[i] * (p.log_probs[i] - q.log_probs[i]);
  }
  return std::max(kl, 0.0);
}

inline double implicit_reward(double policy_logprob, double ref_logprob, double beta) {
  return beta * (policy_logprob - ref_logprob);
}

inline double implicit_reward(const PolicyModel& policy, const PolicyModel& ref, const Trajectory& t, double beta) {
  if (!(beta > 0.0)) throw InvalidArgument("implicit_reward: beta must be > 0");
  return implicit_reward(trajectory_logprob(policy, t).value, trajectory_logprob(ref, t).value, beta);
}

inline double ood_mass(const PolicyDistribution& dist, std::span<const TrajectoryId> in_dist) {
  if (in_dist.empty()) throw InvalidArgument("ood_mass: empty in-distribution set");
  std::vector<bool> inside(dist.size(), false);
  for (TrajectoryId id : in_dist) {
    if (id >= dist.size()) throw InvalidArgument("ood_mass: unknown trajectory id " + std::to_string(id));
    inside[id] = true;
  }
  // Summing the complement keeps small OOD masses accurate.
  double out = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (!inside[i]) out += dist.probs[i];
  }
  return std::clamp(out, 0.0, 1.0);
}

inline double ood_mass(const PolicyModel& policy, std::span<const TrajectoryId> in_dist) {
  return ood_mass(full_distribution(policy), in_dist);
}

// Fraction of pairs whose implicit-reward margin is positive (ties 1/2),
// from per-trajectory log-probabilities of the policy and reference.
inline double implicit_reward_accuracy(std::span<const double> policy_lp, std::span<const double> ref_lp,
                                       std::span<const PreferencePair> pairs, double beta) {
  if (pairs.empty()) throw InvalidArgument("implicit_reward_accuracy: empty pairs");
  if (!(beta > 0.0)) throw InvalidArgument("implicit_reward_accuracy: beta must be > 0");
  double score = 0.0;
  for (const auto& p : pairs) {
    const double m = beta * ((policy_lp[p.winner.id] - ref_lp[p.winner.id]) - (policy_lp[p.loser.id] - ref_lp[p.loser.id]));
    score += m > 0.0 ? 1.0 : (m == 0.0 ? 0.5 : 0.0);
  }
  return score / static_cast<double>(pairs.size());
}

inline double implicit_reward_accuracy(const PolicyModel& policy, const PolicyModel& ref,
                                       std::span<const PreferencePair> pairs, double beta) {
  require_same_mdp(policy, ref);
  return implicit_reward_accuracy(trajectory_log_probs(policy), trajectory_log_probs(ref), pairs, beta);
}

// P(y beats y') with y ~ policy, y' ~ baseline under the gold judge; ties 1/2.
// Equivalent to the double sum over all trajectory pairs, computed by
// sweeping trajectories in reward order.
inline double winrate(const PolicyDistribution& policy, const PolicyDistribution& baseline, const GoldReward& gold) {
  const std::size_t n = policy.size();
  if (baseline.size() != n || gold.table.size() != n) throw InvalidArgument("winrate: size mismatch");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return gold.table[a] < gold.table[b]; });
  double below = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    double group_base = 0.0;
    double group_policy = 0.0;
    while (j < n && gold.table[order[j]] == gold.table[order[i]]) {
      group_base += baseline.probs[order[j]];
      group_policy += policy.probs[order[j]];
      ++j;
    }
    total += group_policy * (below + 0.5 * group_base);
    below += group_base;
    i = j;
  }
  return total;
}

inline double winrate(const PolicyModel& policy, const PolicyModel& baseline, const GoldReward& gold) {
  require_same_mdp(policy, baseline);
  return winrate(full_distribution(policy), full_distribution(baseline), gold);
}

// Mean preferred-response log-ratio log pi(y_w) - log ref(y_w), no beta.
inline double forward_kl_proxy(std::span<const double> policy_lp, std::span<const double> ref_lp,
                               std::span<const Trajectory> preferred) {
  if (preferred.empty()) throw InvalidArgument("forward_kl_proxy: empty preferred set");
  double s = 0.0;
  for (const auto& t : preferred) s += policy_lp[t.id] - ref_lp[t.id];
  return s / static_cast<double>(preferred.size());
}

inline double forward_kl_proxy(const PolicyModel& policy, const PolicyModel& ref, std::span<const Trajectory> preferred) {
  require_same_mdp(policy, ref);
  return forward_kl_proxy(trajectory_log_probs(policy), trajectory_log_probs(ref), preferred);
}

// The same log-ratio averaged with exact reference weights over every
// trajectory; equals -KL(ref || policy).
inline double ref_weighted_log_ratio(const PolicyDistribution& policy, const PolicyDistribution& ref) {
  if (policy.size() != ref.size()) throw InvalidArgument("ref_weighted_log_ratio: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (ref.probs[i] < 1e-300) continue;
    s += ref.probs[i] * (policy.log_probs[i] - ref.log_probs[i]);
  }
  return s;
}

struct MetricsSnapshot {
  double kl_reverse = 0.0;  // KL(pi || ref)
  double kl_forward = 0.0;  // KL(ref || pi)
  double ood_mass = 0.0;
  double p_win = 0.0;          // mass on trajectories that appear as winners
  double p_lose = 0.0;         // mass on loser-only trajectories
  double in_dist_other = 0.0;  // remaining in-distribution mass (demos outside the pairs)
  double accuracy = 0.5;
  double winrate = 0.5;
  double fwd_kl_proxy = 0.0;
  double fwd_kl_proxy_scaled = 0.0;  // beta * fwd_kl_proxy
};

// Measures policies against one frozen reference on one dataset.
class SnapshotEvaluator {
 public:
  SnapshotEvaluator(const PolicyModel& ref, const Dataset& data, const GoldReward& gold, double beta)
      : ref_dist_(full_distribution(ref)), data_(data), gold_(gold), beta_(beta), in_dist_(data.in_distribution()),
        preferred_(data.preferred()) {
    if (!(ref.mdp == data.mdp)) throw InvalidArgument("snapshot: reference and dataset use different trees");
    if (gold.table.size() != data.mdp.trajectory_count()) throw InvalidArgument("snapshot: gold reward size mismatch");
    std::set<TrajectoryId> winners;
    for (const auto& p : data.pairs) winners.insert(p.winner.id);
    std::set<TrajectoryId> losers;
    for (const auto& p : data.pairs) {
      if (!winners.count(p.loser.id)) losers.insert(p.loser.id);
    }
    winners_.assign(winners.begin(), winners.end());
    losers_.assign(losers.begin(), losers.end());
  }

  const PolicyDistribution& reference() const noexcept { return ref_dist_; }

  MetricsSnapshot operator()(const PolicyModel& policy) const { return (*this)(full_distribution(policy)); }

  MetricsSnapshot operator()(const PolicyDistribution& dist) const {
    MetricsSnapshot m;
    m.kl_reverse = kl_exact(dist, ref_dist_);
    m.kl_forward = kl_exact(ref_dist_, dist);
    m.ood_mass = ood_mass(dist, in_dist_);
    for (auto id : winners_) m.p_win += dist.probs[id];
    for (auto id : losers_) m.p_lose += dist.probs[id];
    m.in_dist_other = std::max(0.0, (1.0 - m.ood_mass) - m.p_win - m.p_lose);
    if (!data_.pairs.empty()) {
      m.accuracy = implicit_reward_accuracy(dist.log_probs, ref_dist_.log_probs, data_.pairs, beta_);
      m.fwd_kl_proxy = forward_kl_proxy(dist.log_probs, ref_dist_.log_probs, preferred_);
      m.fwd_kl_proxy_scaled = beta_ * m.fwd_kl_proxy;
    }
    m.winrate = winrate(dist, ref_dist_, gold_);
    return m;
  }

 private:
  PolicyDistribution ref_dist_;
  const Dataset& data_;
  const GoldReward& gold_;
  double beta_;
  std::vector<TrajectoryId> in_dist_;
  std::vector<Trajectory> preferred_;
  std::vector<TrajectoryId> winners_;
  std::vector<TrajectoryId> losers_;
};

inline MetricsSnapshot snapshot(const PolicyModel& policy, const PolicyModel& ref, const Dataset& data,
                                const GoldReward& gold, double beta) {
  require_same_mdp(policy, ref);
  return SnapshotEvaluator(ref, data, gold, beta)(policy);
}

}  // namespace daalab
