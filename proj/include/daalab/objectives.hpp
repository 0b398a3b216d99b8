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

// Supervised fine-tuning loss and the direct-alignment loss family
//
//   L(pi) = mean_pairs g( beta [log pi(y_w)/ref(y_w) - log pi(y_l)/ref(y_l)]
//                         - length_alpha (|y_w| - |y_l|) )
//
// with g(x) = -log sigma(x) (DPO), (x - 1)^2 (IPO) or max(0, 1 - x) (SLiC).

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "daalab/dataset.hpp"
#include "daalab/diffcore.hpp"
#include "daalab/errors.hpp"
#include "daalab/policy.hpp"
#include "daalab/tree_mdp.hpp"

namespace daalab {

enum class LossKind { dpo, ipo, slic };

inline constexpr LossKind kAllLossKinds[] = {LossKind::dpo, LossKind::ipo, LossKind::slic};

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::dpo:
      return "dpo";
    case LossKind::ipo:
      return "ipo";
    case LossKind::slic:
      return "slic";
  }
  return "?";
}

inline LossKind loss_kind_from_string(std::string_view s) {
  if (s == "dpo") return LossKind::dpo;
  if (s == "ipo") return LossKind::ipo;
  if (s == "slic") return LossKind::slic;
  throw ConfigError("unknown loss '" + std::string(s) + "' (expected dpo, ipo or slic)");
}

inline double link(LossKind kind, double x) {
  switch (kind) {
    case LossKind::dpo:
      return ops::stable_softplus(-x);
    case LossKind::ipo:
      return (x - 1.0) * (x - 1.0);
    case LossKind::slic:
      return std::max(0.0, 1.0 - x);
  }
  return 0.0;
}

// dg/dx, with the SLiC subgradient at the kink taken as 0.
inline double link_derivative(LossKind kind, double x) {
  switch (kind) {
    case LossKind::dpo:
      return -ops::stable_sigmoid(-x);
    case LossKind::ipo:
      return 2.0 * (x - 1.0);
    case LossKind::slic:
      return x < 1.0 ? -1.0 : 0.0;
  }
  return 0.0;
}

template <class Real>
Var<Real> link(LossKind kind, Var<Real> x) {
  switch (kind) {
    case LossKind::dpo:
      return ops::softplus(ops::neg(x));
    case LossKind::ipo:
      return ops::square(ops::shift(x, Real(-1)));
    case LossKind::slic:
      return ops::relu(ops::shift(ops::neg(x), Real(1)));
  }
  throw InvalidArgument("unknown loss kind");
}

// Frozen log-probabilities of the reference policy for every trajectory.
class ReferenceLogprobs {
 public:
  explicit ReferenceLogprobs(const PolicyModel& ref) : mdp_(ref.mdp), log_probs_(trajectory_log_probs(ref)) {}

  double operator()(TrajectoryId id) const { return log_probs_.at(id); }
  const TreeMdp& mdp() const noexcept { return mdp_; }
  const std::vector<double>& values() const noexcept { return log_probs_; }

 private:
  TreeMdp mdp_;
  std::vector<double> log_probs_;
};

template <class Real>
Var<Real> margin(PolicyGraph<Real>& graph, const ReferenceLogprobs& ref, const PreferencePair& pair, double beta) {
  if (!(beta > 0.0)) throw InvalidArgument("margin: beta must be > 0");
  Var<Real> diff = ops::sub(graph.trajectory_logprob(pair.winner), graph.trajectory_logprob(pair.loser));
  const Real ref_diff = static_cast<Real>(ref(pair.winner.id)) - static_cast<Real>(ref(pair.loser.id));
  const Real b = static_cast<Real>(beta);
  return ops::shift(ops::scale(diff, b), -(b * ref_diff));
}

struct DaaSettings {
  LossKind kind = LossKind::dpo;
  double beta = 0.1;
  double length_alpha = 0.0;
};

template <class Real>
Var<Real> daa_loss(PolicyGraph<Real>& graph, const ReferenceLogprobs& ref, std::span<const PreferencePair> data,
                   const DaaSettings& settings) {
  if (data.empty()) throw InvalidArgument("daa_loss: empty dataset");
  if (!(graph.model().mdp == ref.mdp())) throw InvalidArgument("daa_loss: policy and reference use different trees");
  const auto& mdp = graph.model().mdp;
  std::vector<Var<Real>> terms;
  terms.reserve(data.size());
  for (const auto& pair : data) {
    Var<Real> m = margin(graph, ref, pair, settings.beta);
    if (settings.length_alpha != 0.0) {
      const double dlen = mdp.token_length(pair.winner) - mdp.token_length(pair.loser);
      m = ops::shift(m, static_cast<Real>(-settings.length_alpha * dlen));
    }
    terms.push_back(link<Real>(settings.kind, m));
  }
  return ops::mean<Real>(terms);
}

template <class Real>
Var<Real> sft_loss(PolicyGraph<Real>& graph, std::span<const Trajectory> demos) {
  if (demos.empty()) throw InvalidArgument("sft_loss: empty demonstrations");
  std::vector<Var<Real>> terms;
  terms.reserve(demos.size());
  for (const auto& d : demos) terms.push_back(graph.trajectory_logprob(d));
  return ops::neg(ops::mean<Real>(terms));
}

inline DiffScalar margin(const PolicyModel& policy, const PolicyModel& ref, const PreferencePair& pair, double beta) {
  require_same_mdp(policy, ref);
  const ReferenceLogprobs ref_lp(ref);
  auto r = evaluate_with_gradient(
      [&](Tape<double>& t) {
        PolicyGraph<double> g(t, policy);
        return margin(g, ref_lp, pair, beta);
      },
      policy.params);
  return {r.value, std::move(r.grad)};
}

inline DiffScalar daa_loss(const PolicyModel& policy, const PolicyModel& ref, std::span<const PreferencePair> data,
                           const DaaSettings& settings) {
  require_same_mdp(policy, ref);
  const ReferenceLogprobs ref_lp(ref);
  auto r = evaluate_with_gradient(
      [&](Tape<double>& t) {
        PolicyGraph<double> g(t, policy);
        return daa_loss(g, ref_lp, data, settings);
      },
      policy.params);
  return {r.value, std::move(r.grad)};
}

inline DiffScalar sft_loss(const PolicyModel& policy, std::span<const Trajectory> demos) {
  auto r = evaluate_with_gradient(
      [&](Tape<double>& t) {
        PolicyGraph<double> g(t, policy);
        return sft_loss(g, demos);
      },
      policy.params);
  return {r.value, std::move(r.grad)};
}

// pi*(y) proportional to ref(y) exp(r(y) / beta), normalised in log space.
inline PolicyDistribution closed_form_optimal_policy(const PolicyDistribution& ref, const GoldReward& reward,
                                                     double beta) {
  if (!(beta > 0.0)) throw InvalidArgument("closed_form_optimal_policy: beta must be > 0");
  if (reward.table.size() != ref.size()) throw InvalidArgument("closed_form_optimal_policy: size mismatch");
  std::vector<double> logits(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!std::isfinite(reward.table[i])) throw NumericDomainError("closed_form_optimal_policy", "non-finite reward");
    logits[i] = ref.log_probs[i] + reward.table[i] / beta;
  }
  const double log_z = logsumexp(logits);
  for (auto& v : logits) v -= log_z;
  return distribution_from_log_probs(std::move(logits), "closed_form", beta);
}

inline PolicyDistribution closed_form_optimal_policy(const PolicyModel& ref, const GoldReward& reward, double beta) {
  return closed_form_optimal_policy(full_distribution(ref), reward, beta);
}

struct NullSpacePair {
  PolicyModel first;   // steered towards in-distribution continuations
  PolicyModel second;  // steered away from them
};

// Two tabular policies that agree with `base` on every state visited by a
// preference pair (so every margin, and hence every DAA loss, is identical)
// but route the remaining mass differently: at each unvisited state the
// first adds `steer` to the action leading to the most in-distribution
// trajectories, the second to the action leading to the fewest.
inline NullSpacePair construct_null_space_pair(const PolicyModel& base, std::span<const PreferencePair> pairs,
                                               std::span<const TrajectoryId> in_dist, double steer = 10.0) {
  if (base.kind != PolicyKind::tabular) throw InvalidArgument("construct_null_space_pair: needs a tabular policy");
  const auto& mdp = base.mdp;
  const auto actions = static_cast<std::size_t>(mdp.action_count());
  std::vector<bool> pinned(mdp.internal_state_count() + 1, false);
  for (const auto& p : pairs) {
    for (const Trajectory* t : {&p.winner, &p.loser}) {
      for (std::size_t i = 0; i < t->actions.size(); ++i) pinned[t->states[i]] = true;
    }
  }
  std::vector<int> hits(mdp.internal_state_count() * actions, 0);
  for (TrajectoryId id : in_dist) {
    const Trajectory t = mdp.decode(id);
    for (std::size_t i = 0; i < t.actions.size(); ++i) ++hits[(t.states[i] - 1) * actions + t.actions[i]];
  }
  NullSpacePair out{base, base};
  auto first = out.first.params.view("logits");
  auto second = out.second.params.view("logits");
  for (StateId s = 1; s <= mdp.internal_state_count(); ++s) {
    if (pinned[s]) continue;
    const auto row = std::span<const int>(hits).subspan((s - 1) * actions, actions);
    const auto most = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    const auto least = static_cast<std::size_t>(std::min_element(row.begin(), row.end()) - row.begin());
    if (row[most] == row[least]) continue;
    first[(s - 1) * actions + most] += steer;
    second[(s - 1) * actions + least] += steer;
  }
  return out;
}

}  // namespace daalab
