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

// Sequence policies over a TreeMdp: a tabular softmax policy (one logit row
// per internal state) and a recurrent policy
//
//   h' = tanh(W_h h + W_x e(s) + b),   logits = W_o h' + b_o,
//
// with one-hot state embeddings e(s) and h = 0 before the root. Both expose
// exact trajectory log-probabilities and full-distribution enumeration.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "daalab/diffcore.hpp"
#include "daalab/errors.hpp"
#include "daalab/tree_mdp.hpp"

namespace daalab {

enum class PolicyKind { tabular, recurrent };

inline std::string to_string(PolicyKind k) { return k == PolicyKind::tabular ? "tabular" : "recurrent"; }

inline PolicyKind policy_kind_from_string(std::string_view s) {
  if (s == "tabular") return PolicyKind::tabular;
  if (s == "recurrent" || s == "rnn") return PolicyKind::recurrent;
  throw ConfigError("unknown policy kind '" + std::string(s) + "'");
}

// What the recurrent cell reads at each step: the one-hot id of the current
// state, or the one-hot previous action (a BOS token at the root).
enum class RecurrentInput { state, action };

inline std::string to_string(RecurrentInput i) { return i == RecurrentInput::state ? "state" : "action"; }

inline RecurrentInput recurrent_input_from_string(std::string_view s) {
  if (s == "state") return RecurrentInput::state;
  if (s == "action") return RecurrentInput::action;
  throw ConfigError("unknown recurrent input '" + std::string(s) + "'");
}

inline constexpr std::size_t kDefaultHiddenSize = 16;
inline constexpr double kDefaultInitStd = 0.1;

struct PolicyModel {
  PolicyKind kind = PolicyKind::tabular;
  TreeMdp mdp;
  std::size_t hidden_size = 0;  // recurrent only
  RecurrentInput input = RecurrentInput::state;
  std::uint64_t seed = 0;
  ParamVector params;
};

// All-zero logits: the uniform policy.
inline PolicyModel make_tabular(const TreeMdp& mdp) {
  PolicyModel p;
  p.kind = PolicyKind::tabular;
  p.mdp = mdp;
  p.params.add_slice("logits", mdp.internal_state_count(), static_cast<std::size_t>(mdp.action_count()));
  return p;
}

// Parameters drawn N(0, init_std^2) from `seed`.
inline std::size_t embedding_columns(const TreeMdp& mdp, RecurrentInput input) {
  return input == RecurrentInput::state ? mdp.internal_state_count() : static_cast<std::size_t>(mdp.action_count()) + 1;
}

inline PolicyModel make_recurrent(const TreeMdp& mdp, std::uint64_t seed, std::size_t hidden_size = kDefaultHiddenSize,
                                  double init_std = kDefaultInitStd, RecurrentInput input = RecurrentInput::state) {
  if (hidden_size == 0) throw InvalidArgument("recurrent policy needs hidden_size >= 1");
  PolicyModel p;
  p.kind = PolicyKind::recurrent;
  p.mdp = mdp;
  p.hidden_size = hidden_size;
  p.seed = seed;
  p.input = input;
  const auto actions = static_cast<std::size_t>(mdp.action_count());
  p.params.add_slice("embed", hidden_size, embedding_columns(mdp, input));
  p.params.add_slice("hidden_w", hidden_size, hidden_size);
  p.params.add_slice("hidden_b", hidden_size, 1);
  p.params.add_slice("out_w", actions, hidden_size);
  p.params.add_slice("out_b", actions, 1);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, init_std);
  for (auto& v : p.params.values()) v = normal(rng);
  return p;
}

// Differentiable view of a policy on a tape whose bound parameters share the
// policy's layout. Per-state results are memoised, so evaluating many
// trajectories costs one forward step per distinct visited state.
template <class Real>
class PolicyGraph {
 public:
  PolicyGraph(Tape<Real>& tape, const PolicyModel& model) : tape_(tape), model_(model) {
    if (tape.params().size() != model.params.size()) {
      throw InvalidArgument("policy graph: tape parameters do not match the policy layout");
    }
  }

  const PolicyModel& model() const noexcept { return model_; }
  Tape<Real>& tape() noexcept { return tape_; }

  Var<Real> logits(StateId s) {
    require_internal(s);
    if (auto it = logits_.find(s); it != logits_.end()) return it->second;
    const auto actions = static_cast<std::size_t>(model_.mdp.action_count());
    Var<Real> out;
    if (model_.kind == PolicyKind::tabular) {
      out = ops::segment(tape_.param("logits"), (s - 1) * actions, actions);
    } else {
      out = ops::affine(tape_.param("out_w"), hidden(s), tape_.param("out_b"));
    }
    logits_.emplace(s, out);
    return out;
  }

  Var<Real> log_probs(StateId s) {
    if (auto it = log_probs_.find(s); it != log_probs_.end()) return it->second;
    Var<Real> out = ops::log_softmax(logits(s));
    log_probs_.emplace(s, out);
    return out;
  }

  Var<Real> trajectory_logprob(const Trajectory& t) {
    if (!model_.mdp.valid(t)) throw InvalidArgument("trajectory " + std::to_string(t.id) + " invalid for this tree");
    std::vector<Var<Real>> terms;
    terms.reserve(t.actions.size());
    for (std::size_t i = 0; i < t.actions.size(); ++i) {
      terms.push_back(ops::index(log_probs(t.states[i]), static_cast<std::size_t>(t.actions[i])));
    }
    return ops::sum<Real>(terms);
  }

  // Recurrent hidden code after consuming state s.
  Var<Real> hidden(StateId s) {
    require_internal(s);
    if (model_.kind != PolicyKind::recurrent) throw InvalidArgument("tabular policies have no hidden state");
    if (auto it = hidden_.find(s); it != hidden_.end()) return it->second;
    const std::size_t h = model_.hidden_size;
    Var<Real> prev = (s == model_.mdp.root()) ? tape_.constant(std::vector<Real>(h, Real(0)))
                                              : hidden(model_.mdp.parent(s));
    Var<Real> pre = ops::add(ops::affine(tape_.param("hidden_w"), prev, tape_.param("hidden_b")),
                             ops::column(tape_.param("embed"), h, embedding_columns(model_.mdp, model_.input),
                                         input_token(s)));
    Var<Real> out = ops::tanh(pre);
    hidden_.emplace(s, out);
    return out;
  }

 private:
  std::size_t input_token(StateId s) const {
    if (model_.input == RecurrentInput::state) return s - 1;
    return s == model_.mdp.root() ? 0 : static_cast<std::size_t>(model_.mdp.parent_action(s)) + 1;
  }

  void require_internal(StateId s) const {
    if (!model_.mdp.is_internal(s)) {
      throw InvalidArgument("no logits at " + model_.mdp.state_name(s) + " (not an internal state)");
    }
  }

  Tape<Real>& tape_;
  const PolicyModel& model_;
  std::unordered_map<StateId, Var<Real>> hidden_;
  std::unordered_map<StateId, Var<Real>> logits_;
  std::unordered_map<StateId, Var<Real>> log_probs_;
};

// A scalar together with its gradient w.r.t. a policy's parameters.
struct DiffScalar {
  double value = 0.0;
  std::vector<double> grad;
};

inline void require_same_mdp(const PolicyModel& a, const PolicyModel& b) {
  if (!(a.mdp == b.mdp)) throw InvalidArgument("policies are bound to different trees");
}

inline std::vector<double> step_logits(const PolicyModel& policy, StateId state) {
  Tape<double> tape(policy.params);
  PolicyGraph<double> g(tape, policy);
  return g.logits(state).value();
}

// Logits after following an action prefix from the root.
inline std::vector<double> step_logits(const PolicyModel& policy, std::span<const int> prefix) {
  StateId s = policy.mdp.root();
  for (int a : prefix) s = policy.mdp.transition(s, a);
  return step_logits(policy, s);
}

inline DiffScalar trajectory_logprob(const PolicyModel& policy, const Trajectory& t) {
  auto r = evaluate_with_gradient([&](Tape<double>& tape) { return PolicyGraph<double>(tape, policy).trajectory_logprob(t); },
                                  policy.params);
  return {r.value, std::move(r.grad)};
}

// Per-state log-softmax rows, indexed by state id - 1.
inline std::vector<std::vector<double>> state_log_probs(const PolicyModel& policy) {
  Tape<double> tape(policy.params);
  PolicyGraph<double> g(tape, policy);
  std::vector<std::vector<double>> rows(policy.mdp.internal_state_count());
  for (StateId s = 1; s <= rows.size(); ++s) rows[s - 1] = g.log_probs(s).value();
  return rows;
}

struct PolicyDistribution {
  std::vector<double> probs;      // indexed by trajectory id
  std::vector<double> log_probs;  // same index; -inf where probs is 0
  std::string source;             // "tabular", "recurrent", "closed_form", ...
  double beta = 0.0;              // temperature context, 0 when not applicable

  std::size_t size() const noexcept { return probs.size(); }
};

inline PolicyDistribution distribution_from_log_probs(std::vector<double> log_probs, std::string source,
                                                      double beta = 0.0) {
  PolicyDistribution d;
  d.probs.resize(log_probs.size());
  for (std::size_t i = 0; i < log_probs.size(); ++i) d.probs[i] = std::exp(log_probs[i]);
  d.log_probs = std::move(log_probs);
  d.source = std::move(source);
  d.beta = beta;
  return d;
}

// Exact log-probability of every trajectory, by id.
inline std::vector<double> trajectory_log_probs(const PolicyModel& policy) {
  const auto& mdp = policy.mdp;
  if (mdp.trajectory_count() > kMaxTrajectories) throw EnumerabilityError("full_distribution: tree too large");
  const auto rows = state_log_probs(policy);
  std::vector<double> out(mdp.trajectory_count());
  for (TrajectoryId id = 0; id < out.size(); ++id) {
    const Trajectory t = mdp.decode(id);
    double lp = 0.0;
    for (std::size_t i = 0; i < t.actions.size(); ++i) lp += rows[t.states[i] - 1][t.actions[i]];
    out[id] = lp;
  }
  return out;
}

inline PolicyDistribution full_distribution(const PolicyModel& policy) {
  return distribution_from_log_probs(trajectory_log_probs(policy), to_string(policy.kind));
}

inline Trajectory sample(const PolicyModel& policy, std::mt19937_64& rng) {
  const auto rows = state_log_probs(policy);
  std::vector<int> actions;
  StateId s = policy.mdp.root();
  while (s != policy.mdp.terminal()) {
    const auto& row = rows[s - 1];
    const double u = uniform01(rng);
    double acc = 0.0;
    int a = static_cast<int>(row.size()) - 1;
    for (std::size_t k = 0; k < row.size(); ++k) {
      acc += std::exp(row[k]);
      if (u < acc) {
        a = static_cast<int>(k);
        break;
      }
    }
    actions.push_back(a);
    s = policy.mdp.transition(s, a);
  }
  return policy.mdp.make_trajectory(std::span<const int>(actions));
}

inline Trajectory sample(const PolicyModel& policy, std::uint64_t rng_seed) {
  std::mt19937_64 rng(rng_seed);
  return sample(policy, rng);
}

// Tabular policy whose trajectory distribution equals `dist`: each state's
// logits are the log subtree masses of its children. Children with zero mass
// get a logit of log(1e-300).
inline PolicyModel tabular_from_distribution(const TreeMdp& mdp, std::span<const double> probs) {
  if (probs.size() != mdp.trajectory_count()) throw InvalidArgument("distribution size does not match the tree");
  const auto actions = static_cast<std::size_t>(mdp.action_count());
  std::vector<double> mass(mdp.internal_state_count() * actions, 0.0);
  for (TrajectoryId id = 0; id < probs.size(); ++id) {
    const Trajectory t = mdp.decode(id);
    for (std::size_t i = 0; i < t.actions.size(); ++i) mass[(t.states[i] - 1) * actions + t.actions[i]] += probs[id];
  }
  PolicyModel p = make_tabular(mdp);
  auto logits = p.params.view("logits");
  for (std::size_t k = 0; k < logits.size(); ++k) logits[k] = std::log(std::max(mass[k], 1e-300));
  return p;
}

// Refits the readout (out_w, out_b) of a recurrent policy so its per-state
// log-probabilities match `target` exactly where the hidden codes allow it
// (minimum-norm least squares on centred target log-probabilities).
inline PolicyModel distill_readout(const PolicyModel& recurrent, const PolicyModel& target) {
  if (recurrent.kind != PolicyKind::recurrent) throw InvalidArgument("distill_readout: needs a recurrent policy");
  require_same_mdp(recurrent, target);
  const auto& mdp = recurrent.mdp;
  const std::size_t states = mdp.internal_state_count();
  const std::size_t h = recurrent.hidden_size;
  const auto actions = static_cast<std::size_t>(mdp.action_count());

  Tape<double> tape(recurrent.params);
  PolicyGraph<double> graph(tape, recurrent);
  const auto target_rows = state_log_probs(target);
  Eigen::MatrixXd design(states, h + 1);
  Eigen::MatrixXd rhs(states, actions);
  for (StateId s = 1; s <= states; ++s) {
    const auto& code = graph.hidden(s).value();
    for (std::size_t j = 0; j < h; ++j) design(s - 1, j) = code[j];
    design(s - 1, h) = 1.0;
    const auto& row = target_rows[s - 1];
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(actions);
    for (std::size_t a = 0; a < actions; ++a) rhs(s - 1, a) = row[a] - mean;
  }
  const Eigen::MatrixXd solution = design.completeOrthogonalDecomposition().solve(rhs);
  PolicyModel out = recurrent;
  auto out_w = out.params.view("out_w");
  auto out_b = out.params.view("out_b");
  for (std::size_t a = 0; a < actions; ++a) {
    for (std::size_t j = 0; j < h; ++j) out_w[a * h + j] = solution(j, a);
    out_b[a] = solution(h, a);
  }
  return out;
}

}  // namespace daalab
