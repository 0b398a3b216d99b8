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

// Deterministic B-ary tree MDP with exactly enumerable trajectories.
//
// States are numbered breadth-first starting at 1 for the root, so the
// 3-action, 3-step tree has s1, s2..s4, s5..s13 as internal states. Every
// action taken at the last internal level leads to the absorbing terminal
// state, whose id is one past the last internal state.
//
// With `stop_action` enabled each internal state gets one extra action
// (index `branching`) that jumps straight to the terminal, which gives
// trajectories of different lengths.

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "daalab/errors.hpp"

namespace daalab {

using StateId = std::uint32_t;
using TrajectoryId = std::uint32_t;

inline constexpr std::size_t kMaxTrajectories = 1'000'000;

struct Trajectory {
  std::vector<int> actions;
  std::vector<StateId> states;  // root ... terminal, actions.size() + 1 entries
  TrajectoryId id = 0;

  friend bool operator==(const Trajectory& a, const Trajectory& b) { return a.id == b.id; }
};

struct PreferencePair {
  Trajectory winner;
  Trajectory loser;
};

class TreeMdp {
 public:
  TreeMdp() = default;

  // Throws EnumerabilityError if the trajectory count exceeds kMaxTrajectories.
  static TreeMdp build(int branching, int depth, bool stop_action = false) {
    if (branching < 2) throw InvalidArgument("build_tree: branching must be >= 2");
    if (depth < 1) throw InvalidArgument("build_tree: depth must be >= 1");
    TreeMdp mdp;
    mdp.branching_ = branching;
    mdp.depth_ = depth;
    mdp.stop_action_ = stop_action;

    // subtree_[k] = number of trajectories from a state at level k.
    mdp.subtree_.assign(static_cast<std::size_t>(depth) + 1, 1);
    for (int k = depth - 1; k >= 0; --k) {
      const double next = static_cast<double>(mdp.subtree_[k + 1]) * branching + (stop_action ? 1 : 0);
      if (next > static_cast<double>(kMaxTrajectories)) {
        throw EnumerabilityError("build_tree: " + std::to_string(branching) + "^" + std::to_string(depth) +
                                 " trajectories exceed the enumerability bound");
      }
      mdp.subtree_[k] = static_cast<std::size_t>(next);
    }

    mdp.level_offset_.assign(static_cast<std::size_t>(depth) + 1, 1);
    std::size_t width = 1;
    for (int k = 1; k <= depth; ++k) {
      mdp.level_offset_[k] = mdp.level_offset_[k - 1] + width;
      width *= static_cast<std::size_t>(branching);
    }
    const std::size_t internal = mdp.level_offset_[depth] - 1;
    mdp.terminal_ = static_cast<StateId>(internal + 1);

    const int actions = mdp.action_count();
    mdp.next_.assign(internal * actions, 0);
    mdp.level_.assign(internal + 2, 0);
    mdp.parent_.assign(internal + 2, 0);
    mdp.parent_action_.assign(internal + 2, -1);
    mdp.level_[mdp.terminal_] = depth;
    for (int k = 0; k < depth; ++k) {
      const std::size_t count = mdp.level_offset_[k + 1] - mdp.level_offset_[k];
      for (std::size_t j = 0; j < count; ++j) {
        const auto s = static_cast<StateId>(mdp.level_offset_[k] + j);
        mdp.level_[s] = k;
        for (int a = 0; a < actions; ++a) {
          StateId child = mdp.terminal_;
          if (a < branching && k + 1 < depth) {
            child = static_cast<StateId>(mdp.level_offset_[k + 1] + j * branching + a);
            mdp.parent_[child] = s;
            mdp.parent_action_[child] = a;
          }
          mdp.next_[(s - 1) * actions + a] = child;
        }
      }
    }
    return mdp;
  }

  int branching() const noexcept { return branching_; }
  int depth() const noexcept { return depth_; }
  bool stop_action() const noexcept { return stop_action_; }
  int action_count() const noexcept { return branching_ + (stop_action_ ? 1 : 0); }
  int stop_index() const noexcept { return stop_action_ ? branching_ : -1; }

  StateId root() const noexcept { return 1; }
  StateId terminal() const noexcept { return terminal_; }
  std::size_t internal_state_count() const noexcept { return terminal_ - 1; }
  // Internal states plus the terminal.
  std::size_t state_count() const noexcept { return terminal_; }
  std::size_t trajectory_count() const noexcept { return subtree_[0]; }

  bool is_internal(StateId s) const noexcept { return s >= 1 && s < terminal_; }
  int level(StateId s) const { return level_.at(s); }
  StateId parent(StateId s) const { return parent_.at(s); }
  int parent_action(StateId s) const { return parent_action_.at(s); }

  StateId transition(StateId s, int action) const {
    if (!is_internal(s)) throw InvalidArgument("transition: state " + std::to_string(s) + " is not internal");
    if (action < 0 || action >= action_count()) {
      throw InvalidArgument("transition: action " + std::to_string(action) + " out of range");
    }
    return next_[(s - 1) * action_count() + action];
  }

  // Dense trajectory id: rank of the action sequence in lexicographic order
  // (STOP sorts last). Without a stop action this is the base-B value.
  TrajectoryId encode(std::span<const int> actions) const {
    validate_actions(actions);
    std::size_t id = 0;
    for (std::size_t i = 0; i < actions.size(); ++i) {
      id += static_cast<std::size_t>(actions[i]) * subtree_[i + 1];
    }
    return static_cast<TrajectoryId>(id);
  }

  Trajectory decode(TrajectoryId id) const {
    if (id >= trajectory_count()) throw InvalidArgument("decode: unknown trajectory id " + std::to_string(id));
    std::vector<int> actions;
    std::size_t rest = id;
    for (int k = 0; k < depth_; ++k) {
      const auto a = static_cast<int>(rest / subtree_[k + 1]);
      rest %= subtree_[k + 1];
      actions.push_back(a);
      if (a == stop_index()) break;
    }
    return make_trajectory(actions);
  }

  // Builds a validated trajectory from an action sequence.
  Trajectory make_trajectory(std::span<const int> actions) const {
    Trajectory t;
    t.id = encode(actions);
    t.actions.assign(actions.begin(), actions.end());
    t.states.reserve(actions.size() + 1);
    StateId s = root();
    t.states.push_back(s);
    for (int a : actions) {
      s = transition(s, a);
      t.states.push_back(s);
    }
    return t;
  }

  Trajectory make_trajectory(std::initializer_list<int> actions) const {
    const std::vector<int> v(actions);
    return make_trajectory(std::span<const int>(v));
  }

  // Number of non-STOP actions.
  int token_length(const Trajectory& t) const noexcept {
    int n = 0;
    for (int a : t.actions) n += (a != stop_index()) ? 1 : 0;
    return n;
  }

  // True iff the trajectory is consistent with this tree's transition map.
  bool valid(const Trajectory& t) const {
    if (t.actions.empty() || t.states.size() != t.actions.size() + 1) return false;
    try {
      if (encode(t.actions) != t.id) return false;
    } catch (const Error&) {
      return false;
    }
    if (t.states.front() != root()) return false;
    for (std::size_t i = 0; i < t.actions.size(); ++i) {
      if (!is_internal(t.states[i]) || transition(t.states[i], t.actions[i]) != t.states[i + 1]) return false;
    }
    return t.states.back() == terminal();
  }

  std::string state_name(StateId s) const {
    return s == terminal_ ? std::string("s_inf") : "s" + std::to_string(s);
  }

  friend bool operator==(const TreeMdp& a, const TreeMdp& b) {
    return a.branching_ == b.branching_ && a.depth_ == b.depth_ && a.stop_action_ == b.stop_action_;
  }

 private:
  void validate_actions(std::span<const int> actions) const {
    if (actions.empty() || actions.size() > static_cast<std::size_t>(depth_)) {
      throw InvalidArgument("trajectory length " + std::to_string(actions.size()) + " invalid for depth " +
                            std::to_string(depth_));
    }
    for (std::size_t i = 0; i < actions.size(); ++i) {
      const int a = actions[i];
      if (a < 0 || a >= action_count()) throw InvalidArgument("action " + std::to_string(a) + " out of range");
      const bool last = i + 1 == actions.size();
      if (a == stop_index() && !last) throw InvalidArgument("STOP must be the final action");
      if (last && actions.size() < static_cast<std::size_t>(depth_) && a != stop_index()) {
        throw InvalidArgument("trajectory ends before the terminal state");
      }
    }
  }

  int branching_ = 0;
  int depth_ = 0;
  bool stop_action_ = false;
  StateId terminal_ = 0;
  std::vector<std::size_t> subtree_;
  std::vector<std::size_t> level_offset_;
  std::vector<StateId> next_;
  std::vector<int> level_;
  std::vector<StateId> parent_;
  std::vector<int> parent_action_;
};

inline TreeMdp build_tree(int branching, int depth, bool stop_action = false) {
  return TreeMdp::build(branching, depth, stop_action);
}

// All trajectories in ascending id order.
inline std::vector<Trajectory> enumerate_trajectories(const TreeMdp& mdp) {
  std::vector<Trajectory> out;
  out.reserve(mdp.trajectory_count());
  for (TrajectoryId id = 0; id < mdp.trajectory_count(); ++id) out.push_back(mdp.decode(id));
  return out;
}

struct CanonicalDataset {
  std::vector<Trajectory> demos;
  PreferencePair preference;
};

// The three demonstrations and the single preference of the 3x3 toy setup:
// demos (a0,a0,a0), (a1,a1,a0), (a2,a2,a2); (a1,a1,a0) preferred over (a0,a0,a0).
inline CanonicalDataset canonical_appendix_dataset(const TreeMdp& mdp) {
  if (mdp.branching() != 3 || mdp.depth() != 3 || mdp.stop_action()) {
    throw ConfigError("canonical dataset requires the fixed-depth B=3, D=3 tree");
  }
  CanonicalDataset d;
  d.demos = {mdp.make_trajectory({0, 0, 0}), mdp.make_trajectory({1, 1, 0}), mdp.make_trajectory({2, 2, 2})};
  d.preference = {d.demos[1], d.demos[0]};
  return d;
}

struct GoldReward {
  std::vector<double> table;  // indexed by trajectory id
  double length_coeff = 0.0;
  std::uint64_t seed = 0;

  double operator()(TrajectoryId id) const { return table.at(id); }
};

// Standard-normal reward per trajectory plus length_coeff * token length.
inline GoldReward make_gold_reward(const TreeMdp& mdp, std::uint64_t seed, double length_coeff = 0.0) {
  GoldReward g;
  g.seed = seed;
  g.length_coeff = length_coeff;
  g.table.resize(mdp.trajectory_count());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (TrajectoryId id = 0; id < g.table.size(); ++id) {
    g.table[id] = normal(rng) + length_coeff * mdp.token_length(mdp.decode(id));
  }
  return g;
}

// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace daalab
