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

#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "daalab/tree_mdp.hpp"

namespace daalab {
namespace {

// Trajectory count of a tree with an optional stop action, by the recursion
// N(0) = 1, N(k) = B * N(k-1) + [stop].
std::size_t count_oracle(int b, int d, bool stop) {
  std::size_t n = 1;
  for (int k = 0; k < d; ++k) n = n * static_cast<std::size_t>(b) + (stop ? 1 : 0);
  return n;
}

TEST(BuildTree, ThreeByThreeLabelsFollowTheFigure) {
  const auto mdp = build_tree(3, 3);
  EXPECT_EQ(mdp.root(), 1u);
  EXPECT_EQ(mdp.internal_state_count(), 13u);
  for (int a = 0; a < 3; ++a) EXPECT_EQ(mdp.transition(1, a), static_cast<StateId>(2 + a));
  EXPECT_EQ(mdp.transition(2, 0), 5u);
  EXPECT_EQ(mdp.transition(3, 1), 9u);
  EXPECT_EQ(mdp.transition(4, 2), 13u);
  for (StateId leaf = 5; leaf <= 13; ++leaf) {
    for (int a = 0; a < 3; ++a) EXPECT_EQ(mdp.transition(leaf, a), mdp.terminal());
  }
  EXPECT_EQ(mdp.state_name(mdp.terminal()), "s_inf");
  EXPECT_EQ(mdp.state_name(9), "s9");
}

TEST(BuildTree, SmallestTree) {
  const auto mdp = build_tree(2, 1);
  EXPECT_EQ(mdp.trajectory_count(), 2u);
  EXPECT_EQ(mdp.internal_state_count(), 1u);
}

TEST(BuildTree, CanonicalTreeHas27Trajectories) { EXPECT_EQ(build_tree(3, 3).trajectory_count(), 27u); }

TEST(BuildTree, RejectsBadShapes) {
  EXPECT_THROW(build_tree(1, 3), InvalidArgument);
  EXPECT_THROW(build_tree(3, 0), InvalidArgument);
  EXPECT_THROW(build_tree(10, 7), EnumerabilityError);
  EXPECT_NO_THROW(build_tree(10, 6));
  EXPECT_THROW(build_tree(10, 6, true), EnumerabilityError);
}

TEST(BuildTree, TransitionFromTerminalIsAnError) {
  const auto mdp = build_tree(3, 2);
  EXPECT_THROW(mdp.transition(mdp.terminal(), 0), InvalidArgument);
}

TEST(Enumerate, IdsAscendingAndStatesValid) {
  for (bool stop : {false, true}) {
    const auto mdp = build_tree(3, 3, stop);
    const auto all = enumerate_trajectories(mdp);
    ASSERT_EQ(all.size(), mdp.trajectory_count());
    for (std::size_t i = 0; i < all.size(); ++i) {
      EXPECT_EQ(all[i].id, i);
      EXPECT_TRUE(mdp.valid(all[i]));
      ASSERT_EQ(all[i].states.size(), all[i].actions.size() + 1);
      EXPECT_EQ(all[i].states.front(), mdp.root());
      EXPECT_EQ(all[i].states.back(), mdp.terminal());
      for (std::size_t k = 0; k < all[i].actions.size(); ++k) {
        EXPECT_EQ(all[i].states[k + 1], mdp.transition(all[i].states[k], all[i].actions[k]));
      }
    }
  }
}

TEST(Enumerate, TwoByOne) {
  const auto all = enumerate_trajectories(build_tree(2, 1));
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[0].id, 0u);
  EXPECT_EQ(all[1].id, 1u);
}

TEST(Enumerate, FixedDepthIdIsBaseBEncoding) {
  const auto mdp = build_tree(3, 3);
  for (const auto& t : enumerate_trajectories(mdp)) {
    ASSERT_EQ(t.actions.size(), 3u);
    EXPECT_EQ(t.id, static_cast<TrajectoryId>(t.actions[0] * 9 + t.actions[1] * 3 + t.actions[2]));
  }
}

TEST(TrajectoryProperty, CountMatchesRecursion) {
  for (int b = 2; b <= 5; ++b) {
    for (int d = 1; d <= 5; ++d) {
      for (bool stop : {false, true}) {
        const auto mdp = build_tree(b, d, stop);
        EXPECT_EQ(mdp.trajectory_count(), count_oracle(b, d, stop)) << b << "," << d << "," << stop;
        EXPECT_EQ(enumerate_trajectories(mdp).size(), count_oracle(b, d, stop));
      }
    }
  }
}

TEST(TrajectoryProperty, IdActionBijection) {
  for (bool stop : {false, true}) {
    const auto mdp = build_tree(3, 4, stop);
    std::set<std::vector<int>> seen;
    for (TrajectoryId id = 0; id < mdp.trajectory_count(); ++id) {
      const auto t = mdp.decode(id);
      EXPECT_EQ(mdp.encode(t.actions), id);
      EXPECT_EQ(mdp.make_trajectory(t.actions).id, id);
      seen.insert(t.actions);
    }
    EXPECT_EQ(seen.size(), mdp.trajectory_count());
  }
}

TEST(TrajectoryProperty, StopEndsEarlyAndIsNotAToken) {
  const auto mdp = build_tree(3, 3, true);
  const auto t = mdp.make_trajectory({1, 3});
  EXPECT_EQ(t.states.back(), mdp.terminal());
  EXPECT_EQ(mdp.token_length(t), 1);
  EXPECT_EQ(mdp.token_length(mdp.make_trajectory({0, 0, 0})), 3);
  EXPECT_EQ(mdp.token_length(mdp.make_trajectory({3})), 0);
}

TEST(TrajectoryProperty, InvalidActionSequencesAreRejected) {
  const auto mdp = build_tree(3, 3);
  EXPECT_THROW(mdp.make_trajectory({0, 0}), InvalidArgument);
  EXPECT_THROW(mdp.make_trajectory({0, 3, 0}), InvalidArgument);
  EXPECT_THROW(mdp.decode(27), InvalidArgument);
}

TEST(CanonicalDataset, DemonstrationsAndPreference) {
  const auto mdp = build_tree(3, 3);
  const auto d = canonical_appendix_dataset(mdp);
  ASSERT_EQ(d.demos.size(), 3u);
  EXPECT_EQ(d.demos[0].actions, (std::vector<int>{0, 0, 0}));
  EXPECT_EQ(d.demos[1].actions, (std::vector<int>{1, 1, 0}));
  EXPECT_EQ(d.demos[2].actions, (std::vector<int>{2, 2, 2}));
  EXPECT_EQ(d.preference.winner.actions, (std::vector<int>{1, 1, 0}));
  EXPECT_EQ(d.preference.loser.actions, (std::vector<int>{0, 0, 0}));
  EXPECT_NE(d.preference.winner.id, d.preference.loser.id);
  // (s1, a1, s3, a1, s9, a0, s_inf)
  EXPECT_EQ(d.preference.winner.states, (std::vector<StateId>{1, 3, 9, mdp.terminal()}));
  EXPECT_EQ(d.demos[2].states, (std::vector<StateId>{1, 4, 13, mdp.terminal()}));
}

TEST(CanonicalDataset, WrongShapeIsAConfigError) {
  EXPECT_THROW(canonical_appendix_dataset(build_tree(3, 2)), ConfigError);
  EXPECT_THROW(canonical_appendix_dataset(build_tree(3, 3, true)), ConfigError);
  EXPECT_THROW(canonical_appendix_dataset(build_tree(2, 3)), ConfigError);
}

TEST(GoldReward, Deterministic) {
  const auto mdp = build_tree(3, 3);
  EXPECT_EQ(make_gold_reward(mdp, 5).table, make_gold_reward(mdp, 5).table);
}

TEST(GoldReward, SeedsDiffer) {
  const auto mdp = build_tree(3, 3);
  EXPECT_NE(make_gold_reward(mdp, 1).table, make_gold_reward(mdp, 2).table);
}

TEST(GoldReward, MatchesDirectGeneratorDraws) {
  const auto mdp = build_tree(3, 3);
  const auto g = make_gold_reward(mdp, 42);
  std::mt19937_64 rng(42);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (TrajectoryId id = 0; id < mdp.trajectory_count(); ++id) EXPECT_EQ(g(id), n01(rng));
}

TEST(GoldReward, LengthCoefficientAddsPerToken) {
  const auto fixed = build_tree(3, 3);
  EXPECT_EQ(make_gold_reward(fixed, 3, 0.0).table, make_gold_reward(fixed, 3).table);
  const auto var = build_tree(3, 3, true);
  const auto base = make_gold_reward(var, 3, 0.0);
  const auto with = make_gold_reward(var, 3, 0.25);
  for (TrajectoryId id = 0; id < var.trajectory_count(); ++id) {
    EXPECT_NEAR(with(id) - base(id), 0.25 * var.token_length(var.decode(id)), 1e-12);
  }
}

}  // namespace
}  // namespace daalab
