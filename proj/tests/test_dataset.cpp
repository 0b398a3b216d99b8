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

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "daalab/dataset.hpp"

namespace daalab {
namespace {

TEST(BradleyTerry, EqualRewardsAreACoinFlip) { EXPECT_DOUBLE_EQ(bt_win_probability(0.7, 0.7), 0.5); }

TEST(BradleyTerry, GapOfLogThree) { EXPECT_NEAR(bt_win_probability(std::log(3.0), 0.0), 0.75, 1e-15); }

TEST(BradleyTerry, SwappingComplementsTheProbability) {
  for (double a : {-3.0, -0.2, 0.0, 1.5, 40.0}) {
    for (double b : {-1.0, 0.3, 2.0}) EXPECT_NEAR(bt_win_probability(a, b) + bt_win_probability(b, a), 1.0, 1e-15);
  }
}

// Two trajectories under a uniform policy: every pair is {0, 1} and the
// empirical winner frequency should be sigma(gap).
TEST(SampleLabeledPairs, WinnerFrequencyMatchesSigmoid) {
  const auto mdp = build_tree(2, 1);
  const auto ref = make_tabular(mdp);
  GoldReward gold;
  gold.table = {0.0, 0.8};
  const int n = 100000;
  const auto pairs = sample_labeled_pairs(ref, gold, n, 9);
  int high_wins = 0;
  for (const auto& p : pairs) {
    ASSERT_NE(p.winner.id, p.loser.id);
    high_wins += p.winner.id == 1;
  }
  EXPECT_NEAR(static_cast<double>(high_wins) / n, 1.0 / (1.0 + std::exp(-0.8)), 0.01);
}

TEST(SampleLabeledPairs, DeterministicInSeed) {
  const auto mdp = build_tree(3, 3);
  const auto ref = make_recurrent(mdp, 1);
  const auto gold = make_gold_reward(mdp, 2);
  const auto a = sample_labeled_pairs(ref, gold, 50, 3);
  const auto b = sample_labeled_pairs(ref, gold, 50, 3);
  ASSERT_EQ(a.size(), 50u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].winner.id, b[i].winner.id);
    EXPECT_EQ(a[i].loser.id, b[i].loser.id);
  }
  const auto c = sample_labeled_pairs(ref, gold, 50, 4);
  bool differ = false;
  for (std::size_t i = 0; i < a.size(); ++i) differ = differ || a[i].winner.id != c[i].winner.id;
  EXPECT_TRUE(differ);
}

TEST(SampleLabeledPairs, DegenerateReferenceIsAnError) {
  const auto mdp = build_tree(2, 1);
  auto ref = make_tabular(mdp);
  ref.params.view("logits")[0] = 50.0;
  EXPECT_THROW(sample_labeled_pairs(ref, make_gold_reward(mdp, 0), 5, 0), DegenerateError);
}

TEST(SampleLabeledPairs, RejectsBadInput) {
  const auto mdp = build_tree(2, 2);
  const auto ref = make_tabular(mdp);
  EXPECT_THROW(sample_labeled_pairs(ref, make_gold_reward(mdp, 0), 0, 0), InvalidArgument);
  EXPECT_THROW(sample_labeled_pairs(ref, make_gold_reward(build_tree(3, 2), 0), 3, 0), InvalidArgument);
}

TEST(SampleDistinctDemos, DistinctSortedAndDeterministic) {
  const auto mdp = build_tree(3, 4);
  const auto a = sample_distinct_demos(mdp, 16, 7);
  const auto b = sample_distinct_demos(mdp, 16, 7);
  ASSERT_EQ(a.size(), 16u);
  std::set<TrajectoryId> ids;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ids.insert(a[i].id);
    EXPECT_EQ(a[i].id, b[i].id);
    if (i > 0) {
      EXPECT_LT(a[i - 1].id, a[i].id);
    }
  }
  EXPECT_EQ(ids.size(), 16u);
  EXPECT_EQ(sample_distinct_demos(mdp, 81, 1).size(), 81u);
  EXPECT_THROW(sample_distinct_demos(mdp, 82, 1), InvalidArgument);
}

TEST(Dataset, CanonicalInDistributionSet) {
  const auto d = canonical_dataset();
  const auto in = d.in_distribution();
  // Three demos; the pair reuses two of them.
  EXPECT_EQ(in.size(), 3u);
  ASSERT_EQ(d.preferred().size(), 1u);
  EXPECT_EQ(d.preferred()[0].actions, (std::vector<int>{1, 1, 0}));
}

}  // namespace
}  // namespace daalab
