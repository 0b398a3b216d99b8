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

#include <algorithm>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

#include "daalab/diffcore.hpp"
#include "daalab/errors.hpp"
#include "daalab/policy.hpp"
#include "daalab/tree_mdp.hpp"

namespace daalab {

inline constexpr int kPairRetryCap = 100;

// Bradley-Terry probability that a response with reward r1 beats one with r2.
inline double bt_win_probability(double r1, double r2) { return ops::stable_sigmoid(r1 - r2); }

// Draws from a fixed categorical over trajectory ids by inverse CDF.
class TrajectorySampler {
 public:
  explicit TrajectorySampler(std::span<const double> probs) : cdf_(probs.size()) {
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      cdf_[i] = acc;
    }
  }

  TrajectoryId operator()(std::mt19937_64& rng) const {
    const double u = uniform01(rng) * cdf_.back();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return static_cast<TrajectoryId>(std::min<std::size_t>(it - cdf_.begin(), cdf_.size() - 1));
  }

 private:
  std::vector<double> cdf_;
};

// n pairs of distinct trajectories sampled from the reference policy and
// labelled by the gold judge under the Bradley-Terry model.
inline std::vector<PreferencePair> sample_labeled_pairs(const PolicyModel& ref_policy, const GoldReward& gold,
                                                        int n, std::uint64_t rng_seed) {
  if (n < 1) throw InvalidArgument("sample_labeled_pairs: n must be >= 1");
  const auto& mdp = ref_policy.mdp;
  if (gold.table.size() != mdp.trajectory_count()) throw InvalidArgument("gold reward does not match the tree");
  const PolicyDistribution dist = full_distribution(ref_policy);
  if (*std::max_element(dist.probs.begin(), dist.probs.end()) >= 1.0 - 1e-12) {
    throw DegenerateError("sample_labeled_pairs: reference policy is deterministic; cannot form distinct pairs");
  }
  const TrajectorySampler draw(dist.probs);
  std::mt19937_64 rng(rng_seed);
  std::vector<PreferencePair> pairs;
  pairs.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const TrajectoryId y1 = draw(rng);
    TrajectoryId y2 = draw(rng);
    int retries = 0;
    while (y2 == y1) {
      if (++retries > kPairRetryCap) {
        throw DegenerateError("sample_labeled_pairs: no distinct pair after " + std::to_string(kPairRetryCap) +
                              " retries");
      }
      y2 = draw(rng);
    }
    const bool first_wins = uniform01(rng) < bt_win_probability(gold(y1), gold(y2));
    const Trajectory a = mdp.decode(y1);
    const Trajectory b = mdp.decode(y2);
    pairs.push_back(first_wins ? PreferencePair{a, b} : PreferencePair{b, a});
  }
  return pairs;
}

// Everything a run needs besides the policies.
struct Dataset {
  TreeMdp mdp;
  std::uint64_t gold_seed = 0;
  double length_coeff = 0.0;
  std::vector<Trajectory> demos;
  std::vector<PreferencePair> pairs;

  // Trajectory ids seen in training: demos plus both sides of every pair.
  std::vector<TrajectoryId> in_distribution() const {
    std::set<TrajectoryId> ids;
    for (const auto& d : demos) ids.insert(d.id);
    for (const auto& p : pairs) {
      ids.insert(p.winner.id);
      ids.insert(p.loser.id);
    }
    return {ids.begin(), ids.end()};
  }

  std::vector<Trajectory> preferred() const {
    std::vector<Trajectory> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(p.winner);
    return out;
  }
};

inline Dataset canonical_dataset(std::uint64_t gold_seed = 0) {
  Dataset d;
  d.mdp = build_tree(3, 3);
  const auto c = canonical_appendix_dataset(d.mdp);
  d.gold_seed = gold_seed;
  d.demos = c.demos;
  d.pairs = {c.preference};
  return d;
}

// `count` distinct trajectories drawn uniformly without replacement.
inline std::vector<Trajectory> sample_distinct_demos(const TreeMdp& mdp, int count, std::uint64_t seed) {
  if (count < 1 || static_cast<std::size_t>(count) > mdp.trajectory_count()) {
    throw InvalidArgument("sample_distinct_demos: count out of range");
  }
  std::vector<TrajectoryId> ids(mdp.trajectory_count());
  for (TrajectoryId i = 0; i < ids.size(); ++i) ids[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < static_cast<std::size_t>(count); ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(ids.size() - i));
    std::swap(ids[i], ids[std::min(j, ids.size() - 1)]);
  }
  std::vector<TrajectoryId> chosen(ids.begin(), ids.begin() + count);
  std::sort(chosen.begin(), chosen.end());
  std::vector<Trajectory> out;
  for (auto id : chosen) out.push_back(mdp.decode(id));
  return out;
}

}  // namespace daalab
