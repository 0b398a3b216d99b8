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
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "daalab/experiment.hpp"
#include "daalab/trainer.hpp"

namespace daalab {
namespace {

TrainConfig sft_config(int steps, int every) {
  TrainConfig c;
  c.stage = Stage::sft;
  c.steps = steps;
  c.snapshot_every = every;
  return c;
}

TrainConfig daa_config(LossKind k, double beta, int steps, int every) {
  TrainConfig c;
  c.loss = k;
  c.beta = beta;
  c.steps = steps;
  c.snapshot_every = every;
  return c;
}

std::vector<double> flatten(const RunTrace& t) {
  std::vector<double> out;
  for (const auto& r : t.records) {
    const auto& m = r.metrics;
    out.insert(out.end(), {static_cast<double>(r.step), r.step_frac, r.loss, r.mean_margin, m.kl_reverse, m.kl_forward,
                           m.ood_mass, m.p_win, m.p_lose, m.in_dist_other, m.accuracy, m.winrate, m.fwd_kl_proxy});
  }
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

TEST(TrainConfig, Validation) {
  EXPECT_NO_THROW(daa_config(LossKind::dpo, 0.1, 100, 5).validate());
  EXPECT_NO_THROW(daa_config(LossKind::dpo, 0.1, 0, 5).validate());
  EXPECT_THROW(daa_config(LossKind::dpo, 0.1, -1, 5).validate(), ConfigError);
  EXPECT_THROW(daa_config(LossKind::dpo, 0.1, 100, 0).validate(), ConfigError);
  EXPECT_THROW(daa_config(LossKind::dpo, 0.1, 100, 60).validate(), ConfigError);
  EXPECT_THROW(daa_config(LossKind::dpo, 0.0, 100, 5).validate(), ConfigError);
  auto c = daa_config(LossKind::dpo, 0.1, 100, 5);
  c.optimizer.lr = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(TrainConfig, SnapshotCadence) {
  const auto c = daa_config(LossKind::dpo, 0.1, 2000, snapshot_interval(2000, 0.05));
  const auto s = c.snapshot_steps();
  ASSERT_EQ(s.size(), 21u);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(s[i], static_cast<int>(100 * i));
  // The five-point grid of four intermediate checkpoints plus the final one is a subset.
  for (int k = 1; k <= 5; ++k) EXPECT_NE(std::find(s.begin(), s.end(), 400 * k), s.end());
  const auto odd = daa_config(LossKind::dpo, 0.1, 25, 10).snapshot_steps();
  EXPECT_EQ(odd, (std::vector<int>{0, 10, 20, 25}));
  EXPECT_THROW(snapshot_interval(100, 0.0), ConfigError);
  EXPECT_THROW(snapshot_interval(100, 0.6), ConfigError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  AdamConfig cfg;
  Adam adam(cfg, 3);
  std::vector<double> x{0.0, 1.0, -2.0};
  adam.step(x, std::vector<double>{3.0, -0.5, 0.0});
  EXPECT_NEAR(x[0], -cfg.lr, 1e-9);
  EXPECT_NEAR(x[1], 1.0 + cfg.lr, 1e-9);
  EXPECT_EQ(x[2], -2.0);
}

TEST(RunSft, CanonicalRootMarginalsAreUniform) {
  const auto data = canonical_dataset();
  const auto [policy, trace] = run_sft(make_tabular(data.mdp), data.demos, sft_config(500, 25));
  const auto root = state_log_probs(policy)[0];
  for (double lp : root) EXPECT_NEAR(std::exp(lp), 1.0 / 3.0, 0.02);
  EXPECT_LT(trace.records.back().loss, trace.records.front().loss);
}

TEST(RunSft, ConvergesOnUnambiguousState) {
  const auto data = canonical_dataset();
  for (const auto& init : {make_tabular(data.mdp), make_recurrent(data.mdp, 1)}) {
    const auto [policy, trace] = run_sft(init, data.demos, sft_config(2000, 100));
    const StateId s2 = data.mdp.transition(data.mdp.root(), 0);
    EXPECT_GT(std::exp(state_log_probs(policy)[s2 - 1][0]), 0.9);
    EXPECT_NEAR(trace.records.back().ood_mass, 0.0, 0.05);
  }
}

TEST(RunSft, Deterministic) {
  const auto data = canonical_dataset();
  const auto a = run_sft(make_recurrent(data.mdp, 3), data.demos, sft_config(200, 20));
  const auto b = run_sft(make_recurrent(data.mdp, 3), data.demos, sft_config(200, 20));
  EXPECT_EQ(a.first.params, b.first.params);
  ASSERT_EQ(a.second.records.size(), b.second.records.size());
  for (std::size_t i = 0; i < a.second.records.size(); ++i) {
    EXPECT_EQ(a.second.records[i].loss, b.second.records[i].loss);
    EXPECT_EQ(a.second.records[i].ood_mass, b.second.records[i].ood_mass);
  }
}

TEST(RunSft, RejectsWrongStageAndEmptyDemos) {
  const auto data = canonical_dataset();
  EXPECT_THROW(run_sft(make_tabular(data.mdp), data.demos, daa_config(LossKind::dpo, 0.1, 10, 2)), ConfigError);
  EXPECT_THROW(run_sft(make_tabular(data.mdp), std::vector<Trajectory>{}, sft_config(10, 2)), InvalidArgument);
}

TEST(RunDaa, ZeroStepsReturnsInitialPolicy) {
  const auto data = canonical_dataset();
  const auto gold = make_gold_reward(data.mdp, 0);
  const auto ref = make_recurrent(data.mdp, 2);
  const auto [policy, trace] = run_daa(ref, ref, data, gold, daa_config(LossKind::ipo, 0.1, 0, 1));
  EXPECT_EQ(policy.params, ref.params);
  ASSERT_EQ(trace.records.size(), 1u);
  EXPECT_EQ(trace.records[0].metrics.kl_reverse, 0.0);
}

TEST(RunDaa, ReferenceIsNotModified) {
  const auto data = canonical_dataset();
  const auto gold = make_gold_reward(data.mdp, 0);
  const auto ref = make_recurrent(data.mdp, 2);
  const auto before = ref.params.values();
  const auto [policy, trace] = run_daa(ref, ref, data, gold, daa_config(LossKind::dpo, 0.1, 100, 10));
  EXPECT_EQ(ref.params.values(), before);
  EXPECT_NE(policy.params.values(), before);
}

TEST(RunDaa, RecordsAreOrderedAndFinite) {
  const auto data = canonical_dataset();
  const auto gold = make_gold_reward(data.mdp, 0);
  const auto ref = make_recurrent(data.mdp, 2);
  const auto [policy, trace] = run_daa(ref, ref, data, gold, daa_config(LossKind::slic, 0.5, 200, 10));
  ASSERT_EQ(trace.records.size(), 21u);
  for (std::size_t i = 1; i < trace.records.size(); ++i) EXPECT_GT(trace.records[i].step, trace.records[i - 1].step);
  for (double v : flatten(trace)) EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(trace.records.back().step_frac, 1.0);
}

TEST(RunDaa, CanonicalMarginBecomesPositive) {
  const auto data = canonical_dataset();
  const auto gold = make_gold_reward(data.mdp, 0);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto ref = run_sft(make_recurrent(data.mdp, seed), data.demos, sft_config(500, 25)).first;
    for (auto k : {LossKind::dpo, LossKind::slic}) {
      for (double beta : {0.01, 0.1, 0.5}) {
        const auto trace = run_daa(ref, ref, data, gold, daa_config(k, beta, 2000, 100)).second;
        EXPECT_GT(trace.records.back().mean_margin, 0.0) << to_string(k) << " beta " << beta << " seed " << seed;
        EXPECT_EQ(trace.records.back().metrics.accuracy, 1.0);
      }
    }
  }
}

TEST(RunDaa, NonFiniteLossAbortsWithStep) {
  const auto data = canonical_dataset();
  const auto gold = make_gold_reward(data.mdp, 0);
  const auto ref = make_tabular(data.mdp);
  auto broken = ref;
  broken.params.values()[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    run_daa(broken, ref, data, gold, daa_config(LossKind::dpo, 0.1, 10, 2));
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.step(), 0);
  }
}

TEST(RunDaa, RejectsMismatchedTrees) {
  const auto data = canonical_dataset();
  const auto gold = make_gold_reward(data.mdp, 0);
  const auto other = make_tabular(build_tree(3, 2));
  EXPECT_THROW(run_daa(other, other, data, gold, daa_config(LossKind::dpo, 0.1, 10, 2)), InvalidArgument);
  Dataset empty = data;
  empty.pairs.clear();
  const auto ref = make_tabular(data.mdp);
  EXPECT_THROW(run_daa(ref, ref, empty, gold, daa_config(LossKind::dpo, 0.1, 10, 2)), InvalidArgument);
}

TEST(RunDaa, ObserverSeesEverySnapshot) {
  const auto data = canonical_dataset();
  const auto gold = make_gold_reward(data.mdp, 0);
  const auto ref = make_recurrent(data.mdp, 4);
  std::vector<int> steps;
  const auto trace = run_daa(ref, ref, data, gold, daa_config(LossKind::dpo, 0.1, 50, 10),
                             [&](const TraceRecord& r, const PolicyModel& p) {
                               steps.push_back(r.step);
                               EXPECT_DOUBLE_EQ(r.metrics.ood_mass, ood_mass(p, data.in_distribution()));
                             })
                         .second;
  EXPECT_EQ(steps, (std::vector<int>{0, 10, 20, 30, 40, 50}));
}

TEST(Sweep, GridCardinalityAndOrder) {
  const auto data = std::make_shared<const Dataset>(canonical_dataset());
  const auto gold = std::make_shared<const GoldReward>(make_gold_reward(data->mdp, 0));
  const auto ref = std::make_shared<const PolicyModel>(make_recurrent(data->mdp, 0));
  std::vector<SweepCell> cells;
  for (auto k : kAllLossKinds) {
    for (double beta : {0.005, 0.01, 0.025, 0.05, 0.1, 0.25, 0.5}) cells.push_back({daa_config(k, beta, 20, 5), ref, data, gold, {}});
  }
  const auto results = sweep(cells, 4);
  ASSERT_EQ(results.size(), 21u);
  for (std::size_t i = 0; i < results.size(); ++i) {
    ASSERT_TRUE(results[i].ok()) << results[i].error;
    EXPECT_EQ(results[i].config.loss, cells[i].config.loss);
    EXPECT_EQ(results[i].config.beta, cells[i].config.beta);
  }
}

TEST(Sweep, SequentialAndConcurrentAgreeBitwise) {
  const auto mdp = build_tree(3, 3);
  const auto gold = std::make_shared<const GoldReward>(make_gold_reward(mdp, 1));
  const auto ref = std::make_shared<const PolicyModel>(make_recurrent(mdp, 1, 16, 0.5));
  auto d = std::make_shared<Dataset>();
  d->mdp = mdp;
  d->demos = sample_distinct_demos(mdp, 5, 2);
  d->pairs = sample_labeled_pairs(*ref, *gold, 30, 3);
  const std::shared_ptr<const Dataset> data = d;
  std::vector<SweepCell> cells;
  for (auto k : kAllLossKinds) {
    for (double beta : {0.01, 0.1, 0.5}) cells.push_back({daa_config(k, beta, 60, 10), ref, data, gold, {}});
  }
  const auto seq = sweep(cells, 1);
  const auto par = sweep(cells, 8);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    EXPECT_EQ(flatten(*seq[i].trace), flatten(*par[i].trace));
    EXPECT_EQ(seq[i].policy->params, par[i].policy->params);
  }
}

TEST(Sweep, FailingCellDoesNotStopSiblings) {
  const auto data = std::make_shared<const Dataset>(canonical_dataset());
  const auto gold = std::make_shared<const GoldReward>(make_gold_reward(data->mdp, 0));
  const auto ref = std::make_shared<const PolicyModel>(make_tabular(data->mdp));
  std::vector<SweepCell> cells{{daa_config(LossKind::dpo, 0.1, 10, 2), ref, data, gold, {}},
                               {daa_config(LossKind::dpo, -1.0, 10, 2), ref, data, gold, {}},
                               {daa_config(LossKind::ipo, 0.1, 10, 2), ref, data, gold, {}}};
  const auto r = sweep(cells, 2);
  EXPECT_TRUE(r[0].ok());
  EXPECT_FALSE(r[1].ok());
  EXPECT_FALSE(r[1].trace.has_value());
  EXPECT_TRUE(r[2].ok());
  cells[1].ref = nullptr;
  EXPECT_THROW(sweep(cells), InvalidArgument);
}

// Median final KL over ten seeds of the gold-labelled pipeline, by loss and
// beta. At most one adjacent pair may break the non-increasing trend.
TEST(TrainerProperty, FinalKlShrinksWithBeta) {
  auto m = gold_sweep_manifest();
  m.depth = 3;
  m.seeds = 10;
  m.betas = {0.01, 0.05, 0.1, 0.5};
  m.steps = 1000;
  const auto r = run_experiment(m);
  ASSERT_TRUE(r.all_ok());
  for (auto k : kAllLossKinds) {
    std::vector<double> med;
    for (double beta : m.betas) {
      std::vector<double> kls;
      for (const auto& c : r.cells) {
        if (c.loss == k && c.beta == beta) kls.push_back(c.result.trace->records.back().metrics.kl_reverse);
      }
      ASSERT_EQ(kls.size(), 10u);
      med.push_back(median(kls));
    }
    int violations = 0;
    std::string trend;
    for (std::size_t i = 0; i < med.size(); ++i) {
      if (i > 0) violations += med[i] > med[i - 1];
      trend += " " + std::to_string(med[i]);
    }
    EXPECT_LE(violations, 1) << to_string(k) << trend;
  }
}

}  // namespace
}  // namespace daalab
