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

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "daalab/experiment.hpp"
#include "daalab/io.hpp"

namespace daalab {
namespace {

using io::json;

std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("daalab_test_io_" + name);
  std::filesystem::remove_all(p);
  return p;
}

TEST(Io, FormatRealRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 2.0, -1e-300, 123456.789, 0.0}) {
    EXPECT_EQ(std::strtod(io::format_real(v).c_str(), nullptr), v);
  }
  EXPECT_EQ(io::format_real(0.5), "0.5");
}

TEST(Io, DatasetRoundTrip) {
  auto d = canonical_dataset(42);
  d.length_coeff = 0.25;
  const auto back = io::dataset_from_json(json::parse(io::dataset_to_json(d).dump()));
  EXPECT_EQ(back.mdp, d.mdp);
  EXPECT_EQ(back.gold_seed, 42u);
  EXPECT_EQ(back.length_coeff, 0.25);
  ASSERT_EQ(back.pairs.size(), 1u);
  EXPECT_EQ(back.pairs[0].winner.actions, d.pairs[0].winner.actions);
  EXPECT_EQ(back.pairs[0].loser.actions, d.pairs[0].loser.actions);
  EXPECT_EQ(back.in_distribution(), d.in_distribution());
}

TEST(Io, DatasetRejectsBadIds) {
  auto j = io::dataset_to_json(canonical_dataset());
  j["pairs"] = json::array({json::array({0, 27})});
  EXPECT_THROW(io::dataset_from_json(j), ConfigError);
  j["pairs"] = json::array({json::array({0})});
  EXPECT_THROW(io::dataset_from_json(j), ConfigError);
}

TEST(Io, PolicyCheckpointRoundTripIsBitwise) {
  const auto mdp = build_tree(3, 3, true);
  for (const auto& p : {make_tabular(mdp), make_recurrent(mdp, 7, 5, 0.9),
                        make_recurrent(mdp, 8, 4, 0.9, RecurrentInput::action)}) {
    const auto back = io::policy_from_json(json::parse(io::policy_to_json(p).dump()));
    EXPECT_EQ(back.kind, p.kind);
    EXPECT_EQ(back.mdp, p.mdp);
    EXPECT_EQ(back.params, p.params);
    EXPECT_EQ(back.input, p.input);
    EXPECT_EQ(full_distribution(back).log_probs, full_distribution(p).log_probs);
  }
}

TEST(Io, PolicyCheckpointRejectsMismatchedLayout) {
  auto j = io::policy_to_json(make_recurrent(build_tree(3, 3), 1, 4));
  j["mdp"]["D"] = 2;
  EXPECT_THROW(io::policy_from_json(j), ConfigError);
  auto k = io::policy_to_json(make_tabular(build_tree(3, 3)));
  k["values"].erase(0);
  EXPECT_THROW(io::policy_from_json(k), ConfigError);
}

TEST(Io, ConfigRoundTripAndValidation) {
  TrainConfig c;
  c.loss = LossKind::slic;
  c.beta = 0.025;
  c.length_alpha = 0.1;
  c.steps = 300;
  c.snapshot_every = 15;
  c.optimizer.lr = 3e-3;
  c.seed = 99;
  c.dataset = "gold-generated";
  const auto j = io::config_to_json(c);
  EXPECT_EQ(j.at("optimizer").at("name"), "adam");
  const auto back = io::config_from_json(json::parse(j.dump()));
  EXPECT_EQ(io::config_to_json(back), j);
  auto bad = j;
  bad["loss"] = "kto";
  EXPECT_THROW(io::config_from_json(bad), ConfigError);
  bad = j;
  bad["beta"] = -0.1;
  EXPECT_THROW(io::config_from_json(bad), ConfigError);
}

TEST(Io, TraceRoundTripAndRecomputation) {
  const auto data = canonical_dataset();
  const auto gold = make_gold_reward(data.mdp, 5);
  const auto ref = make_recurrent(data.mdp, 3);
  TrainConfig c;
  c.steps = 40;
  c.snapshot_every = 10;
  auto [policy, trace] = run_daa(ref, ref, data, gold, c);
  const auto dir = scratch_dir("trace");
  io::write_file(dir / "policy.json", io::policy_to_json(policy).dump());
  trace.checkpoint = (dir / "policy.json").string();
  std::istringstream in(io::trace_to_jsonl(trace));
  const auto back = io::trace_from_jsonl(in);
  ASSERT_EQ(back.records.size(), trace.records.size());
  EXPECT_EQ(back.checkpoint, trace.checkpoint);
  EXPECT_EQ(io::config_to_json(back.config), io::config_to_json(trace.config));
  for (std::size_t i = 0; i < back.records.size(); ++i) {
    EXPECT_EQ(io::record_to_json(back.records[i]), io::record_to_json(trace.records[i]));
  }
  // Snapshot fields recomputed from the persisted checkpoint.
  const auto reloaded = io::policy_from_json(io::read_json(back.checkpoint));
  const auto m = snapshot(reloaded, ref, data, gold, c.beta);
  EXPECT_EQ(io::metrics_to_json(m), io::metrics_to_json(back.records.back().metrics));
  std::filesystem::remove_all(dir);
}

TEST(Io, TraceRejectsEmptyStream) {
  std::istringstream in("\n\n");
  EXPECT_THROW(io::trace_from_jsonl(in), ConfigError);
}

TEST(Io, FitRoundTrip) {
  ScalingFit f;
  f.alpha = 1.25;
  f.beta_coeff = -0.3;
  f.intercept = 0.5;
  f.rmse = 0.01;
  f.n_points = 12;
  f.with_intercept = true;
  f.x_kind = "sqrt_fwd_kl";
  const auto j = io::fit_to_json(f);
  for (const char* key : {"x_kind", "alpha", "beta_coeff", "intercept", "rmse", "n_points"}) EXPECT_TRUE(j.contains(key));
  EXPECT_EQ(io::fit_to_json(io::fit_from_json(j)), j);
}

TEST(Io, ManifestRoundTripIsLossless) {
  auto m = gold_sweep_manifest();
  m.betas = {0.005, 0.5};
  m.losses = {LossKind::ipo};
  m.input = RecurrentInput::action;
  m.out_dir = "somewhere";
  m.length_alpha = 0.1;
  const auto j = manifest_to_json(m);
  EXPECT_EQ(manifest_to_json(manifest_from_json(json::parse(j.dump()))), j);
  EXPECT_EQ(manifest_to_json(manifest_from_json(manifest_to_json(demo_appendix_manifest()))),
            manifest_to_json(demo_appendix_manifest()));
}

TEST(Io, SweepCsvRoundTrip) {
  std::vector<io::SweepRow> rows{{"dpo", 0.1, 3, 0.05, 0.7, 0.61, 1.0, 0.2, 0.4, -1.5},
                                 {"slic", 0.005, 0, 1.0, 3.25, 0.3, 0.75, 0.0, 0.9, -20.0}};
  std::string text = io::sweep_csv_header();
  for (const auto& r : rows) text += io::sweep_csv_line(r);
  std::istringstream in(text);
  const auto back = io::read_sweep_csv(in);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(io::sweep_csv_line(back[i]), io::sweep_csv_line(rows[i]));
  EXPECT_EQ(io::sweep_csv_header(),
            "loss,beta,seed,step_frac,sqrt_kl,winrate,accuracy,loss_value,ood_mass,fwd_kl_proxy\n");
}

TEST(Io, MalformedSweepCsv) {
  const std::string header = io::sweep_csv_header();
  for (const std::string& bad :
       {std::string(), std::string("loss,beta\n"), header + "dpo,0.1,0,0.5,1,0.5,1,0.2,0.1\n",
        header + "dpo,abc,0,0.5,1,0.5,1,0.2,0.1,0\n", header + "dpo,0.1,0,0.5,1,0.5x,1,0.2,0.1,0\n",
        header + "dpo,0.1,0,0.5,1,0.5,1,0.2,0.1,0,7\n"}) {
    std::istringstream in(bad);
    try {
      io::read_sweep_csv(in);
      FAIL() << "accepted: " << bad;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find("malformed CSV"), std::string::npos);
    }
  }
}

TEST(Io, FilesAndJson) {
  const auto dir = scratch_dir("files");
  io::write_file(dir / "a" / "b.json", "{\"x\": 1}");
  EXPECT_EQ(io::read_json(dir / "a" / "b.json").at("x"), 1);
  io::write_file(dir / "bad.json", "{");
  EXPECT_THROW(io::read_json(dir / "bad.json"), ConfigError);
  EXPECT_THROW(io::read_file(dir / "missing"), ConfigError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace daalab
