//
// Copyright 2026 The lastmile Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include "lastmile/pipeline.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace {

using namespace lastmile;
namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig tiny_config(const std::string& dir) {
  ExperimentConfig c;
  c.data_n = 30;
  c.task.alphabet_size = 8;
  c.task.input_min = 6;
  c.task.input_max = 10;
  c.task.marked_min = 1;
  c.task.marked_max = 3;
  c.task.input_cap = 16;
  c.model.d_model = 8;
  c.model.layers = 1;
  c.model.heads = 2;
  c.model.ff = 16;
  c.model.max_seq = 26;
  c.output_cap = 10;
  c.pretrain.max_steps = 3;
  c.pretrain_n = 50;
  c.out_dir = (fs::path(::testing::TempDir()) / dir).string();
  fs::remove_all(c.out_dir);
  return c;
}

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(pipeline::sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(pipeline::sha256_hex(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Pipeline, MissingArtifactNamesProducer) {
  pipeline::Run run(tiny_config("missing"));
  try {
    run.stage("pretrain");
    FAIL();
  } catch (const MissingArtifactError& e) {
    EXPECT_NE(std::string(e.what()).find("gen-data"), std::string::npos) << e.what();
  }
  run.stage("gen-data");
  try {
    run.stage("train-reward");
    FAIL();
  } catch (const MissingArtifactError& e) {
    EXPECT_NE(std::string(e.what()).find("synth-negatives"), std::string::npos) << e.what();
  }
  try {
    run.stage("report");
    FAIL();
  } catch (const MissingArtifactError& e) {
    EXPECT_NE(std::string(e.what()).find("evaluate"), std::string::npos) << e.what();
  }
  EXPECT_THROW(run.stage("nonsense"), ConfigError);
}

TEST(Pipeline, ExternalDataMissingIsIoError) {
  ExperimentConfig c = tiny_config("external");
  c.data_source = "jsonl";
  c.data_path = "/nonexistent/data.jsonl";
  c.load_input_cap = 16;
  pipeline::Run run(c);
  EXPECT_THROW(run.stage("gen-data"), IoError);
}

TEST(Pipeline, FullRunWritesEveryArtifactAndReportShape) {
  ExperimentConfig c = tiny_config("full");
  pipeline::Run run(c);
  run.all();
  namespace a = pipeline::artifact;
  for (const char* rel : {a::kTrain, a::kTest, a::kVocab, a::kRewardTrain, a::kRewardTest,
                          a::kBase, a::kReward, a::kMle, a::kPolicy, a::kValue,
                          a::kPretrainLog, a::kRewardLog, a::kMleLog, a::kPpoLog,
                          a::kPredictions, a::kSeparation, a::kReportCsv, a::kReportMd,
                          a::kSummaryCsv})
    EXPECT_TRUE(fs::exists(run.path(rel))) << rel;
  for (const auto& s : pipeline::stage_names())
    EXPECT_TRUE(fs::exists(fs::path(c.out_dir) / "manifests" / (s + ".json"))) << s;

  const std::string csv = slurp(run.path(a::kReportCsv));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "metric,base,MLE,RL,base_cleaned,MLE_cleaned");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 20);

  const auto preds = pipeline::Run::read_predictions(run.path(a::kPredictions).string());
  EXPECT_EQ(preds.at("reference").size(), 6u);
  for (std::size_t i = 0; i < preds.at("MLE").size(); ++i)
    EXPECT_EQ(preds.at("MLE_cleaned")[i], truncate_after_newline(preds.at("MLE")[i]));

  // One PPO log row per outer batch of 7 over the 24 training examples.
  const std::string ppo = slurp(run.path(a::kPpoLog));
  EXPECT_EQ(std::count(ppo.begin(), ppo.end(), '\n'), 1 + 4);
}

TEST(Pipeline, StageRerunIsByteIdentical) {
  ExperimentConfig c = tiny_config("rerun");
  pipeline::Run run(c);
  for (const char* s : {"gen-data", "pretrain", "synth-negatives", "train-reward"})
    run.stage(s);
  const std::string ckpt = slurp(run.path(pipeline::artifact::kReward));
  const std::string manifest = slurp(fs::path(c.out_dir) / "manifests" / "train-reward.json");
  run.stage("train-reward");
  EXPECT_EQ(slurp(run.path(pipeline::artifact::kReward)), ckpt);
  EXPECT_EQ(slurp(fs::path(c.out_dir) / "manifests" / "train-reward.json"), manifest);
}

TEST(Pipeline, ManifestRecordsConfigHashAndInputs) {
  ExperimentConfig c = tiny_config("manifest");
  pipeline::Run run(c);
  run.stage("gen-data");
  run.stage("pretrain");
  const auto j = nlohmann::json::parse(slurp(fs::path(c.out_dir) / "manifests" / "pretrain.json"));
  EXPECT_EQ(j.at("stage"), "pretrain");
  EXPECT_EQ(j.at("config_sha256"), pipeline::sha256_hex(canonical_text(c)));
  const std::string train_hash = pipeline::sha256_hex(slurp(run.path(pipeline::artifact::kTrain)));
  EXPECT_EQ(j.at("inputs").at(pipeline::artifact::kTrain), train_hash);
  EXPECT_TRUE(j.at("outputs").contains(pipeline::artifact::kBase));
}

TEST(Pipeline, SeedChangesData) {
  ExperimentConfig a = tiny_config("seed_a"), b = tiny_config("seed_b");
  b.set_all_seeds(1);
  pipeline::Run ra(a), rb(b);
  ra.stage("gen-data");
  rb.stage("gen-data");
  EXPECT_NE(slurp(ra.path(pipeline::artifact::kTrain)), slurp(rb.path(pipeline::artifact::kTrain)));
}

}  // namespace
