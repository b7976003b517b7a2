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

#ifndef LASTMILE_PIPELINE_HPP_
#define LASTMILE_PIPELINE_HPP_

// Stage orchestration. Every stage reads declared upstream artifacts under the
// run directory, writes its own, and records a manifest with the config hash,
// seeds and SHA-256 of everything it touched.

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <filesystem>
#include <functional>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lastmile/checkpoint.hpp"
#include "lastmile/config.hpp"
#include "lastmile/corpus.hpp"
#include "lastmile/error.hpp"
#include "lastmile/metrics.hpp"
#include "lastmile/mle.hpp"
#include "lastmile/negatives.hpp"
#include "lastmile/ppo.hpp"
#include "lastmile/reward.hpp"
#include "lastmile/seqmodel.hpp"

namespace lastmile::pipeline {

namespace fs = std::filesystem;

inline std::string sha256_hex(const std::string& data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 15];
  }
  return out;
}

// Artifact locations relative to the run directory.
namespace artifact {
inline constexpr const char* kTrain = "data/train.jsonl";
inline constexpr const char* kTest = "data/test.jsonl";
inline constexpr const char* kVocab = "data/vocab.tsv";
inline constexpr const char* kRewardTrain = "data/reward_train.jsonl";
inline constexpr const char* kRewardTest = "data/reward_test.jsonl";
inline constexpr const char* kBase = "models/base.ckpt";
inline constexpr const char* kReward = "models/reward.ckpt";
inline constexpr const char* kMle = "models/mle.ckpt";
inline constexpr const char* kPolicy = "models/policy.ckpt";
inline constexpr const char* kValue = "models/value.ckpt";
inline constexpr const char* kPretrainLog = "logs/pretrain.csv";
inline constexpr const char* kRewardLog = "logs/reward.csv";
inline constexpr const char* kMleLog = "logs/mle.csv";
inline constexpr const char* kPpoLog = "logs/ppo.csv";
inline constexpr const char* kPredictions = "eval/predictions.jsonl";
inline constexpr const char* kSeparation = "eval/reward_separation.csv";
inline constexpr const char* kReportCsv = "report/report.csv";
inline constexpr const char* kReportMd = "report/report.md";
inline constexpr const char* kSummaryCsv = "report/summary.csv";
}  // namespace artifact

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {
      "gen-data", "pretrain", "synth-negatives", "train-reward", "train-mle",
      "train-ppo", "evaluate", "report"};
  return names;
}

inline const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = {"base", "MLE", "RL", "base_cleaned",
                                                 "MLE_cleaned"};
  return names;
}

class Run {
 public:
  explicit Run(ExperimentConfig cfg, std::ostream* log = nullptr)
      : cfg_(std::move(cfg)), root_(cfg_.out_dir), log_(log) {
    cfg_.validate();
  }

  const ExperimentConfig& config() const { return cfg_; }
  fs::path path(const char* rel) const { return root_ / rel; }

  void gen_data() {
    begin("gen-data");
    ExampleSet all;
    if (cfg_.data_source == "synthetic") {
      all = gen_extraction_task(derive_seed(cfg_.seed_data, 0), cfg_.data_n, cfg_.task);
    } else {
      input(cfg_.data_path);
      all = load_examples(cfg_.data_path, cfg_.vocab_budget, cfg_.load_input_cap);
      say("loaded " + std::to_string(all.size()) + " examples, dropped " +
          std::to_string(all.dropped) + " over the input cap");
    }
    auto [train, test] = split(all, cfg_.test_fraction, derive_seed(cfg_.seed_data, 1));
    if (train.empty() || test.empty())
      throw EmptyDatasetError("gen-data: split left an empty partition");
    save_examples(train, out(artifact::kTrain));
    save_examples(test, out(artifact::kTest));
    all.vocab->save(out(artifact::kVocab));
    say("train " + std::to_string(train.size()) + ", test " + std::to_string(test.size()) +
        ", vocab " + std::to_string(all.vocab->size()));
    finish();
  }

  void pretrain() {
    begin("pretrain");
    const ExampleSet train = load_split(artifact::kTrain);
    ModelConfig mc = cfg_.model;
    mc.vocab_size = train.vocab->size();
    mc.head = HeadKind::kLogits;
    const ExampleSet corpus = pretrain_corpus(train);
    std::vector<StepLog> log;
    ModelParams base = lastmile::train_mle(init_params(mc, derive_seed(cfg_.seed_model, 0)),
                                           corpus, cfg_.pretrain_config(), &log);
    save_model(base, out(artifact::kBase), "base");
    output(std::string(artifact::kBase) + ".meta");
    write(artifact::kPretrainLog, step_log_csv(log));
    say("base model: " + std::to_string(log.size()) + " steps, final loss " +
        num(log.empty() ? 0.0 : log.back().loss));
    finish();
  }

  void synth_negatives() {
    begin("synth-negatives");
    const ExampleSet train = load_split(artifact::kTrain);
    const ExampleSet test = load_split(artifact::kTest);
    const auto train_data =
        build_reward_dataset(train, derive_seed(cfg_.seed_data, 10), cfg_.output_cap);
    const auto test_data =
        build_reward_dataset(test, derive_seed(cfg_.seed_data, 11), cfg_.output_cap);
    export_reward_dataset(train_data, out(artifact::kRewardTrain));
    export_reward_dataset(test_data, out(artifact::kRewardTest));
    say("reward data: " + std::to_string(train_data.size()) + " train, " +
        std::to_string(test_data.size()) + " held out");
    finish();
  }

  void train_reward() {
    begin("train-reward");
    const auto vocab = load_vocab();
    const auto data = import_reward_dataset(in(artifact::kRewardTrain, "synth-negatives"), *vocab);
    const ModelParams base = load_role(artifact::kBase, "pretrain");
    std::vector<StepLog> log;
    ModelParams reward =
        lastmile::train_reward(data, with_head(base, HeadKind::kScalar, derive_seed(cfg_.seed_model, 1)),
                               cfg_.reward_config(), &log);
    save_model(reward, out(artifact::kReward), "reward");
    output(std::string(artifact::kReward) + ".meta");
    write(artifact::kRewardLog, step_log_csv(log));
    say("reward model: " + std::to_string(log.size()) + " steps, final loss " +
        num(log.empty() ? 0.0 : log.back().loss));
    finish();
  }

  void train_mle() {
    begin("train-mle");
    const ExampleSet train = load_split(artifact::kTrain);
    std::vector<StepLog> log;
    ModelParams m = lastmile::train_mle(load_role(artifact::kBase, "pretrain"), train,
                                        cfg_.mle_config(), &log);
    save_model(m, out(artifact::kMle), "mle");
    output(std::string(artifact::kMle) + ".meta");
    write(artifact::kMleLog, step_log_csv(log));
    say("MLE model: " + std::to_string(log.size()) + " steps");
    finish();
  }

  void train_ppo() {
    begin("train-ppo");
    const ExampleSet train = load_split(artifact::kTrain);
    const ModelParams base = load_role(artifact::kBase, "pretrain");
    RewardFn fn{load_role(artifact::kReward, "train-reward"), cfg_.length_penalty,
                cfg_.output_cap, cfg_.reward_inclusive};
    ModelParams value = with_head(base, HeadKind::kScalar, derive_seed(cfg_.seed_model, 2));
    PPOResult r = lastmile::train(base, std::move(value), fn, train, cfg_.ppo_config());
    save_model(r.policy, out(artifact::kPolicy), "policy");
    output(std::string(artifact::kPolicy) + ".meta");
    save_model(r.value, out(artifact::kValue), "value");
    output(std::string(artifact::kValue) + ".meta");
    std::string csv = ppo_log_header() + "\n";
    for (const auto& row : r.log) csv += ppo_log_line(row) + "\n";
    write(artifact::kPpoLog, csv);
    say("PPO: " + std::to_string(r.log.size()) + " outer batches");
    finish();
  }

  void evaluate() {
    begin("evaluate");
    const ExampleSet test = load_split(artifact::kTest);
    const ModelParams base = load_role(artifact::kBase, "pretrain");
    const ModelParams mle = load_role(artifact::kMle, "train-mle");
    const ModelParams rl = load_role(artifact::kPolicy, "train-ppo");
    const ModelParams reward = load_role(artifact::kReward, "train-reward");
    const auto vocab = test.vocab;

    std::string preds;
    for (const auto& ex : test.examples) {
      auto decode = [&](const ModelParams& p) {
        return vocab->decode(greedy(p, ex.input_tokens, cfg_.output_cap));
      };
      const std::string b = decode(base), m = decode(mle), r = decode(rl);
      nlohmann::ordered_json j;
      j["id"] = ex.id;
      j["reference"] = ex.output_text;
      j["base"] = b;
      j["MLE"] = m;
      j["RL"] = r;
      j["base_cleaned"] = truncate_after_newline(strip_sure_preamble(b));
      j["MLE_cleaned"] = truncate_after_newline(m);
      preds += j.dump() + "\n";
    }
    write(artifact::kPredictions, preds);

    const auto held_out = import_reward_dataset(in(artifact::kRewardTest, "synth-negatives"), *vocab);
    const RewardSeparation sep = reward_separation(reward, held_out, cfg_.reward_inclusive);
    std::string csv = "class,mean_token_score\npositive," + num(sep.positive_mean) +
                      "\nnegative," + num(sep.negative_mean) + "\n";
    for (NegCategory c : kNegCategories)
      csv += std::string(category_name(c)) + "," +
             num(sep.category_mean[static_cast<std::size_t>(c) - 1]) + "\n";
    write(artifact::kSeparation, csv);
    say("held-out reward gap " + num(sep.gap()));
    finish();
  }

  void report() {
    begin("report");
    const auto preds = read_predictions(in(artifact::kPredictions, "evaluate"));
    ComparisonTable table;
    table.columns = variant_names();
    for (const auto& v : variant_names())
      table.reports.push_back(lastmile::evaluate(preds.at(v), preds.at("reference")));
    write(artifact::kReportCsv, to_csv(table));

    std::string md = "# Comparison on the held-out split\n\n" + to_markdown(table) +
                     "\nMean absolute excess length per pair:\n\n|";
    for (const auto& c : table.columns) md += " " + c + " |";
    md += "\n|";
    for (std::size_t i = 0; i < table.columns.size(); ++i) md += "---:|";
    md += "\n|";
    std::string summary = "variant,mean_abs_excess_length,excess_length,pairs\n";
    for (std::size_t i = 0; i < table.columns.size(); ++i) {
      const auto& rep = table.reports[i];
      md += " " + format_value(rep.mean_abs_excess, 2) + " |";
      summary += table.columns[i] + "," + num(rep.mean_abs_excess) + "," +
                 num(rep.get("excess-length")) + "," + std::to_string(rep.pairs) + "\n";
    }
    md += "\n";
    write(artifact::kReportMd, md);
    write(artifact::kSummaryCsv, summary);
    say("report written to " + path(artifact::kReportMd).string());
    finish();
  }

  void stage(const std::string& name) {
    if (name == "gen-data") return gen_data();
    if (name == "pretrain") return pretrain();
    if (name == "synth-negatives") return synth_negatives();
    if (name == "train-reward") return train_reward();
    if (name == "train-mle") return train_mle();
    if (name == "train-ppo") return train_ppo();
    if (name == "evaluate") return evaluate();
    if (name == "report") return report();
    throw ConfigError("unknown stage '" + name + "'");
  }

  void all() {
    for (const auto& s : stage_names()) stage(s);
  }

  // Reads predictions.jsonl into columns keyed by variant, plus "reference".
  static std::map<std::string, std::vector<std::string>> read_predictions(
      const std::string& file) {
    std::map<std::string, std::vector<std::string>> cols;
    std::istringstream lines(detail::read_file(file));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(lines, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        cols["reference"].push_back(j.at("reference").get<std::string>());
        for (const auto& v : variant_names()) cols[v].push_back(j.at(v).get<std::string>());
      } catch (const nlohmann::json::exception& e) {
        throw MalformedRecordError(lineno, e.what());
      }
    }
    if (cols.empty()) throw EmptyDatasetError("'" + file + "' holds no predictions");
    return cols;
  }

 private:
  static std::string num(double v) {
    std::ostringstream o;
    o.precision(17);
    o << v;
    return o.str();
  }

  static std::string step_log_csv(const std::vector<StepLog>& log) {
    std::string csv = "step,loss,lr\n";
    for (const auto& r : log)
      csv += std::to_string(r.step) + "," + num(r.loss) + "," + num(r.lr) + "\n";
    return csv;
  }

  void say(const std::string& msg) const {
    if (log_ != nullptr) *log_ << "[" << stage_ << "] " << msg << "\n";
  }

  void begin(const std::string& stage) {
    stage_ = stage;
    inputs_.clear();
    outputs_.clear();
  }

  // Full path of an upstream artifact; throws naming its producer if absent.
  std::string in(const char* rel, const std::string& producer) {
    const fs::path p = path(rel);
    if (!fs::exists(p)) throw MissingArtifactError(p.string(), producer);
    inputs_.emplace_back(rel, p);
    return p.string();
  }

  void input(const std::string& external) {
    if (!fs::exists(external)) throw IoError("data file '" + external + "' not found");
    inputs_.emplace_back(external, fs::path(external));
  }

  std::string out(const char* rel) {
    const fs::path p = path(rel);
    fs::create_directories(p.parent_path());
    outputs_.emplace_back(rel, p);
    return p.string();
  }

  void output(const std::string& rel) { outputs_.emplace_back(rel, root_ / rel); }

  void write(const char* rel, const std::string& data) { detail::write_file(out(rel), data); }

  // Fresh generator draws for a synthetic source (so the base model never
  // sees the fine-tuning split), otherwise the training split itself.
  ExampleSet pretrain_corpus(const ExampleSet& train) const {
    if (cfg_.data_source != "synthetic" || cfg_.pretrain_n == 0) return train;
    ExampleSet corpus =
        gen_extraction_task(derive_seed(cfg_.seed_data, 2), cfg_.pretrain_n, cfg_.task);
    const auto a = corpus.vocab->tokens(), b = train.vocab->tokens();
    if (!std::equal(a.begin(), a.end(), b.begin(), b.end()))
      throw ContractError("pretrain: generator vocabulary differs from data/vocab.tsv");
    return corpus;
  }

  std::shared_ptr<const Vocab> load_vocab() {
    return std::make_shared<const Vocab>(Vocab::load(in(artifact::kVocab, "gen-data")));
  }

  ExampleSet load_split(const char* rel) {
    auto vocab = load_vocab();
    return load_examples_with_vocab(in(rel, "gen-data"), std::move(vocab),
                                    std::numeric_limits<std::size_t>::max());
  }

  ModelParams load_role(const char* rel, const std::string& producer) {
    const std::string file = in(rel, producer);
    in_meta(rel, producer);
    return load_model(file).params;
  }

  void in_meta(const char* rel, const std::string& producer) {
    const std::string meta = std::string(rel) + ".meta";
    const fs::path p = root_ / meta;
    if (!fs::exists(p)) throw MissingArtifactError(p.string(), producer);
    inputs_.emplace_back(meta, p);
  }

  void finish() {
    nlohmann::ordered_json m;
    m["stage"] = stage_;
    m["config_sha256"] = sha256_hex(canonical_text(cfg_));
    m["seeds"] = {{"data", cfg_.seed_data}, {"model", cfg_.seed_model},
                  {"train", cfg_.seed_train}};
    auto hashes = [](const std::vector<std::pair<std::string, fs::path>>& files) {
      nlohmann::ordered_json j = nlohmann::ordered_json::object();
      for (const auto& [name, p] : files) j[name] = sha256_hex(detail::read_file(p.string()));
      return j;
    };
    m["inputs"] = hashes(inputs_);
    m["outputs"] = hashes(outputs_);
    const fs::path mp = root_ / "manifests" / (stage_ + ".json");
    fs::create_directories(mp.parent_path());
    detail::write_file(mp.string(), m.dump(2) + "\n");
  }

  ExperimentConfig cfg_;
  fs::path root_;
  std::ostream* log_;
  std::string stage_;
  std::vector<std::pair<std::string, fs::path>> inputs_, outputs_;
};

}  // namespace lastmile::pipeline

#endif  // LASTMILE_PIPELINE_HPP_
