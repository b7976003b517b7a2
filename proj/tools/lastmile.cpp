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

// Command-line driver: lastmile <subcommand> --config <path> [--seed N] [--out DIR]

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lastmile/config.hpp"
#include "lastmile/error.hpp"
#include "lastmile/pipeline.hpp"
#include "lastmile/verify.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

lastmile::ExperimentConfig resolve(const Options& o) {
  lastmile::ExperimentConfig cfg =
      o.config.empty() ? lastmile::ExperimentConfig{} : lastmile::load_config(o.config);
  if (o.seed) cfg.set_all_seeds(*o.seed);
  if (o.out) cfg.out_dir = *o.out;
  return cfg;
}

int run_verify() {
  int failed = 0;
  for (const auto& c : lastmile::verify::run_all()) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
    failed += c.passed ? 0 : 1;
  }
  std::cout << (failed ? std::to_string(failed) + " check(s) failed\n" : "all checks passed\n");
  return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Last-mile fine-tuning experiments: reward model, PPO and MLE baselines"};
  app.require_subcommand(1);
  Options opts;

  auto add = [&](const std::string& name, const std::string& help, bool needs_config) {
    auto* sub = app.add_subcommand(name, help);
    auto* c = sub->add_option("--config", opts.config, "experiment config file");
    if (needs_config) c->required()->check(CLI::ExistingFile);
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& s) { opts.seed = s; },
        "override the data, model and training seeds");
    sub->add_option_function<std::string>(
        "--out", [&](const std::string& d) { opts.out = d; }, "run directory");
    return sub;
  };

  add("gen-data", "generate or load the dataset and split it", true);
  add("pretrain", "train the under-trained base model", true);
  add("synth-negatives", "build the reward dataset with synthetic negatives", true);
  add("train-reward", "train the token-level reward model", true);
  add("train-mle", "fine-tune the base model by maximum likelihood", true);
  add("train-ppo", "fine-tune the base model with PPO", true);
  add("evaluate", "decode the held-out split with every model", true);
  add("report", "write the comparison table", true);
  add("all", "run every stage in order", true);
  add("verify", "run gradient checks and oracle suites", false);

  CLI11_PARSE(app, argc, argv);
  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "verify") return run_verify();
    lastmile::pipeline::Run run(resolve(opts), &std::cout);
    if (name == "all")
      run.all();
    else
      run.stage(name);
  } catch (const lastmile::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
