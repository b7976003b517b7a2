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

#ifndef LASTMILE_CONFIG_HPP_
#define LASTMILE_CONFIG_HPP_

// Experiment configuration in a line-oriented "key = value" format. Blank
// lines and text after '#' are ignored. Unknown keys are errors.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lastmile/corpus.hpp"
#include "lastmile/error.hpp"
#include "lastmile/mle.hpp"
#include "lastmile/ppo.hpp"
#include "lastmile/reward.hpp"
#include "lastmile/seqmodel.hpp"

namespace lastmile {

struct ExperimentConfig {
  std::string data_source = "synthetic";  // synthetic | jsonl
  std::string data_path;
  std::size_t data_n = 2000;
  double test_fraction = 0.2;
  std::size_t vocab_budget = 5000;
  std::size_t load_input_cap = kDefaultLoadInputCap;
  TaskConfig task;

  std::uint64_t seed_data = 0;
  std::uint64_t seed_model = 0;
  std::uint64_t seed_train = 0;

  ModelConfig model{.init_std = 0.1};  // vocab_size is filled in from the data
  // Base-model pretraining draws its own examples from the generator (when
  // the source is synthetic) and stops early, after pretrain.max_steps.
  std::size_t pretrain_n = 20000;
  MLEConfig pretrain{.lr = 1e-3, .max_steps = 2000};
  RewardTrainConfig reward{.batch_size = 14};
  MLEConfig mle{.lr = 3e-4, .batch_size = 7};
  PPOConfig ppo;

  std::size_t output_cap = kDefaultOutputCap;
  double length_penalty = kLengthPenalty;
  bool reward_inclusive = true;
  unsigned threads = 1;
  std::string out_dir = "run";

  void set_all_seeds(std::uint64_t s) {
    seed_data = s;
    seed_model = s;
    seed_train = s;
  }

  // Stage configs with the shared fields (seeds, caps, threads) applied.
  MLEConfig pretrain_config() const {
    MLEConfig c = pretrain;
    c.seed = derive_seed(seed_train, 1);
    c.threads = threads;
    return c;
  }
  RewardTrainConfig reward_config() const {
    RewardTrainConfig c = reward;
    c.seed = derive_seed(seed_train, 2);
    c.inclusive = reward_inclusive;
    c.threads = threads;
    return c;
  }
  MLEConfig mle_config() const {
    MLEConfig c = mle;
    c.seed = derive_seed(seed_train, 3);
    c.threads = threads;
    return c;
  }
  PPOConfig ppo_config() const {
    PPOConfig c = ppo;
    c.seed = derive_seed(seed_train, 4);
    c.output_cap = output_cap;
    c.threads = threads;
    return c;
  }

  void validate() const {
    if (data_source != "synthetic" && data_source != "jsonl")
      throw ConfigError("data.source must be 'synthetic' or 'jsonl'");
    if (data_source == "jsonl" && data_path.empty())
      throw ConfigError("data.path is required when data.source = jsonl");
    if (data_source == "synthetic") task.validate();
    if (!(test_fraction > 0 && test_fraction < 1))
      throw ConfigError("data.test_fraction must lie in (0, 1)");
    const std::size_t cap = data_source == "synthetic" ? task.input_cap : load_input_cap;
    if (model.max_seq < cap + output_cap)
      throw ConfigError("model.max_seq " + std::to_string(model.max_seq) +
                        " is below input cap + output cap (" +
                        std::to_string(cap + output_cap) + ")");
    pretrain.validate();
    reward.validate();
    mle.validate();
    ppo_config().validate();
    if (length_penalty > 0) throw ConfigError("reward.length_penalty must be <= 0");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("key '" + key + "': cannot parse '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

template <class T>
Setter num(T ExperimentConfig::*field) {
  return [field](ExperimentConfig& c, const std::string& k, const std::string& v) {
    c.*field = parse_number<T>(k, v);
  };
}

template <class S, class T>
Setter nested(S ExperimentConfig::*outer, T S::*field) {
  return [outer, field](ExperimentConfig& c, const std::string& k, const std::string& v) {
    if constexpr (std::is_same_v<T, bool>)
      (c.*outer).*field = parse_bool(k, v);
    else
      (c.*outer).*field = parse_number<T>(k, v);
  };
}

inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"data.source", [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.data_source = v;
       }},
      {"data.path", [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.data_path = v;
       }},
      {"data.n", num(&ExperimentConfig::data_n)},
      {"data.test_fraction", num(&ExperimentConfig::test_fraction)},
      {"data.vocab_budget", num(&ExperimentConfig::vocab_budget)},
      {"data.load_input_cap", num(&ExperimentConfig::load_input_cap)},
      {"task.alphabet_size", nested(&ExperimentConfig::task, &TaskConfig::alphabet_size)},
      {"task.input_min", nested(&ExperimentConfig::task, &TaskConfig::input_min)},
      {"task.input_max", nested(&ExperimentConfig::task, &TaskConfig::input_max)},
      {"task.marked_min", nested(&ExperimentConfig::task, &TaskConfig::marked_min)},
      {"task.marked_max", nested(&ExperimentConfig::task, &TaskConfig::marked_max)},
      {"task.input_cap", nested(&ExperimentConfig::task, &TaskConfig::input_cap)},
      {"seed.data", num(&ExperimentConfig::seed_data)},
      {"seed.model", num(&ExperimentConfig::seed_model)},
      {"seed.train", num(&ExperimentConfig::seed_train)},
      {"model.d_model", nested(&ExperimentConfig::model, &ModelConfig::d_model)},
      {"model.layers", nested(&ExperimentConfig::model, &ModelConfig::layers)},
      {"model.heads", nested(&ExperimentConfig::model, &ModelConfig::heads)},
      {"model.ff", nested(&ExperimentConfig::model, &ModelConfig::ff)},
      {"model.max_seq", nested(&ExperimentConfig::model, &ModelConfig::max_seq)},
      {"model.init_std", nested(&ExperimentConfig::model, &ModelConfig::init_std)},
      {"pretrain.n", num(&ExperimentConfig::pretrain_n)},
      {"pretrain.lr", nested(&ExperimentConfig::pretrain, &MLEConfig::lr)},
      {"pretrain.steps", nested(&ExperimentConfig::pretrain, &MLEConfig::max_steps)},
      {"pretrain.batch_size", nested(&ExperimentConfig::pretrain, &MLEConfig::batch_size)},
      {"reward.lr", nested(&ExperimentConfig::reward, &RewardTrainConfig::lr)},
      {"reward.epochs", nested(&ExperimentConfig::reward, &RewardTrainConfig::epochs)},
      {"reward.batch_size", nested(&ExperimentConfig::reward, &RewardTrainConfig::batch_size)},
      {"reward.length_penalty", num(&ExperimentConfig::length_penalty)},
      {"reward.inclusive", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.reward_inclusive = parse_bool(k, v);
       }},
      {"mle.lr", nested(&ExperimentConfig::mle, &MLEConfig::lr)},
      {"mle.epochs", nested(&ExperimentConfig::mle, &MLEConfig::epochs)},
      {"mle.batch_size", nested(&ExperimentConfig::mle, &MLEConfig::batch_size)},
      {"ppo.lr", nested(&ExperimentConfig::ppo, &PPOConfig::lr)},
      {"ppo.epochs", nested(&ExperimentConfig::ppo, &PPOConfig::epochs)},
      {"ppo.batch_size", nested(&ExperimentConfig::ppo, &PPOConfig::batch_size)},
      {"ppo.gamma", nested(&ExperimentConfig::ppo, &PPOConfig::gamma)},
      {"ppo.lambda", nested(&ExperimentConfig::ppo, &PPOConfig::lambda)},
      {"ppo.clip_eps", nested(&ExperimentConfig::ppo, &PPOConfig::clip_eps)},
      {"ppo.temperature", nested(&ExperimentConfig::ppo, &PPOConfig::temperature)},
      {"ppo.normalize_advantages",
       nested(&ExperimentConfig::ppo, &PPOConfig::normalize_advantages)},
      {"output_cap", num(&ExperimentConfig::output_cap)},
      {"threads", num(&ExperimentConfig::threads)},
      {"out_dir", [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.out_dir = v;
       }},
  };
  return table;
}

}  // namespace detail

inline void apply_setting(ExperimentConfig& cfg, const std::string& key,
                          const std::string& value) {
  const auto& table = detail::setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown key '" + key + "'");
  it->second(cfg, key, value);
}

inline ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    try {
      apply_setting(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path + "'");
  return parse_config(in);
}

// Canonical text of every setting; hashed into run manifests.
inline std::string canonical_text(const ExperimentConfig& c) {
  std::ostringstream o;
  o.precision(17);
  o << "data.source = " << c.data_source << "\n"
    << "data.path = " << c.data_path << "\n"
    << "data.n = " << c.data_n << "\n"
    << "data.test_fraction = " << c.test_fraction << "\n"
    << "data.vocab_budget = " << c.vocab_budget << "\n"
    << "data.load_input_cap = " << c.load_input_cap << "\n"
    << "task.alphabet_size = " << c.task.alphabet_size << "\n"
    << "task.input_min = " << c.task.input_min << "\n"
    << "task.input_max = " << c.task.input_max << "\n"
    << "task.marked_min = " << c.task.marked_min << "\n"
    << "task.marked_max = " << c.task.marked_max << "\n"
    << "task.input_cap = " << c.task.input_cap << "\n"
    << "seed.data = " << c.seed_data << "\n"
    << "seed.model = " << c.seed_model << "\n"
    << "seed.train = " << c.seed_train << "\n"
    << "model.d_model = " << c.model.d_model << "\n"
    << "model.layers = " << c.model.layers << "\n"
    << "model.heads = " << c.model.heads << "\n"
    << "model.ff = " << c.model.ff << "\n"
    << "model.max_seq = " << c.model.max_seq << "\n"
    << "model.init_std = " << c.model.init_std << "\n"
    << "pretrain.n = " << c.pretrain_n << "\n"
    << "pretrain.lr = " << c.pretrain.lr << "\n"
    << "pretrain.steps = " << c.pretrain.max_steps << "\n"
    << "pretrain.batch_size = " << c.pretrain.batch_size << "\n"
    << "reward.lr = " << c.reward.lr << "\n"
    << "reward.epochs = " << c.reward.epochs << "\n"
    << "reward.batch_size = " << c.reward.batch_size << "\n"
    << "reward.length_penalty = " << c.length_penalty << "\n"
    << "reward.inclusive = " << (c.reward_inclusive ? "true" : "false") << "\n"
    << "mle.lr = " << c.mle.lr << "\n"
    << "mle.epochs = " << c.mle.epochs << "\n"
    << "mle.batch_size = " << c.mle.batch_size << "\n"
    << "ppo.lr = " << c.ppo.lr << "\n"
    << "ppo.epochs = " << c.ppo.epochs << "\n"
    << "ppo.batch_size = " << c.ppo.batch_size << "\n"
    << "ppo.gamma = " << c.ppo.gamma << "\n"
    << "ppo.lambda = " << c.ppo.lambda << "\n"
    << "ppo.clip_eps = " << c.ppo.clip_eps << "\n"
    << "ppo.temperature = " << c.ppo.temperature << "\n"
    << "ppo.normalize_advantages = " << (c.ppo.normalize_advantages ? "true" : "false") << "\n"
    << "output_cap = " << c.output_cap << "\n";
  return o.str();
}

}  // namespace lastmile

#endif  // LASTMILE_CONFIG_HPP_
