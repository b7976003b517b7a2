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

#ifndef LASTMILE_PPO_HPP_
#define LASTMILE_PPO_HPP_

// Proximal policy optimization over token sequences: hybrid rollouts (policy
// samples on even outer batches, ground truth on odd ones), generalized
// advantage estimation, the clipped surrogate, and value regression. One
// gradient step per outer batch.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lastmile/autodiff.hpp"
#include "lastmile/corpus.hpp"
#include "lastmile/error.hpp"
#include "lastmile/gradients.hpp"
#include "lastmile/optim.hpp"
#include "lastmile/reward.hpp"
#include "lastmile/seeding.hpp"
#include "lastmile/seqmodel.hpp"

namespace lastmile {

enum class RolloutMode { kSampled, kGroundTruth };

inline std::string mode_name(RolloutMode m) {
  return m == RolloutMode::kSampled ? "sampled" : "ground_truth";
}

struct PPOConfig {
  double gamma = 0.99999;
  double lambda = 0.95;
  double clip_eps = 0.2;
  std::size_t batch_size = 7;
  std::size_t updates_per_batch = 1;
  // Shared by the policy and value optimizers.
  double lr = 3e-4;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  std::size_t output_cap = kDefaultOutputCap;
  double temperature = 1.0;
  bool normalize_advantages = false;
  unsigned threads = 1;
  AdamWConfig adam;

  void validate() const {
    if (!(lambda > 0 && lambda <= 1)) throw ConfigError("ppo: lambda must lie in (0, 1]");
    if (!(gamma > 0 && gamma <= 1)) throw ConfigError("ppo: gamma must lie in (0, 1]");
    if (!(clip_eps > 0)) throw ConfigError("ppo: clip epsilon must be positive");
    if (batch_size == 0) throw ConfigError("ppo: batch_size must be >= 1");
    if (updates_per_batch != 1)
      throw ConfigError("ppo: exactly one update per outer batch is supported");
    if (epochs == 0) throw ConfigError("ppo: epochs must be >= 1");
    if (!(lr > 0)) throw ConfigError("ppo: learning rate must be positive");
    if (output_cap == 0) throw ConfigError("ppo: output_cap must be >= 1");
    if (temperature < 0) throw ConfigError("ppo: temperature must be >= 0");
  }
};

// rewards[t] is r_{t+1}, the reward for emitting actions[t] from state s_t.
// values has one more entry than rewards: V(s_0) .. V(s_T).
struct Trajectory {
  std::size_t example_id = 0;
  TokenSeq input;
  TokenSeq actions;
  std::size_t gt_len = 0;
  std::vector<double> old_log_probs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<double> advantages;
  std::vector<double> value_targets;
  RolloutMode source = RolloutMode::kSampled;

  std::size_t length() const { return actions.size(); }
};

inline std::string describe(const Trajectory& t) {
  std::ostringstream out;
  out.precision(17);
  auto list = [&](const char* name, const auto& xs) {
    out << "  " << name << ":";
    for (const auto& x : xs) out << ' ' << x;
    out << '\n';
  };
  out << "trajectory example=" << t.example_id << " source=" << mode_name(t.source)
      << " T=" << t.length() << " gt_len=" << t.gt_len << '\n';
  list("input", t.input);
  list("actions", t.actions);
  list("old_log_probs", t.old_log_probs);
  list("rewards", t.rewards);
  list("values", t.values);
  list("advantages", t.advantages);
  list("value_targets", t.value_targets);
  return out.str();
}

// A_t = delta_t + gamma * lambda * A_{t+1},
// delta_t = rewards[t] + gamma * values[t+1] - values[t].
inline std::vector<double> gae(std::span<const double> rewards,
                               std::span<const double> values, double gamma,
                               double lambda) {
  if (values.size() != rewards.size() + 1)
    throw ContractError("gae: need |values| == |rewards| + 1");
  std::vector<double> adv(rewards.size());
  double next = 0;
  for (std::size_t k = rewards.size(); k-- > 0;) {
    const double delta = rewards[k] + gamma * values[k + 1] - values[k];
    next = delta + gamma * lambda * next;
    adv[k] = next;
  }
  return adv;
}

// Discounted reward-to-go for s_0 .. s_{T-1}, plus 0 for the terminal s_T.
inline std::vector<double> value_targets(std::span<const double> rewards, double gamma) {
  std::vector<double> out(rewards.size() + 1, 0.0);
  for (std::size_t k = rewards.size(); k-- > 0;)
    out[k] = rewards[k] + gamma * out[k + 1];
  return out;
}

// mean_t min(w_t A_t, clip(w_t, 1-eps, 1+eps) A_t), w_t = exp(new_t - old_t).
inline Tensor ppo_objective(const Tensor& logp_new, std::span<const double> logp_old,
                            std::span<const double> advantages, double eps) {
  const std::size_t n = logp_new.size();
  if (logp_old.size() != n || advantages.size() != n || logp_new.cols() != 1)
    throw ContractError("ppo_objective: lengths differ");
  if (n == 0) throw ContractError("ppo_objective: empty trajectory");
  if (!(eps > 0)) throw ConfigError("ppo_objective: eps must be positive");
  Tensor old = Tensor::from_values(n, 1, {logp_old.begin(), logp_old.end()});
  Tensor adv = Tensor::from_values(n, 1, {advantages.begin(), advantages.end()});
  Tensor ratio = ad::exp(ad::sub(logp_new, old));
  for (double w : ratio.values())
    if (!std::isfinite(w)) throw NumericError("ppo_objective: non-finite ratio");
  Tensor unclipped = ad::mul(ratio, adv);
  Tensor clipped = ad::mul(ad::clamp(ratio, 1.0 - eps, 1.0 + eps), adv);
  return ad::mean(ad::minimum(unclipped, clipped));
}

// Mean squared error over states s_0 .. s_T.
inline Tensor value_loss(const Tensor& predicted, std::span<const double> targets) {
  if (predicted.size() != targets.size() || predicted.cols() != 1)
    throw ContractError("value_loss: lengths differ");
  Tensor t = Tensor::from_values(targets.size(), 1, {targets.begin(), targets.end()});
  Tensor diff = ad::sub(predicted, t);
  return ad::mean(ad::mul(diff, diff));
}

// V(s_0) .. V(s_T) as a [T+1,1] tensor; s_t is the prompt plus the first t
// actions, scored at its last token.
inline Tensor state_values(const ModelParams& value, std::span<const TokenId> prompt,
                           std::span<const TokenId> actions) {
  const TokenSeq seq = concat_tokens(prompt, actions);
  Tensor all = forward_scalar(value, seq);
  return ad::slice_rows(all, prompt.size() - 1, seq.size());
}

inline std::vector<double> to_vector(const Tensor& t) {
  return {t.values().begin(), t.values().end()};
}

// Collects one trajectory per example. Old log-probabilities come from the
// current policy, so the first update starts at ratio 1.
inline std::vector<Trajectory> rollout(const ModelParams& policy, const ModelParams& value,
                                       const RewardFn& fn, std::span<const Example> batch,
                                       RolloutMode mode, const PPOConfig& cfg,
                                       std::uint64_t seed) {
  if (batch.empty()) throw ContractError("rollout: empty batch");
  if (policy.config.head != HeadKind::kLogits)
    throw ConfigError("rollout: policy must have a logits head");
  if (value.config.head != HeadKind::kScalar)
    throw ConfigError("rollout: value network must have a scalar head");
  ad::NoGradScope<Real> no_grad;
  std::vector<Trajectory> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Example& ex = batch[i];
    Trajectory t;
    t.example_id = ex.id;
    t.input = ex.input_tokens;
    t.gt_len = ex.output_tokens.size();
    t.source = mode;
    t.actions = mode == RolloutMode::kGroundTruth
                    ? ex.output_tokens
                    : sample(policy, ex.input_tokens, cfg.output_cap, cfg.temperature,
                             derive_seed(seed, i));
    t.old_log_probs = to_vector(action_log_probs(policy, t.input, t.actions));
    t.rewards = apply_length_penalty(token_rewards(fn, t.input, t.actions),
                                     t.actions.size(), t.gt_len, fn.length_penalty);
    t.values = to_vector(state_values(value, t.input, t.actions));
    t.advantages = gae(t.rewards, t.values, cfg.gamma, cfg.lambda);
    t.value_targets = value_targets(t.rewards, cfg.gamma);
    out.push_back(std::move(t));
  }
  return out;
}

struct PPOLogRow {
  std::size_t batch = 0;
  RolloutMode mode = RolloutMode::kSampled;
  double mean_reward = 0;
  double mean_advantage = 0;
  double policy_objective = 0;
  double value_loss = 0;
  double lr = 0;
  double mean_length = 0;
  // max |logp_new - logp_old| over the batch at the gradient step.
  double max_logp_drift = 0;
  // Clipped and unclipped surrogate terms identical for every token.
  bool branches_equal = true;
};

inline std::string ppo_log_header() {
  return "batch,mode,mean_reward,mean_advantage,policy_objective,value_loss,lr,"
         "mean_length,max_logp_drift,branches_equal";
}

inline std::string ppo_log_line(const PPOLogRow& r) {
  std::ostringstream out;
  out.precision(17);
  out << r.batch << ',' << mode_name(r.mode) << ',' << r.mean_reward << ','
      << r.mean_advantage << ',' << r.policy_objective << ',' << r.value_loss << ','
      << r.lr << ',' << r.mean_length << ',' << r.max_logp_drift << ','
      << (r.branches_equal ? 1 : 0);
  return out.str();
}

struct PPOResult {
  ModelParams policy;
  ModelParams value;
  std::vector<PPOLogRow> log;
};

inline void normalize(std::vector<Trajectory>& trajs) {
  double sum = 0, sq = 0;
  std::size_t n = 0;
  for (const auto& t : trajs)
    for (double a : t.advantages) {
      sum += a;
      sq += a * a;
      ++n;
    }
  const double mean = sum / static_cast<double>(n);
  const double var = std::max(0.0, sq / static_cast<double>(n) - mean * mean);
  const double inv = 1.0 / (std::sqrt(var) + 1e-8);
  for (auto& t : trajs)
    for (double& a : t.advantages) a = (a - mean) * inv;
}

// One epoch (per configured epoch) of outer batches. Even batches roll out
// policy samples, odd batches ground truth. Each batch makes one AdamW step
// ascending the surrogate on the policy and one descending the value loss.
inline PPOResult train(ModelParams policy, ModelParams value, const RewardFn& fn,
                       const ExampleSet& data, const PPOConfig& cfg) {
  cfg.validate();
  fn.validate();
  if (data.empty()) throw ContractError("ppo train: empty dataset");
  const std::size_t per_epoch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
  CosineSchedule schedule(cfg.lr, per_epoch * cfg.epochs);
  AdamW policy_opt(policy, cfg.adam);
  AdamW value_opt(value, cfg.adam);
  PPOResult result;
  std::vector<std::size_t> order(data.size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(cfg.seed, 1000 + epoch));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(lo + cfg.batch_size, data.size());
      std::vector<Example> batch;
      for (std::size_t i = lo; i < hi; ++i) batch.push_back(data.examples[order[i]]);
      const RolloutMode mode = b % 2 == 0 ? RolloutMode::kSampled : RolloutMode::kGroundTruth;
      auto trajs = rollout(policy, value, fn, batch, mode, cfg, derive_seed(cfg.seed, step));
      if (cfg.normalize_advantages) normalize(trajs);

      std::size_t tokens = 0, states = 0;
      PPOLogRow row;
      row.batch = step;
      row.mode = mode;
      for (const auto& t : trajs) {
        tokens += t.length();
        states += t.length() + 1;
        for (double r : t.rewards) row.mean_reward += r;
        for (double a : t.advantages) row.mean_advantage += a;
        row.mean_length += static_cast<double>(t.length());
      }
      row.mean_reward /= static_cast<double>(tokens);
      row.mean_advantage /= static_cast<double>(tokens);
      row.mean_length /= static_cast<double>(trajs.size());

      std::vector<double> drift(trajs.size(), 0.0);
      std::vector<std::uint8_t> equal(trajs.size(), 1);
      const Real policy_loss = accumulate_gradients(
          policy, trajs.size(),
          [&](const ModelParams& p, std::size_t i) {
            const Trajectory& t = trajs[i];
            Tensor logp = action_log_probs(p, t.input, t.actions);
            for (std::size_t k = 0; k < t.length(); ++k) {
              const double dlp = logp.values()[k] - t.old_log_probs[k];
              drift[i] = std::max(drift[i], std::abs(dlp));
              const double w = std::exp(dlp);
              const double a = t.advantages[k];
              const double clipped = std::clamp(w, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
              if (w * a != clipped * a) equal[i] = 0;
            }
            Tensor obj = ppo_objective(logp, t.old_log_probs, t.advantages, cfg.clip_eps);
            if (!std::isfinite(obj.item()))
              throw NumericError("ppo: non-finite policy objective\n" + describe(t));
            return ad::scale(obj, -static_cast<Real>(t.length()) / static_cast<Real>(tokens));
          },
          cfg.threads);
      const Real v_loss = accumulate_gradients(
          value, trajs.size(),
          [&](const ModelParams& v, std::size_t i) {
            const Trajectory& t = trajs[i];
            Tensor loss = value_loss(state_values(v, t.input, t.actions), t.value_targets);
            if (!std::isfinite(loss.item()))
              throw NumericError("ppo: non-finite value loss\n" + describe(t));
            return ad::scale(loss, static_cast<Real>(t.length() + 1) / static_cast<Real>(states));
          },
          cfg.threads);
      row.policy_objective = -policy_loss;
      row.value_loss = v_loss;
      row.max_logp_drift = *std::max_element(drift.begin(), drift.end());
      row.branches_equal = std::all_of(equal.begin(), equal.end(), [](auto e) { return e != 0; });
      row.lr = schedule(step);
      policy_opt.step(row.lr);
      value_opt.step(row.lr);
      result.log.push_back(row);
    }
  }
  result.policy = std::move(policy);
  result.value = std::move(value);
  return result;
}

}  // namespace lastmile

#endif  // LASTMILE_PPO_HPP_
