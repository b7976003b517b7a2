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

#ifndef LASTMILE_REWARD_HPP_
#define LASTMILE_REWARD_HPP_

// Token-level reward model: a scalar-head sequence model regressed onto +1
// (positive outputs) / 0 (synthetic negatives), and the per-token reward
// function handed to policy optimization.

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "lastmile/autodiff.hpp"
#include "lastmile/error.hpp"
#include "lastmile/gradients.hpp"
#include "lastmile/negatives.hpp"
#include "lastmile/optim.hpp"
#include "lastmile/seeding.hpp"
#include "lastmile/seqmodel.hpp"

namespace lastmile {

inline constexpr double kLengthPenalty = -2.5;

struct RewardTrainConfig {
  double lr = 3e-4;
  std::size_t epochs = 1;
  std::size_t batch_size = 14;
  std::uint64_t seed = 0;
  // Score output token t at its own position (true) or at the position
  // before it (false).
  bool inclusive = true;
  unsigned threads = 1;
  AdamWConfig adam;

  void validate() const {
    if (!(lr > 0)) throw ConfigError("reward: learning rate must be positive");
    if (epochs == 0) throw ConfigError("reward: epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("reward: batch_size must be >= 1");
  }
};

struct StepLog {
  std::size_t step = 0;
  double loss = 0;
  double lr = 0;
};

// Scalar-head positions that score each output token.
inline std::pair<std::size_t, std::size_t> output_score_rows(std::size_t prompt_len,
                                                             std::size_t out_len,
                                                             bool inclusive) {
  const std::size_t first = inclusive ? prompt_len : prompt_len - 1;
  return {first, first + out_len};
}

// Per-output-token scalar predictions as a [T,1] tensor (taped when a tape is
// active).
inline Tensor score_output(const ModelParams& reward, std::span<const TokenId> input,
                           std::span<const TokenId> output, bool inclusive = true) {
  if (output.empty()) throw ContractError("score_output: empty output");
  if (input.empty()) throw ContractError("score_output: empty input");
  const TokenSeq seq =
      inclusive ? concat_tokens(input, output)
                : concat_tokens(input, output.first(output.size() - 1));
  Tensor all = forward_scalar(reward, seq);
  const auto [lo, hi] = output_score_rows(input.size(), output.size(), inclusive);
  return ad::slice_rows(all, lo, hi);
}

// sum_t weight * (prediction_t - target_t)^2 for one datum.
inline Tensor reward_datum_loss(const ModelParams& reward, const RewardDatum& d,
                                bool inclusive = true) {
  if (d.token_targets.size() != d.example.output_tokens.size())
    throw ContractError("reward datum: targets do not match output length");
  Tensor pred = score_output(reward, d.example.input_tokens, d.example.output_tokens,
                             inclusive);
  Tensor target = Tensor::from_values(d.token_targets.size(), 1, d.token_targets);
  Tensor diff = ad::sub(pred, target);
  return ad::scale(ad::sum(ad::mul(diff, diff)), d.weight);
}

// Batch loss: weighted squared error summed over the batch's output tokens,
// divided by the batch's (unweighted) output token count.
inline double reward_batch_loss(const ModelParams& reward,
                                std::span<const RewardDatum> batch,
                                bool inclusive = true) {
  ad::NoGradScope<Real> no_grad;
  double total = 0;
  std::size_t tokens = 0;
  for (const auto& d : batch) {
    total += reward_datum_loss(reward, d, inclusive).item();
    tokens += d.example.output_tokens.size();
  }
  return total / static_cast<double>(tokens);
}

// One pass (per epoch) of AdamW with a cosine schedule over the weighted
// squared-error objective. Only output-token positions enter the loss.
inline ModelParams train_reward(const std::vector<RewardDatum>& data, ModelParams init,
                                const RewardTrainConfig& cfg,
                                std::vector<StepLog>* log = nullptr) {
  cfg.validate();
  if (init.config.head != HeadKind::kScalar)
    throw ConfigError("train_reward: model must have a scalar head");
  if (data.empty()) throw ContractError("train_reward: empty dataset");
  ModelParams params = std::move(init);
  const std::size_t per_epoch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
  CosineSchedule schedule(cfg.lr, per_epoch * cfg.epochs);
  AdamW opt(params, cfg.adam);
  std::size_t step = 0;
  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(cfg.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(lo + cfg.batch_size, data.size());
      std::size_t tokens = 0;
      for (std::size_t i = lo; i < hi; ++i)
        tokens += data[order[i]].example.output_tokens.size();
      const Real norm = Real(1) / static_cast<Real>(tokens);
      const Real loss = accumulate_gradients(
          params, hi - lo,
          [&](const ModelParams& p, std::size_t i) {
            return ad::scale(reward_datum_loss(p, data[order[lo + i]], cfg.inclusive),
                             norm);
          },
          cfg.threads);
      const double lr = schedule(step);
      opt.step(lr);
      if (log != nullptr) log->push_back({step, loss, lr});
    }
  }
  return params;
}

struct RewardFn {
  ModelParams params;
  double length_penalty = kLengthPenalty;
  std::size_t output_cap = kDefaultOutputCap;
  bool inclusive = true;

  void validate() const {
    if (params.config.head != HeadKind::kScalar)
      throw ConfigError("reward fn: model must have a scalar head");
    if (length_penalty > 0) throw ConfigError("reward fn: penalty must be <= 0");
  }
};

// Reward-model value at each output token, before any length penalty.
inline std::vector<double> token_rewards(const RewardFn& fn,
                                         std::span<const TokenId> input,
                                         std::span<const TokenId> output) {
  ad::NoGradScope<Real> no_grad;
  Tensor s = score_output(fn.params, input, output, fn.inclusive);
  return {s.values().begin(), s.values().end()};
}

// Adds `penalty` to every reward slot at index >= gt_len.
inline std::vector<double> apply_length_penalty(std::vector<double> rewards,
                                                std::size_t out_len, std::size_t gt_len,
                                                double penalty = kLengthPenalty) {
  if (rewards.size() != out_len)
    throw ContractError("apply_length_penalty: rewards length differs from out_len");
  for (std::size_t t = gt_len; t < out_len; ++t) rewards[t] += penalty;
  return rewards;
}

// Mean token score per datum, averaged per class.
struct RewardSeparation {
  double positive_mean = 0;
  double negative_mean = 0;
  std::array<double, 5> category_mean{};
  std::size_t positives = 0;
  std::size_t negatives = 0;

  double gap() const { return positive_mean - negative_mean; }
};

inline RewardSeparation reward_separation(const ModelParams& reward,
                                          const std::vector<RewardDatum>& data,
                                          bool inclusive = true) {
  ad::NoGradScope<Real> no_grad;
  RewardSeparation r;
  std::array<std::size_t, 5> counts{};
  for (const auto& d : data) {
    Tensor s = score_output(reward, d.example.input_tokens, d.example.output_tokens,
                            inclusive);
    double m = 0;
    for (double v : s.values()) m += v;
    m /= static_cast<double>(s.size());
    if (d.positive()) {
      r.positive_mean += m;
      ++r.positives;
    } else {
      const auto k = static_cast<std::size_t>(*d.category) - 1;
      r.category_mean[k] += m;
      ++counts[k];
      r.negative_mean += m;
      ++r.negatives;
    }
  }
  if (r.positives) r.positive_mean /= static_cast<double>(r.positives);
  if (r.negatives) r.negative_mean /= static_cast<double>(r.negatives);
  for (std::size_t k = 0; k < 5; ++k)
    if (counts[k]) r.category_mean[k] /= static_cast<double>(counts[k]);
  return r;
}

}  // namespace lastmile

#endif  // LASTMILE_REWARD_HPP_
