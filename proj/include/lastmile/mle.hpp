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

#ifndef LASTMILE_MLE_HPP_
#define LASTMILE_MLE_HPP_

// Maximum-likelihood (teacher forced cross-entropy) fine-tuning, used both
// for the control model and for the brief pretraining that produces the base
// model, plus the text clean-up heuristics applied to control outputs.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
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

struct MLEConfig {
  double lr = 3e-4;
  std::size_t epochs = 1;
  std::size_t batch_size = 7;
  std::uint64_t seed = 0;
  // When non-zero, stop after this many steps (the schedule spans them).
  std::size_t max_steps = 0;
  unsigned threads = 1;
  AdamWConfig adam;

  void validate() const {
    if (!(lr > 0)) throw ConfigError("mle: learning rate must be positive");
    if (epochs == 0) throw ConfigError("mle: epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("mle: batch_size must be >= 1");
  }
};

// Summed negative log-likelihood of the output tokens given the input.
inline Tensor sequence_nll(const ModelParams& p, const Example& ex) {
  return ad::scale(ad::sum(action_log_probs(p, ex.input_tokens, ex.output_tokens)), -1.0);
}

// Mean per-token cross-entropy of `batch`, without gradients.
inline double mean_nll(const ModelParams& p, std::span<const Example> batch) {
  ad::NoGradScope<Real> no_grad;
  double total = 0;
  std::size_t tokens = 0;
  for (const auto& ex : batch) {
    total += sequence_nll(p, ex).item();
    tokens += ex.output_tokens.size();
  }
  return total / static_cast<double>(tokens);
}

inline ModelParams train_mle(ModelParams params, const ExampleSet& data,
                             const MLEConfig& cfg, std::vector<StepLog>* log = nullptr) {
  cfg.validate();
  if (params.config.head != HeadKind::kLogits)
    throw ConfigError("train_mle: model must have a logits head");
  if (data.empty()) throw ContractError("train_mle: empty dataset");
  const std::size_t per_epoch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
  std::size_t total = per_epoch * cfg.epochs;
  if (cfg.max_steps > 0) total = cfg.max_steps;
  CosineSchedule schedule(cfg.lr, total);
  AdamW opt(params, cfg.adam);
  std::vector<std::size_t> order(data.size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; step < total; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(cfg.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < per_epoch && step < total; ++b, ++step) {
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(lo + cfg.batch_size, data.size());
      std::size_t tokens = 0;
      for (std::size_t i = lo; i < hi; ++i)
        tokens += data.examples[order[i]].output_tokens.size();
      const Real norm = Real(1) / static_cast<Real>(tokens);
      const Real loss = accumulate_gradients(
          params, hi - lo,
          [&](const ModelParams& p, std::size_t i) {
            return ad::scale(sequence_nll(p, data.examples[order[lo + i]]), norm);
          },
          cfg.threads);
      const double lr = schedule(step);
      opt.step(lr);
      if (log != nullptr) log->push_back({step, loss, lr});
    }
  }
  return params;
}

// Drops everything through the first newline while the text opens with
// "Sure," and contains a newline. Repeats until the condition fails so the
// result is a fixed point.
inline std::string strip_sure_preamble(std::string_view text) {
  for (;;) {
    const auto nl = text.find('\n');
    if (!text.starts_with("Sure,") || nl == std::string_view::npos)
      return std::string(text);
    text.remove_prefix(nl + 1);
  }
}

// Everything before the first newline.
inline std::string truncate_after_newline(std::string_view text) {
  return std::string(text.substr(0, text.find('\n')));
}

}  // namespace lastmile

#endif  // LASTMILE_MLE_HPP_
