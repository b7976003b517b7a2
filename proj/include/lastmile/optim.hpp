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

#ifndef LASTMILE_OPTIM_HPP_
#define LASTMILE_OPTIM_HPP_

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "lastmile/error.hpp"
#include "lastmile/seqmodel.hpp"

namespace lastmile {

// lr(step) = base * (1 + cos(pi * step / total)) / 2, step in [0, total).
class CosineSchedule {
 public:
  CosineSchedule(double base_lr, std::size_t total_steps)
      : base_(base_lr), total_(total_steps) {
    if (!(base_lr > 0)) throw ConfigError("schedule: learning rate must be positive");
    if (total_steps == 0) throw ConfigError("schedule: no steps");
  }
  double operator()(std::size_t step) const {
    const double frac = static_cast<double>(step) / static_cast<double>(total_);
    return base_ * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
  }
  std::size_t total_steps() const { return total_; }

 private:
  double base_;
  std::size_t total_;
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled weight decay Adam over the parameters of one model. Decay is
// applied to weight matrices and embeddings only.
class AdamW {
 public:
  explicit AdamW(ModelParams& params, AdamWConfig cfg = {}) : params_(params), cfg_(cfg) {
    for (auto& [name, t] : params_.named()) {
      m_.emplace_back(t->size(), 0.0);
      v_.emplace_back(t->size(), 0.0);
      decay_.push_back(decays(name));
    }
  }

  // Uses the gradients currently stored on the parameters.
  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    auto named = params_.named();
    for (std::size_t k = 0; k < named.size(); ++k) {
      Tensor& p = *named[k].second;
      if (!p.has_grad()) continue;
      auto w = p.mutable_values();
      const auto g = p.grad();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        if (decay_[k]) w[i] -= lr * cfg_.weight_decay * w[i];
        w[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  std::size_t steps_taken() const { return t_; }

 private:
  ModelParams& params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::vector<bool> decay_;
  std::size_t t_ = 0;
};

}  // namespace lastmile

#endif  // LASTMILE_OPTIM_HPP_
