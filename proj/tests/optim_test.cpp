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

#include "lastmile/optim.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

namespace {

using namespace lastmile;

TEST(Optim, CosineScheduleEndpoints) {
  CosineSchedule s(1e-3, 100);
  EXPECT_DOUBLE_EQ(s(0), 1e-3);
  EXPECT_NEAR(s(50), 5e-4, 1e-18);
  EXPECT_NEAR(s(100), 0.0, 1e-18);
  for (std::size_t i = 1; i <= 100; ++i) EXPECT_LT(s(i), s(i - 1));
  EXPECT_THROW(CosineSchedule(0.0, 10), ConfigError);
  EXPECT_THROW(CosineSchedule(1e-3, 0), ConfigError);
}

TEST(Optim, AdamWFirstStepMatchesHandComputation) {
  ModelConfig c;
  c.vocab_size = 6;
  c.d_model = 4;
  c.layers = 1;
  c.heads = 1;
  c.ff = 4;
  c.max_seq = 4;
  ModelParams p = init_params(c, 1);
  ModelParams before = p;
  // Gradient of 3 on every tok_emb entry, of -0.5 on every lnf_b entry.
  p.zero_grad();
  p.tok_emb.node()->grad.assign(p.tok_emb.size(), 3.0);
  p.lnf_b.node()->grad.assign(p.lnf_b.size(), -0.5);
  AdamWConfig cfg;
  AdamW opt(p, cfg);
  const double lr = 0.01;
  opt.step(lr);
  // After one step m_hat = g and v_hat = g^2, so the update is lr*g/(|g|+eps).
  for (std::size_t i = 0; i < p.tok_emb.size(); ++i) {
    const double w0 = before.tok_emb.values()[i];
    const double want = w0 - lr * cfg.weight_decay * w0 - lr * 3.0 / (3.0 + cfg.eps);
    EXPECT_NEAR(p.tok_emb.values()[i], want, 1e-15);
  }
  // lnf_b is a bias: no weight decay.
  for (std::size_t i = 0; i < p.lnf_b.size(); ++i)
    EXPECT_NEAR(p.lnf_b.values()[i], before.lnf_b.values()[i] + lr * 0.5 / (0.5 + cfg.eps), 1e-15);
  // Parameters with zero gradient only decay (matrices) or stay put (vectors).
  EXPECT_TRUE(std::equal(p.lnf_g.values().begin(), p.lnf_g.values().end(),
                         before.lnf_g.values().begin()));
}

TEST(Optim, DecayAppliesToMatricesOnly) {
  EXPECT_TRUE(decays("tok_emb"));
  EXPECT_TRUE(decays("layer0.w_qkv"));
  EXPECT_TRUE(decays("head_w"));
  EXPECT_FALSE(decays("layer0.b_qkv"));
  EXPECT_FALSE(decays("layer1.ln1_g"));
  EXPECT_FALSE(decays("head_b"));
}

}  // namespace
