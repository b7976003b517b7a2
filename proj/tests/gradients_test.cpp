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

#include "lastmile/gradients.hpp"

#include <gtest/gtest.h>

#include "lastmile/mle.hpp"

namespace {

using namespace lastmile;

TEST(Gradients, ThreadCountDoesNotChangeResults) {
  ExampleSet data = gen_extraction_task(3, 9);
  ModelConfig c;
  c.vocab_size = data.vocab->size();
  c.d_model = 16;
  c.layers = 1;
  c.heads = 2;
  c.ff = 32;
  c.max_seq = 64;
  auto grads = [&](unsigned threads) {
    ModelParams p = init_params(c, 2);
    const double loss = accumulate_gradients(
        p, data.size(),
        [&](const ModelParams& m, std::size_t i) { return sequence_nll(m, data[i]); }, threads);
    std::vector<double> g;
    for (const auto& [name, t] : p.named()) g.insert(g.end(), t->grad().begin(), t->grad().end());
    return std::make_pair(loss, g);
  };
  const auto one = grads(1), three = grads(3);
  EXPECT_EQ(one.first, three.first);
  EXPECT_EQ(one.second, three.second);
}

TEST(Gradients, SumsPerItemGradients) {
  ExampleSet data = gen_extraction_task(4, 2);
  ModelConfig c;
  c.vocab_size = data.vocab->size();
  c.d_model = 8;
  c.layers = 1;
  c.heads = 1;
  c.ff = 8;
  c.max_seq = 64;
  ModelParams p = init_params(c, 2);
  auto single = [&](std::size_t i) {
    accumulate_gradients(p, 1, [&](const ModelParams& m, std::size_t) { return sequence_nll(m, data[i]); });
    return std::vector<double>(p.head_w.grad().begin(), p.head_w.grad().end());
  };
  const auto g0 = single(0), g1 = single(1);
  accumulate_gradients(p, 2, [&](const ModelParams& m, std::size_t i) { return sequence_nll(m, data[i]); });
  for (std::size_t k = 0; k < g0.size(); ++k) EXPECT_NEAR(p.head_w.grad()[k], g0[k] + g1[k], 1e-12);
}

TEST(Gradients, NonFiniteLossThrows) {
  ModelConfig c;
  c.vocab_size = 8;
  c.d_model = 4;
  c.layers = 1;
  c.heads = 1;
  c.ff = 4;
  c.max_seq = 4;
  ModelParams p = init_params(c, 2);
  EXPECT_THROW(accumulate_gradients(p, 1,
                                    [](const ModelParams& m, std::size_t) {
                                      return ad::log(ad::scale(ad::sum(m.head_b), 0.0));
                                    }),
               NumericError);
}

}  // namespace
