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

#include "lastmile/seqmodel.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "lastmile/mle.hpp"

namespace {

using namespace lastmile;

ModelConfig small_config(std::size_t vocab = 12) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.d_model = 16;
  c.layers = 2;
  c.heads = 2;
  c.ff = 32;
  c.max_seq = 40;
  return c;
}

bool same(const Tensor& a, const Tensor& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

TEST(SeqModel, InitIsDeterministic) {
  EXPECT_TRUE(init_params(small_config(), 3).values_equal(init_params(small_config(), 3)));
  EXPECT_FALSE(init_params(small_config(), 3).values_equal(init_params(small_config(), 4)));
}

TEST(SeqModel, HeadShapes) {
  ModelParams p = init_params(small_config(), 1);
  const TokenSeq toks = {2, 5, 6, 3};
  EXPECT_EQ(forward_logits(p, toks).rows(), 4u);
  EXPECT_EQ(forward_logits(p, toks).cols(), 12u);
  ModelParams v = with_head(p, HeadKind::kScalar, 2);
  EXPECT_EQ(forward_scalar(v, toks).rows(), 4u);
  EXPECT_EQ(forward_scalar(v, toks).cols(), 1u);
  EXPECT_THROW(forward_scalar(p, toks), ConfigError);
  EXPECT_THROW(forward_logits(v, toks), ConfigError);
}

TEST(SeqModel, RejectsBadConfig) {
  ModelConfig c = small_config();
  c.heads = 3;
  EXPECT_THROW(init_params(c, 1), ConfigError);
}

TEST(SeqModel, OverlongInputIsLengthError) {
  ModelParams p = init_params(small_config(), 1);
  EXPECT_THROW(forward_logits(p, TokenSeq(41, 5)), LengthError);
}

TEST(SeqModel, CausalityForBothHeads) {
  ModelParams p = init_params(small_config(), 1);
  ModelParams v = with_head(p, HeadKind::kScalar, 2);
  TokenSeq a = {2, 5, 6, 7, 8, 9, 3};
  TokenSeq b = a;
  b[4] = 11;
  b[6] = 10;
  for (const ModelParams* m : {&p, &v}) {
    const Tensor ya = forward(*m, a), yb = forward(*m, b);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < ya.cols(); ++c) EXPECT_EQ(ya(r, c), yb(r, c));
    EXPECT_NE(ya(4, 0), yb(4, 0));
  }
}

TEST(SeqModel, SoftmaxRowsNormalized) {
  ModelParams p = init_params(small_config(), 1);
  Tensor logp = ad::log_softmax_rows(forward_logits(p, TokenSeq{2, 5, 6, 3}));
  for (std::size_t r = 0; r < logp.rows(); ++r) {
    double s = 0;
    for (std::size_t c = 0; c < logp.cols(); ++c) s += std::exp(logp(r, c));
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(SeqModel, LogProbUniformAndLimit) {
  Tensor rows = Tensor::zeros(2, 4);
  Tensor lp = log_prob(rows, TokenSeq{1, 3});
  EXPECT_NEAR(lp(0, 0), std::log(0.25), 1e-15);
  EXPECT_NEAR(lp(1, 0), std::log(0.25), 1e-15);
  Tensor sharp = Tensor::from_values(1, 3, {0, 500, 0});
  EXPECT_NEAR(log_prob(sharp, TokenSeq{1})(0, 0), 0.0, 1e-15);
  EXPECT_THROW(log_prob(rows, TokenSeq{1}), ContractError);
}

TEST(SeqModel, ExpLogProbMatchesSoftmax) {
  ModelParams p = init_params(small_config(), 5);
  Tensor logits = forward_logits(p, TokenSeq{2, 7, 8});
  Tensor probs = ad::softmax_rows(logits);
  Tensor lp = log_prob(logits, TokenSeq{4, 9, 3});
  const TokenId acts[] = {4, 9, 3};
  for (std::size_t r = 0; r < 3; ++r)
    EXPECT_NEAR(std::exp(lp(r, 0)), probs(r, static_cast<std::size_t>(acts[r])), 1e-12);
}

TEST(SeqModel, ActionLogProbsAlignWithRows) {
  ModelParams p = init_params(small_config(), 5);
  const TokenSeq prompt = {2, 7, 8, 3}, actions = {9, 10, 3};
  Tensor logits = forward_logits(p, TokenSeq{2, 7, 8, 3, 9, 10});
  Tensor want = log_prob(ad::slice_rows(logits, 3, 6), actions);
  EXPECT_TRUE(same(action_log_probs(p, prompt, actions), want));
}

TEST(SeqModel, IncrementalDecoderMatchesForward) {
  ModelParams p = init_params(small_config(), 6);
  const TokenSeq toks = {2, 5, 6, 7, 3, 9, 10, 11};
  const Tensor full = forward_logits(p, toks);
  IncrementalDecoder dec(p);
  for (std::size_t t = 0; t < toks.size(); ++t) {
    auto row = dec.step(toks[t]);
    for (std::size_t c = 0; c < row.size(); ++c) ASSERT_EQ(row[c], full(t, c));
  }
}

TEST(SeqModel, GreedyIsIdempotentAndCapped) {
  ModelParams p = init_params(small_config(), 7);
  const TokenSeq in = {2, 5, 6, 3};
  const TokenSeq a = greedy(p, in, 10), b = greedy(p, in, 10);
  EXPECT_EQ(a, b);
  EXPECT_LE(a.size(), 10u);
  EXPECT_THROW(greedy(p, in, 40), LengthError);
}

TEST(SeqModel, SampleIsSeededAndZeroTemperatureIsGreedy) {
  ModelParams p = init_params(small_config(), 8);
  const TokenSeq in = {2, 5, 6, 3};
  EXPECT_EQ(sample(p, in, 12, 1.0, 42), sample(p, in, 12, 1.0, 42));
  EXPECT_EQ(sample(p, in, 12, 0.0, 42), greedy(p, in, 12));
  for (std::uint64_t s = 0; s < 20; ++s) EXPECT_LE(sample(p, in, 5, 1.0, s).size(), 5u);
}

TEST(SeqModel, WithHeadKeepsBackbone) {
  ModelParams p = init_params(small_config(), 9);
  ModelParams v = with_head(p, HeadKind::kScalar, 1);
  EXPECT_TRUE(same(v.tok_emb, p.tok_emb));
  EXPECT_TRUE(same(v.layers[1].w_ff2, p.layers[1].w_ff2));
  EXPECT_EQ(v.head_w.cols(), 1u);
  // Deep copy: training the copy leaves the source alone.
  v.tok_emb.mutable_values()[0] += 1.0;
  EXPECT_NE(v.tok_emb.values()[0], p.tok_emb.values()[0]);
}

TEST(SeqModel, MemorizesTinyCopyTask) {
  auto vocab = extraction_vocab(TaskConfig{});
  ExampleSet set;
  set.vocab = vocab;
  const char* inputs[] = {"s1 s2 s3", "s4 s5", "s6 s7 s8", "s9 s10", "s11 s12 s13"};
  for (std::size_t i = 0; i < 5; ++i)
    set.examples.push_back(make_example(i, inputs[i], inputs[i], *vocab));
  ModelConfig c = small_config(vocab->size());
  MLEConfig cfg;
  cfg.lr = 1e-2;
  cfg.batch_size = 5;
  cfg.max_steps = 300;
  ModelParams p = train_mle(init_params(c, 1), set, cfg);
  for (const auto& ex : set.examples) EXPECT_EQ(greedy(p, ex.input_tokens, 8), ex.output_tokens);
}

}  // namespace
