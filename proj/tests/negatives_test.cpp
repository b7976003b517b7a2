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

#include "lastmile/negatives.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <map>

namespace {

using namespace lastmile;

ExampleSet tiny_set(const std::vector<std::pair<std::string, std::string>>& pairs) {
  std::vector<std::string> texts;
  for (const auto& [i, o] : pairs) {
    texts.push_back(i);
    texts.push_back(o);
  }
  ExampleSet s;
  s.vocab = std::make_shared<const Vocab>(build_vocab(texts, 100));
  for (const auto& [i, o] : pairs) s.examples.push_back(make_example(s.size(), i, o, *s.vocab));
  return s;
}

TEST(Negatives, CategoryCodesFollowListOrder) {
  ASSERT_EQ(kNegCategories.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i)
    EXPECT_EQ(static_cast<int>(kNegCategories[i]), static_cast<int>(i) + 1);
}

TEST(Negatives, InputEchoCopiesInput) {
  auto s = tiny_set({{"a b c", "a"}});
  auto neg = synthesize(NegCategory::kInputEcho, s, 1);
  ASSERT_EQ(neg.size(), 1u);
  EXPECT_EQ(neg[0].example.output_text, "a b c");
  EXPECT_EQ(neg[0].weight, kNegativeWeight);
  EXPECT_EQ(neg[0].token_targets, std::vector<double>(4, 0.0));
}

TEST(Negatives, InputEchoTruncatesToCap) {
  auto s = tiny_set({{"a b c d e f g h", "a"}});
  auto neg = synthesize(NegCategory::kInputEcho, s, 1, 6);
  EXPECT_EQ(neg[0].example.output_tokens.size(), 6u);
}

TEST(Negatives, ShuffledDiffersAndKeepsMultiset) {
  auto s = tiny_set({{"q", "x y z"}});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto neg = synthesize(NegCategory::kShuffled, s, seed);
    EXPECT_NE(neg[0].example.output_text, "x y z");
    auto a = split_words(neg[0].example.output_text), b = split_words("x y z");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
  }
}

TEST(Negatives, ShuffledOfSingleWordTerminates) {
  auto s = tiny_set({{"q", "x"}, {"r", "y y"}});
  auto neg = synthesize(NegCategory::kShuffled, s, 3);
  EXPECT_EQ(neg[0].example.output_text, "x");
  EXPECT_EQ(neg[1].example.output_text, "y y");
}

TEST(Negatives, RePairedHasNoFixedPoints) {
  auto s = tiny_set({{"i1", "o1"}, {"i2", "o2"}, {"i3", "o3"}});
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto neg = synthesize(NegCategory::kRePaired, s, seed);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_NE(neg[i].example.output_text, s[i].output_text);
      EXPECT_EQ(neg[i].example.input_text, s[i].input_text);
    }
  }
}

TEST(Negatives, RePairedNeedsTwoExamples) {
  auto s = tiny_set({{"i1", "o1"}});
  EXPECT_THROW(synthesize(NegCategory::kRePaired, s, 0), InfeasibleCategoryError);
}

TEST(Negatives, RandomTokensMatchLengthAndAvoidReserved) {
  ExampleSet s = gen_extraction_task(5, 200);
  auto neg = synthesize(NegCategory::kRandomTokens, s, 2);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& o = neg[i].example.output_tokens;
    EXPECT_EQ(o.size(), s[i].output_tokens.size());
    EXPECT_EQ(o.back(), kEos);
    for (std::size_t k = 0; k + 1 < o.size(); ++k)
      EXPECT_GE(o[k], static_cast<TokenId>(kNumReserved));
  }
}

TEST(Negatives, RepetitiveTailShape) {
  ExampleSet s = gen_extraction_task(6, 200);
  auto neg = synthesize(NegCategory::kRepetitiveTail, s, 4, 40);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& o = neg[i].example.output_tokens;
    const auto gt = output_words(s[i]);
    ASSERT_EQ(o.size(), 40u);
    // Starts with a correct prefix of 30-70% of the true output.
    std::size_t prefix = 0;
    while (prefix < gt.size() && o[prefix] == gt[prefix]) ++prefix;
    EXPECT_GE(prefix, 1u);
    // The remainder repeats some block of at most 5 tokens.
    bool periodic = false;
    for (std::size_t p = 1; p <= 5 && !periodic; ++p) {
      periodic = true;
      for (std::size_t k = 40 - 20; k < 40; ++k) periodic = periodic && o[k] == o[k - p];
    }
    EXPECT_TRUE(periodic);
  }
}

TEST(Negatives, RejectsTinyCap) {
  ExampleSet s = gen_extraction_task(6, 3);
  EXPECT_THROW(synthesize(NegCategory::kInputEcho, s, 1, 5), ConfigError);
}

TEST(Negatives, SynthesizeIsDeterministic) {
  ExampleSet s = gen_extraction_task(6, 50);
  for (NegCategory c : kNegCategories) {
    auto a = synthesize(c, s, 9), b = synthesize(c, s, 9);
    for (std::size_t i = 0; i < a.size(); ++i)
      EXPECT_EQ(a[i].example.output_tokens, b[i].example.output_tokens);
  }
}

TEST(Negatives, DatasetCountsAndWeights) {
  ExampleSet s = gen_extraction_task(7, 10);
  auto data = build_reward_dataset(s, 3);
  ASSERT_EQ(data.size(), 60u);
  std::size_t heavy = 0, light = 0;
  double total = 0;
  for (const auto& d : data) {
    total += d.weight;
    if (d.weight == 1.0) ++heavy;
    if (d.weight == 0.2) ++light;
    EXPECT_EQ(d.token_targets.size(), d.example.output_tokens.size());
    for (double t : d.token_targets) EXPECT_EQ(t, d.positive() ? 1.0 : 0.0);
  }
  EXPECT_EQ(heavy, 10u);
  EXPECT_EQ(light, 50u);
  EXPECT_NEAR(total, 20.0, 1e-12);
}

TEST(Negatives, ExportImportRoundTrip) {
  ExampleSet s = gen_extraction_task(8, 12);
  auto data = build_reward_dataset(s, 4);
  const auto path =
      (std::filesystem::temp_directory_path() / "lastmile_reward.jsonl").string();
  export_reward_dataset(data, path);
  auto back = import_reward_dataset(path, *s.vocab);
  ASSERT_EQ(back.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(back[i].example.output_tokens, data[i].example.output_tokens);
    EXPECT_EQ(back[i].example.input_tokens, data[i].example.input_tokens);
    EXPECT_EQ(back[i].category, data[i].category);
    EXPECT_EQ(back[i].weight, data[i].weight);
    EXPECT_EQ(back[i].token_targets, data[i].token_targets);
  }
}

}  // namespace
