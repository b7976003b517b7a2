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

#include "lastmile/corpus.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

namespace {

using namespace lastmile;

std::string temp_file(const std::string& name, const std::string& content) {
  const auto p = std::filesystem::temp_directory_path() / ("lastmile_corpus_" + name);
  std::ofstream(p, std::ios::binary) << content;
  return p.string();
}

TEST(Corpus, ReservedIdsAreFixed) {
  Vocab v;
  EXPECT_EQ(v.size(), kNumReserved);
  EXPECT_EQ(v.token(kPad), "<pad>");
  EXPECT_EQ(v.token(kUnk), "<unk>");
  EXPECT_EQ(v.token(kBos), "<bos>");
  EXPECT_EQ(v.token(kEos), "<eos>");
  EXPECT_EQ(v.token(kNewline), "<nl>");
  EXPECT_EQ(v.id("\n"), kNewline);
  EXPECT_EQ(v.id("never-seen"), kUnk);
  EXPECT_THROW(v.add("<eos>"), ConfigError);
}

TEST(Corpus, BuildVocabKeepsEveryWordWhenRoomy) {
  std::vector<std::string> texts = {"a b a"};
  Vocab v = build_vocab(texts, 10);
  EXPECT_EQ(v.size(), 7u);
  EXPECT_TRUE(v.contains("a"));
  EXPECT_TRUE(v.contains("b"));
}

TEST(Corpus, BuildVocabKeepsMostFrequent) {
  std::vector<std::string> texts = {"x y", "y z"};
  Vocab v = build_vocab(texts, 6);
  EXPECT_EQ(v.size(), 6u);
  EXPECT_TRUE(v.contains("y"));
  EXPECT_FALSE(v.contains("x"));
  EXPECT_FALSE(v.contains("z"));
}

TEST(Corpus, BuildVocabBreaksTiesLexicographically) {
  std::vector<std::string> texts = {"c b a"};
  Vocab v = build_vocab(texts, 7);
  EXPECT_TRUE(v.contains("a"));
  EXPECT_TRUE(v.contains("b"));
  EXPECT_FALSE(v.contains("c"));
}

TEST(Corpus, BuildVocabOfNothingIsReservedOnly) {
  Vocab v = build_vocab(std::vector<std::string>{}, 100);
  EXPECT_EQ(v.size(), kNumReserved);
}

TEST(Corpus, RoundTripNormalizesWhitespace) {
  std::vector<std::string> texts = {"hello  world\nagain"};
  Vocab v = build_vocab(texts, 50);
  const std::string text = "  hello world \n  again  ";
  EXPECT_EQ(v.decode(v.encode(text)), normalize_text(text));
  EXPECT_EQ(normalize_text(text), "hello world\nagain");
}

TEST(Corpus, VocabSaveLoadRoundTrip) {
  std::vector<std::string> texts = {"b a c a"};
  Vocab v = build_vocab(texts, 50);
  const auto path = temp_file("vocab.tsv", "");
  v.save(path);
  EXPECT_EQ(Vocab::load(path), v);
}

TEST(Corpus, LoadSmallestRecord) {
  const auto path = temp_file("one.jsonl", R"({"input":"a b","output":"a"})" "\n");
  ExampleSet s = load_examples(path, 100);
  ASSERT_EQ(s.size(), 1u);
  const Example& ex = s[0];
  EXPECT_EQ(ex.input_tokens.size(), 4u);  // BOS a b EOS
  EXPECT_EQ(ex.input_tokens.front(), kBos);
  EXPECT_EQ(ex.input_tokens.back(), kEos);
  EXPECT_EQ(ex.output_tokens.size(), 2u);  // a EOS
  EXPECT_EQ(ex.output_tokens.back(), kEos);
  EXPECT_EQ(s.provenance, Provenance::kLoaded);
}

TEST(Corpus, LoadDropsOverlongInputs) {
  std::string input;
  for (int i = 0; i < 500; ++i) input += (i ? " w" : "w") + std::to_string(i % 7);
  const auto path = temp_file("long.jsonl", R"({"input":")" + input + R"(","output":"x"})" "\n");
  ExampleSet s = load_examples(path, 1000, 400);
  EXPECT_EQ(s.size(), 0u);
  EXPECT_EQ(s.dropped, 1u);
}

TEST(Corpus, LoadAssignsDenseIds) {
  const auto path = temp_file("three.jsonl",
                              "{\"input\":\"a\",\"output\":\"a\"}\n"
                              "{\"input\":\"b\",\"output\":\"b\"}\n"
                              "{\"input\":\"c\",\"output\":\"c\"}\n");
  ExampleSet s = load_examples(path, 100);
  ASSERT_EQ(s.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(s[i].id, i);
}

TEST(Corpus, MissingFieldReportsLine) {
  const auto path = temp_file("bad.jsonl",
                              "{\"input\":\"a\",\"output\":\"a\"}\n"
                              "{\"input\":\"b\"}\n");
  try {
    load_examples(path, 100);
    FAIL() << "expected MalformedRecordError";
  } catch (const MalformedRecordError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Corpus, EmptyFileIsEmptyDatasetError) {
  EXPECT_THROW(load_examples(temp_file("empty.jsonl", ""), 100), EmptyDatasetError);
}

TEST(Corpus, SaveLoadKeepsIdsAndText) {
  ExampleSet s = gen_extraction_task(3, 20);
  auto [train, test] = split(s, 0.25, 9);
  const auto path = temp_file("saved.jsonl", "");
  save_examples(test, path);
  ExampleSet back = load_examples_with_vocab(path, test.vocab, 64);
  ASSERT_EQ(back.size(), test.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].id, test[i].id);
    EXPECT_EQ(back[i].input_tokens, test[i].input_tokens);
    EXPECT_EQ(back[i].output_tokens, test[i].output_tokens);
  }
}

TEST(Corpus, ExtractionOutputsAreTheMarkedSymbols) {
  ExampleSet s = gen_extraction_task(1, 300);
  const TokenId marker = s.vocab->id(std::string(kMarker));
  for (const auto& ex : s.examples) {
    TokenSeq want;
    for (std::size_t i = 0; i + 1 < ex.input_tokens.size(); ++i)
      if (ex.input_tokens[i] == marker) want.push_back(ex.input_tokens[i + 1]);
    want.push_back(kEos);
    EXPECT_EQ(ex.output_tokens, want);
    EXPECT_LE(ex.input_tokens.size(), 64u);
    EXPECT_EQ(s.vocab->decode(ex.output_tokens), ex.output_text);
  }
}

TEST(Corpus, ExtractionExample) {
  Vocab v = *extraction_vocab(TaskConfig{});
  Example ex = make_example(0, "s1 * s7 s2 * s3 s4", "s7 s3", v);
  EXPECT_EQ(v.decode(ex.output_tokens), "s7 s3");
}

TEST(Corpus, ExtractionOutputLengthsInRange) {
  ExampleSet s = gen_extraction_task(2, 500);
  std::set<std::size_t> seen;
  for (const auto& ex : s.examples) {
    const std::size_t n = output_words(ex).size();
    EXPECT_GE(n, 3u);
    EXPECT_LE(n, 8u);
    seen.insert(n);
  }
  EXPECT_EQ(seen.size(), 6u);
}

TEST(Corpus, ExtractionIsDeterministic) {
  ExampleSet a = gen_extraction_task(1, 100), b = gen_extraction_task(1, 100);
  EXPECT_EQ(a.examples, b.examples);
  EXPECT_NE(gen_extraction_task(2, 100).examples, a.examples);
}

TEST(Corpus, ExtractionRejectsInfeasibleMarkCount) {
  TaskConfig cfg;
  cfg.marked_max = 30;
  EXPECT_THROW(gen_extraction_task(0, 1, cfg), ConfigError);
}

TEST(Corpus, SplitSizesAndPartition) {
  ExampleSet s = gen_extraction_task(4, 10);
  auto [train, test] = split(s, 0.2, 5);
  EXPECT_EQ(train.size(), 8u);
  EXPECT_EQ(test.size(), 2u);
  std::set<std::size_t> ids;
  for (const auto* part : {&train, &test})
    for (const auto& ex : part->examples) EXPECT_TRUE(ids.insert(ex.id).second);
  std::set<std::size_t> all;
  for (const auto& ex : s.examples) all.insert(ex.id);
  EXPECT_EQ(ids, all);
}

TEST(Corpus, SplitIsDeterministic) {
  ExampleSet s = gen_extraction_task(4, 50);
  auto a = split(s, 0.3, 5), b = split(s, 0.3, 5);
  EXPECT_EQ(a.first.examples, b.first.examples);
  EXPECT_EQ(a.second.examples, b.second.examples);
}

TEST(Corpus, SplitRejectsBadFraction) {
  ExampleSet s = gen_extraction_task(4, 10);
  EXPECT_THROW(split(s, 0.0, 1), ConfigError);
  EXPECT_THROW(split(s, 1.0, 1), ConfigError);
}

}  // namespace
