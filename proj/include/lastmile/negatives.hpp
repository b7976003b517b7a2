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

#ifndef LASTMILE_NEGATIVES_HPP_
#define LASTMILE_NEGATIVES_HPP_

// Synthetic negative outputs for reward-model training and the weighted
// positive/negative dataset built from them.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lastmile/corpus.hpp"
#include "lastmile/error.hpp"
#include "lastmile/seeding.hpp"

namespace lastmile {

enum class NegCategory : int {
  kRandomTokens = 1,
  kRePaired = 2,
  kShuffled = 3,
  kRepetitiveTail = 4,
  kInputEcho = 5,
};

inline constexpr std::array<NegCategory, 5> kNegCategories = {
    NegCategory::kRandomTokens, NegCategory::kRePaired, NegCategory::kShuffled,
    NegCategory::kRepetitiveTail, NegCategory::kInputEcho};

inline constexpr std::string_view category_name(NegCategory c) {
  switch (c) {
    case NegCategory::kRandomTokens: return "random_tokens";
    case NegCategory::kRePaired: return "repaired";
    case NegCategory::kShuffled: return "shuffled";
    case NegCategory::kRepetitiveTail: return "repetitive_tail";
    case NegCategory::kInputEcho: return "input_echo";
  }
  return "unknown";
}

inline constexpr double kPositiveWeight = 1.0;
inline constexpr double kNegativeWeight = 1.0 / 5.0;
inline constexpr double kPositiveTarget = 1.0;
inline constexpr double kNegativeTarget = 0.0;
inline constexpr std::size_t kDefaultOutputCap = 100;

struct RewardDatum {
  Example example;
  std::optional<NegCategory> category;  // empty for a positive datum
  double weight = kPositiveWeight;
  std::vector<double> token_targets;  // one per output token

  bool positive() const { return !category.has_value(); }
};

inline std::string label_name(const RewardDatum& d) {
  return d.positive() ? "positive" : std::string(category_name(*d.category));
}

inline RewardDatum make_positive(const Example& ex) {
  return {ex, std::nullopt, kPositiveWeight,
          std::vector<double>(ex.output_tokens.size(), kPositiveTarget)};
}

namespace detail {

inline RewardDatum make_negative(const Example& src, NegCategory c,
                                 TokenSeq output, const Vocab& vocab) {
  RewardDatum d;
  d.example = src;
  d.example.output_tokens = std::move(output);
  d.example.output_text = vocab.decode(d.example.output_tokens);
  d.category = c;
  d.weight = kNegativeWeight;
  d.token_targets.assign(d.example.output_tokens.size(), kNegativeTarget);
  return d;
}

inline TokenSeq with_eos(std::span<const TokenId> words) {
  TokenSeq out(words.begin(), words.end());
  out.push_back(kEos);
  return out;
}

inline TokenSeq repetitive_tail(const Example& ex, std::mt19937_64& rng,
                                std::size_t output_cap) {
  TokenSeq words(output_words(ex).begin(), output_words(ex).end());
  if (words.empty()) {
    const auto in = input_words(ex);
    words.push_back(in.empty() ? kUnk : in.front());
  }
  std::uniform_real_distribution<double> frac_dist(0.3, 0.7);
  std::uniform_int_distribution<std::size_t> block_dist(1, 5);
  const double frac = frac_dist(rng);
  std::size_t block = block_dist(rng);
  auto prefix = static_cast<std::size_t>(
      std::llround(frac * static_cast<double>(words.size())));
  prefix = std::clamp<std::size_t>(prefix, 1, words.size());
  block = std::min(block, prefix);
  // Leave room for at least one full repetition of the block.
  if (prefix + block > output_cap) prefix = output_cap - block;
  block = std::min(block, prefix);
  TokenSeq out(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(prefix));
  const TokenSeq unit(out.end() - static_cast<std::ptrdiff_t>(block), out.end());
  for (std::size_t i = 0; out.size() < output_cap; ++i)
    out.push_back(unit[i % unit.size()]);
  return out;
}

}  // namespace detail

// Builds exactly |source| negatives of one category, deterministic per seed.
//   RandomTokens   uniform non-reserved words, same length as the true output
//   RePaired       outputs permuted by a derangement
//   Shuffled       output words permuted, differing from the original when
//                  that is possible
//   RepetitiveTail a prefix of the true output (30-70%), then its last 1-5
//                  words repeated up to output_cap tokens
//   InputEcho      the input words, truncated to output_cap tokens
inline std::vector<RewardDatum> synthesize(NegCategory category,
                                           const ExampleSet& source,
                                           std::uint64_t seed,
                                           std::size_t output_cap = kDefaultOutputCap) {
  if (source.empty())
    throw InfeasibleCategoryError("synthesize: empty source set");
  if (output_cap < 6)
    throw ConfigError("synthesize: output_cap must be at least 6");
  const Vocab& vocab = *source.vocab;
  std::mt19937_64 rng(seed);
  std::vector<RewardDatum> out;
  out.reserve(source.size());
  switch (category) {
    case NegCategory::kRandomTokens: {
      if (vocab.size() <= kNumReserved)
        throw InfeasibleCategoryError(
            "random_tokens: vocabulary has no non-reserved words");
      std::uniform_int_distribution<TokenId> word(
          static_cast<TokenId>(kNumReserved), static_cast<TokenId>(vocab.size() - 1));
      for (const auto& ex : source.examples) {
        TokenSeq words(output_words(ex).size());
        for (auto& w : words) w = word(rng);
        out.push_back(detail::make_negative(ex, category, detail::with_eos(words), vocab));
      }
      break;
    }
    case NegCategory::kRePaired: {
      const std::size_t n = source.size();
      if (n < 2)
        throw InfeasibleCategoryError("repaired: needs at least two examples");
      std::vector<std::size_t> perm(n);
      // Rejection sampling; a uniform permutation is a derangement with
      // probability ~1/e.
      for (;;) {
        for (std::size_t i = 0; i < n; ++i) perm[i] = i;
        std::shuffle(perm.begin(), perm.end(), rng);
        bool fixed = false;
        for (std::size_t i = 0; i < n && !fixed; ++i) fixed = perm[i] == i;
        if (!fixed) break;
      }
      for (std::size_t i = 0; i < n; ++i) {
        const Example& donor = source.examples[perm[i]];
        RewardDatum d = detail::make_negative(source.examples[i], category,
                                              donor.output_tokens, vocab);
        d.example.output_text = donor.output_text;
        out.push_back(std::move(d));
      }
      break;
    }
    case NegCategory::kShuffled: {
      for (const auto& ex : source.examples) {
        const auto orig = output_words(ex);
        TokenSeq words(orig.begin(), orig.end());
        const bool can_differ =
            std::adjacent_find(words.begin(), words.end(),
                               std::not_equal_to<>()) != words.end();
        do {
          std::shuffle(words.begin(), words.end(), rng);
        } while (can_differ && std::equal(words.begin(), words.end(), orig.begin()));
        out.push_back(detail::make_negative(ex, category, detail::with_eos(words), vocab));
      }
      break;
    }
    case NegCategory::kRepetitiveTail: {
      for (const auto& ex : source.examples)
        out.push_back(detail::make_negative(
            ex, category, detail::repetitive_tail(ex, rng, output_cap), vocab));
      break;
    }
    case NegCategory::kInputEcho: {
      for (const auto& ex : source.examples) {
        TokenSeq echo = detail::with_eos(input_words(ex));
        if (echo.size() > output_cap) echo.resize(output_cap);
        out.push_back(detail::make_negative(ex, category, std::move(echo), vocab));
      }
      break;
    }
  }
  return out;
}

// One positive per example plus |positives| negatives of each category,
// shuffled deterministically.
inline std::vector<RewardDatum> build_reward_dataset(
    const ExampleSet& positives, std::uint64_t negative_seed,
    std::size_t output_cap = kDefaultOutputCap) {
  if (positives.empty())
    throw InfeasibleCategoryError("build_reward_dataset: no positives");
  std::vector<RewardDatum> data;
  data.reserve(positives.size() * (1 + kNegCategories.size()));
  for (const auto& ex : positives.examples) data.push_back(make_positive(ex));
  for (NegCategory c : kNegCategories) {
    auto negs = synthesize(c, positives,
                           derive_seed(negative_seed, static_cast<std::uint64_t>(c)),
                           output_cap);
    std::move(negs.begin(), negs.end(), std::back_inserter(data));
  }
  std::mt19937_64 rng(derive_seed(negative_seed, 0));
  std::shuffle(data.begin(), data.end(), rng);
  return data;
}

inline void export_reward_dataset(const std::vector<RewardDatum>& data,
                                  const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  for (const auto& d : data) {
    nlohmann::ordered_json j;
    j["input"] = d.example.input_text;
    j["output"] = d.example.output_text;
    j["label"] = label_name(d);
    j["weight"] = d.weight;
    j["id"] = d.example.id;
    // Exact token ids; the text alone cannot tell a capped output from one
    // that ended with EOS.
    j["output_ids"] = d.example.output_tokens;
    out << j.dump() << '\n';
  }
}

// Reads a file written by export_reward_dataset.
inline std::vector<RewardDatum> import_reward_dataset(const std::string& path,
                                                      const Vocab& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::vector<RewardDatum> data;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      RewardDatum d;
      d.example = make_example(j.at("id").get<std::size_t>(),
                               j.at("input").get<std::string>(),
                               j.at("output").get<std::string>(), vocab);
      d.example.output_tokens = j.at("output_ids").get<TokenSeq>();
      const auto label = j.at("label").get<std::string>();
      if (label != "positive") {
        const auto it = std::find_if(
            kNegCategories.begin(), kNegCategories.end(),
            [&](NegCategory c) { return category_name(c) == label; });
        if (it == kNegCategories.end())
          throw MalformedRecordError(lineno, "unknown label '" + label + "'");
        d.category = *it;
      }
      d.weight = j.at("weight").get<double>();
      d.token_targets.assign(d.example.output_tokens.size(),
                             d.positive() ? kPositiveTarget : kNegativeTarget);
      data.push_back(std::move(d));
    } catch (const nlohmann::json::exception& e) {
      throw MalformedRecordError(lineno, e.what());
    }
  }
  return data;
}

}  // namespace lastmile

#endif  // LASTMILE_NEGATIVES_HPP_
