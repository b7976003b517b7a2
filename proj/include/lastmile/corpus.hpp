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

#ifndef LASTMILE_CORPUS_HPP_
#define LASTMILE_CORPUS_HPP_

// Datasets of input/output text pairs, the word-level vocabulary, and the
// synthetic marked-token extraction task used as a desk-scale summarization
// stand-in.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lastmile/error.hpp"

namespace lastmile {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kBos = 2;
inline constexpr TokenId kEos = 3;
inline constexpr TokenId kNewline = 4;
inline constexpr std::size_t kNumReserved = 5;

// Splits text into whitespace-delimited words, emitting "\n" as a word of
// its own for every newline.
inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    if (ch == '\n') {
      flush();
      out.emplace_back("\n");
    } else if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\f' ||
               ch == '\v') {
      flush();
    } else {
      cur.push_back(ch);
    }
  }
  flush();
  return out;
}

// Joins words with single spaces; no space is placed next to a newline.
inline std::string join_words(std::span<const std::string> words) {
  std::string out;
  bool prev_newline = true;
  for (const auto& w : words) {
    if (w == "\n") {
      out += '\n';
      prev_newline = true;
      continue;
    }
    if (!prev_newline) out += ' ';
    out += w;
    prev_newline = false;
  }
  return out;
}

inline std::string normalize_text(std::string_view text) {
  const auto words = split_words(text);
  return join_words(words);
}

class Vocab {
 public:
  Vocab() : tokens_{"<pad>", "<unk>", "<bos>", "<eos>", "<nl>"} {}

  // Appends `token` unless already present; reserved names are rejected.
  TokenId add(const std::string& token) {
    if (auto it = ids_.find(token); it != ids_.end()) return it->second;
    if (is_reserved_name(token) || token == "\n" || token.empty())
      throw ConfigError("vocab: cannot add reserved token '" + token + "'");
    const auto id = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(token);
    ids_.emplace(token, id);
    return id;
  }

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& token) const { return ids_.count(token) > 0; }

  TokenId id(const std::string& token) const {
    if (token == "\n") return kNewline;
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
  }

  const std::string& token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
      throw ContractError("vocab: id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::span<const std::string> tokens() const { return tokens_; }

  TokenSeq encode(std::string_view text) const {
    TokenSeq out;
    for (const auto& w : split_words(text)) out.push_back(id(w));
    return out;
  }

  // PAD, BOS and EOS are dropped; NEWLINE becomes '\n'.
  std::string decode(std::span<const TokenId> ids) const {
    std::vector<std::string> words;
    for (TokenId t : ids) {
      if (t == kPad || t == kBos || t == kEos) continue;
      words.push_back(t == kNewline ? std::string("\n") : token(t));
    }
    return join_words(words);
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write vocab '" + path + "'");
    for (std::size_t i = 0; i < tokens_.size(); ++i)
      out << tokens_[i] << '\t' << i << '\n';
  }

  static Vocab load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read vocab '" + path + "'");
    Vocab v;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto tab = line.rfind('\t');
      if (tab == std::string::npos)
        throw MalformedRecordError(lineno, "expected token<TAB>id");
      const std::string tok = line.substr(0, tab);
      const auto id = std::stoul(line.substr(tab + 1));
      if (id != lineno - 1)
        throw MalformedRecordError(lineno, "ids must be sorted and dense");
      if (id < kNumReserved) continue;
      v.add(tok);
    }
    return v;
  }

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  static bool is_reserved_name(const std::string& t) {
    return t == "<pad>" || t == "<unk>" || t == "<bos>" || t == "<eos>" ||
           t == "<nl>";
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

// Keeps the most frequent words (ties broken lexicographically) so that the
// vocabulary including the reserved ids has at most max_size entries.
inline Vocab build_vocab(std::span<const std::string> texts,
                         std::size_t max_size) {
  if (max_size <= kNumReserved)
    throw ConfigError("build_vocab: max_size must exceed " +
                      std::to_string(kNumReserved));
  std::map<std::string, std::size_t> freq;
  for (const auto& t : texts)
    for (auto& w : split_words(t))
      if (w != "\n") ++freq[w];
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(),
                                                          freq.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second > b.second;
  });
  Vocab v;
  for (const auto& [w, n] : ranked) {
    if (v.size() >= max_size) break;
    if (w == "<pad>" || w == "<unk>" || w == "<bos>" || w == "<eos>" ||
        w == "<nl>")
      continue;
    v.add(w);
  }
  return v;
}

struct Example {
  std::size_t id = 0;
  std::string input_text;
  std::string output_text;
  // BOS, input words, EOS. The trailing EOS marks where the output starts.
  TokenSeq input_tokens;
  // Output words followed by EOS.
  TokenSeq output_tokens;

  bool operator==(const Example&) const = default;
};

inline Example make_example(std::size_t id, std::string input,
                            std::string output, const Vocab& vocab) {
  Example ex;
  ex.id = id;
  ex.input_tokens.push_back(kBos);
  for (TokenId t : vocab.encode(input)) ex.input_tokens.push_back(t);
  ex.input_tokens.push_back(kEos);
  ex.output_tokens = vocab.encode(output);
  ex.output_tokens.push_back(kEos);
  ex.input_text = std::move(input);
  ex.output_text = std::move(output);
  return ex;
}

// Output words of an example, i.e. output_tokens without the trailing EOS.
inline std::span<const TokenId> output_words(const Example& ex) {
  std::span<const TokenId> s = ex.output_tokens;
  if (!s.empty() && s.back() == kEos) s = s.first(s.size() - 1);
  return s;
}

inline std::span<const TokenId> input_words(const Example& ex) {
  std::span<const TokenId> s = ex.input_tokens;
  if (!s.empty() && s.front() == kBos) s = s.subspan(1);
  if (!s.empty() && s.back() == kEos) s = s.first(s.size() - 1);
  return s;
}

enum class Provenance { kLoaded, kSynthetic };

struct ExampleSet {
  std::vector<Example> examples;
  Provenance provenance = Provenance::kLoaded;
  std::uint64_t seed = 0;
  std::shared_ptr<const Vocab> vocab;
  // Records removed for exceeding the input cap while loading.
  std::size_t dropped = 0;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  const Example& operator[](std::size_t i) const { return examples[i]; }
};

inline constexpr std::size_t kDefaultLoadInputCap = 400;

namespace detail {

struct RawPair {
  std::string input;
  std::string output;
  std::optional<std::size_t> id;
};

inline std::vector<RawPair> read_jsonl_pairs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read dataset '" + path + "'");
  std::vector<RawPair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw MalformedRecordError(lineno, std::string("invalid JSON: ") + e.what());
    }
    for (const char* field : {"input", "output"}) {
      if (!j.is_object() || !j.contains(field) || !j[field].is_string())
        throw MalformedRecordError(
            lineno, std::string("missing string field \"") + field + "\"");
    }
    RawPair p{j["input"].get<std::string>(), j["output"].get<std::string>(), std::nullopt};
    if (j.contains("id")) {
      if (!j["id"].is_number_unsigned())
        throw MalformedRecordError(lineno, "field \"id\" must be a non-negative integer");
      p.id = j["id"].get<std::size_t>();
    }
    out.push_back(std::move(p));
  }
  if (out.empty()) throw EmptyDatasetError("dataset '" + path + "' is empty");
  return out;
}

inline ExampleSet encode_pairs(const std::vector<RawPair>& pairs,
                               std::shared_ptr<const Vocab> vocab,
                               std::size_t input_cap) {
  ExampleSet set;
  set.provenance = Provenance::kLoaded;
  set.vocab = std::move(vocab);
  for (const auto& p : pairs) {
    // Records without an "id" are numbered by position.
    Example ex = make_example(p.id.value_or(set.examples.size() + set.dropped), p.input,
                              p.output, *set.vocab);
    if (ex.input_tokens.size() > input_cap) {
      ++set.dropped;
      continue;
    }
    set.examples.push_back(std::move(ex));
  }
  return set;
}

}  // namespace detail

// Reads a JSONL file of {"input": ..., "output": ...} records, builds the
// vocabulary over all texts, and drops records whose input_tokens (BOS and
// delimiter included) exceed input_cap.
inline ExampleSet load_examples(const std::string& path, std::size_t vocab_budget,
                                std::size_t input_cap = kDefaultLoadInputCap) {
  const auto pairs = detail::read_jsonl_pairs(path);
  std::vector<std::string> texts;
  texts.reserve(pairs.size() * 2);
  for (const auto& p : pairs) {
    texts.push_back(p.input);
    texts.push_back(p.output);
  }
  auto vocab = std::make_shared<const Vocab>(build_vocab(texts, vocab_budget));
  return detail::encode_pairs(pairs, std::move(vocab), input_cap);
}

// Same as load_examples but encodes with an existing vocabulary.
inline ExampleSet load_examples_with_vocab(const std::string& path,
                                           std::shared_ptr<const Vocab> vocab,
                                           std::size_t input_cap) {
  return detail::encode_pairs(detail::read_jsonl_pairs(path), std::move(vocab),
                              input_cap);
}

inline void save_examples(const ExampleSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset '" + path + "'");
  for (const auto& ex : set.examples) {
    nlohmann::ordered_json j;
    j["id"] = ex.id;
    j["input"] = ex.input_text;
    j["output"] = ex.output_text;
    out << j.dump() << '\n';
  }
}

struct TaskConfig {
  std::size_t alphabet_size = 50;
  std::size_t input_min = 20;
  std::size_t input_max = 40;
  std::size_t marked_min = 3;
  std::size_t marked_max = 8;
  std::size_t input_cap = 64;

  void validate() const {
    if (alphabet_size == 0) throw ConfigError("task: alphabet_size must be > 0");
    if (input_min == 0 || input_min > input_max)
      throw ConfigError("task: need 0 < input_min <= input_max");
    if (marked_min == 0 || marked_min > marked_max)
      throw ConfigError("task: need 0 < marked_min <= marked_max");
    // Every marked symbol costs two input words (marker + symbol).
    if (2 * marked_max > input_min)
      throw ConfigError("task: marked count " + std::to_string(marked_max) +
                        " does not fit an input of " +
                        std::to_string(input_min) + " words");
    if (input_max + 2 > input_cap)
      throw ConfigError("task: input_max + 2 exceeds input_cap");
  }
};

inline constexpr std::string_view kMarker = "*";

inline std::string symbol_name(std::size_t i) { return "s" + std::to_string(i); }

inline std::shared_ptr<const Vocab> extraction_vocab(const TaskConfig& cfg) {
  std::string all(kMarker);
  for (std::size_t i = 0; i < cfg.alphabet_size; ++i) all += " " + symbol_name(i);
  std::vector<std::string> texts{all};
  return std::make_shared<const Vocab>(
      build_vocab(texts, kNumReserved + 1 + cfg.alphabet_size));
}

// Each input is a run of symbols in which some are preceded by the marker
// "*"; the target output lists the marked symbols in input order.
inline ExampleSet gen_extraction_task(std::uint64_t seed, std::size_t n,
                                      const TaskConfig& cfg = {}) {
  cfg.validate();
  ExampleSet set;
  set.provenance = Provenance::kSynthetic;
  set.seed = seed;
  set.vocab = extraction_vocab(cfg);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len_dist(cfg.input_min, cfg.input_max);
  std::uniform_int_distribution<std::size_t> mark_dist(cfg.marked_min, cfg.marked_max);
  std::uniform_int_distribution<std::size_t> sym_dist(0, cfg.alphabet_size - 1);
  for (std::size_t id = 0; id < n; ++id) {
    const std::size_t words = len_dist(rng);
    const std::size_t marked = mark_dist(rng);
    const std::size_t slots = words - marked;
    std::vector<std::uint8_t> is_marked(slots, 0);
    std::fill_n(is_marked.begin(), marked, 1);
    std::shuffle(is_marked.begin(), is_marked.end(), rng);
    std::vector<std::string> in_words, out_words;
    for (std::size_t s = 0; s < slots; ++s) {
      std::string sym = symbol_name(sym_dist(rng));
      if (is_marked[s]) {
        in_words.emplace_back(kMarker);
        out_words.push_back(sym);
      }
      in_words.push_back(std::move(sym));
    }
    set.examples.push_back(make_example(id, join_words(in_words),
                                        join_words(out_words), *set.vocab));
  }
  return set;
}

// Deterministic partition into (train, test); both keep the original ids and
// order.
inline std::pair<ExampleSet, ExampleSet> split(const ExampleSet& set,
                                               double test_fraction,
                                               std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("split: test_fraction must lie in (0, 1)");
  const std::size_t n = set.size();
  const auto n_test = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::uint8_t> in_test(n, 0);
  for (std::size_t i = 0; i < n_test; ++i) in_test[order[i]] = 1;
  ExampleSet train, test;
  for (auto* s : {&train, &test}) {
    s->provenance = set.provenance;
    s->seed = set.seed;
    s->vocab = set.vocab;
  }
  for (std::size_t i = 0; i < n; ++i)
    (in_test[i] ? test : train).examples.push_back(set.examples[i]);
  return {std::move(train), std::move(test)};
}

}  // namespace lastmile

#endif  // LASTMILE_CORPUS_HPP_
