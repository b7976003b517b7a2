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

#ifndef LASTMILE_VERIFY_HPP_
#define LASTMILE_VERIFY_HPP_

// Self-checks run by `lastmile verify`: finite-difference gradient checks and
// brute-force oracles for the advantage, value-target, metric, negative and
// post-processing code. The oracles below deliberately restate the
// definitions in the plainest possible form instead of reusing library code.

#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lastmile/autodiff.hpp"
#include "lastmile/corpus.hpp"
#include "lastmile/metrics.hpp"
#include "lastmile/mle.hpp"
#include "lastmile/negatives.hpp"
#include "lastmile/ppo.hpp"
#include "lastmile/reward.hpp"
#include "lastmile/seqmodel.hpp"

namespace lastmile::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline std::string fmt(double v) {
  std::ostringstream o;
  o.precision(3);
  o << std::scientific << v;
  return o.str();
}

inline std::vector<double> uniform_vec(std::mt19937_64& rng, std::size_t n, double lo,
                                       double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// A_t = sum_{l=0}^{T-1-t} (gamma*lambda)^l delta_{t+l}
inline std::vector<double> gae_double_sum(const std::vector<double>& r,
                                          const std::vector<double>& v, double gamma,
                                          double lambda) {
  const std::size_t T = r.size();
  std::vector<double> a(T, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t l = 0; t + l < T; ++l) {
      const double delta = r[t + l] + gamma * v[t + l + 1] - v[t + l];
      a[t] += std::pow(gamma * lambda, static_cast<double>(l)) * delta;
    }
  return a;
}

// target_t = sum_{k=t}^{T-1} gamma^{k-t} r_k, target_T = 0
inline std::vector<double> geometric_targets(const std::vector<double>& r, double gamma) {
  std::vector<double> out(r.size() + 1, 0.0);
  for (std::size_t t = 0; t < r.size(); ++t)
    for (std::size_t k = t; k < r.size(); ++k)
      out[t] += std::pow(gamma, static_cast<double>(k - t)) * r[k];
  return out;
}

inline std::vector<std::string> words_of(const std::string& s) {
  std::vector<std::string> w;
  std::istringstream in(s);
  std::string x;
  while (in >> x) w.push_back(x);
  return w;
}

// Toy problem for gradient checks: a handful of very short examples and a
// model small enough to difference every coordinate.
struct Toy {
  ExampleSet data;
  ModelParams policy, value, reward;
  std::vector<RewardDatum> reward_data;
};

inline Toy make_toy(std::uint64_t seed) {
  TaskConfig task{.alphabet_size = 6, .input_min = 4, .input_max = 6,
                  .marked_min = 1, .marked_max = 2, .input_cap = 8};
  Toy toy;
  toy.data = gen_extraction_task(seed, 4, task);
  ModelConfig mc{.vocab_size = toy.data.vocab->size(), .d_model = 8, .layers = 2,
                 .heads = 2, .ff = 12, .max_seq = 24, .init_std = 0.3};
  toy.policy = init_params(mc, derive_seed(seed, 1));
  toy.value = with_head(toy.policy, HeadKind::kScalar, derive_seed(seed, 2));
  toy.reward = with_head(init_params(mc, derive_seed(seed, 3)), HeadKind::kScalar,
                         derive_seed(seed, 4));
  // One positive and one negative of each of three categories.
  auto all = build_reward_dataset(toy.data, derive_seed(seed, 5), 6);
  std::map<std::string, bool> seen;
  for (auto& d : all)
    if (!seen[label_name(d)] && toy.reward_data.size() < 4) {
      seen[label_name(d)] = true;
      toy.reward_data.push_back(d);
    }
  return toy;
}

}  // namespace detail

// Gradient checks of the policy surrogate, value loss and reward loss summed
// over a 4-example toy batch, exactly as the trainers assemble them.
inline std::vector<CheckResult> gradient_checks(double tolerance = 1e-4,
                                                std::uint64_t seed = 7) {
  auto toy = detail::make_toy(seed);
  PPOConfig cfg;
  cfg.output_cap = 6;
  RewardFn fn{toy.reward, kLengthPenalty, 6, true};
  std::vector<Trajectory> trajs;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto mode = i % 2 == 0 ? RolloutMode::kSampled : RolloutMode::kGroundTruth;
    auto t = rollout(toy.policy, toy.value, fn,
                     std::span<const Example>(&toy.data.examples[i], 1), mode, cfg,
                     derive_seed(seed, 10 + i));
    trajs.push_back(std::move(t.front()));
  }
  std::size_t tokens = 0, states = 0;
  for (const auto& t : trajs) {
    tokens += t.length();
    states += t.length() + 1;
  }

  auto policy_loss = [&] {
    Tensor total = Tensor::scalar(0.0);
    for (const auto& t : trajs) {
      Tensor obj = ppo_objective(action_log_probs(toy.policy, t.input, t.actions),
                                 t.old_log_probs, t.advantages, cfg.clip_eps);
      total = ad::add(total, ad::scale(obj, -static_cast<double>(t.length()) /
                                                static_cast<double>(tokens)));
    }
    return total;
  };
  auto v_loss = [&] {
    Tensor total = Tensor::scalar(0.0);
    for (const auto& t : trajs) {
      Tensor l = value_loss(state_values(toy.value, t.input, t.actions), t.value_targets);
      total = ad::add(total, ad::scale(l, static_cast<double>(t.length() + 1) /
                                              static_cast<double>(states)));
    }
    return total;
  };
  std::size_t reward_tokens = 0;
  for (const auto& d : toy.reward_data) reward_tokens += d.example.output_tokens.size();
  auto r_loss = [&] {
    Tensor total = Tensor::scalar(0.0);
    for (const auto& d : toy.reward_data)
      total = ad::add(total, ad::scale(reward_datum_loss(toy.reward, d),
                                       1.0 / static_cast<double>(reward_tokens)));
    return total;
  };

  std::vector<CheckResult> out;
  auto run = [&](const char* name, auto&& f, const ModelParams& p) {
    const double err = ad::grad_check<double>(f, p.tensors(), 1e-5, 100000, seed);
    out.push_back({name, err < tolerance, "max relative error " + detail::fmt(err) +
                                              " over " + std::to_string(p.num_values()) +
                                              " coordinates"});
  };
  run("grad-check policy loss", policy_loss, toy.policy);
  run("grad-check value loss", v_loss, toy.value);
  run("grad-check reward loss", r_loss, toy.reward);
  return out;
}

inline CheckResult gae_oracle(std::size_t cases = 100, std::uint64_t seed = 11) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len(1, 8);
  const double gammas[] = {0.5, 0.99999};
  const double lambdas[] = {0.0, 0.95, 1.0};
  double worst = 0;
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t T = len(rng);
    const auto r = detail::uniform_vec(rng, T, -2, 2);
    const auto v = detail::uniform_vec(rng, T + 1, -2, 2);
    const double g = gammas[c % 2], l = lambdas[(c / 2) % 3];
    const auto got = gae(r, v, g, l);
    const auto want = detail::gae_double_sum(r, v, g, l);
    for (std::size_t t = 0; t < T; ++t) worst = std::max(worst, std::abs(got[t] - want[t]));
  }
  return {"gae vs direct double sum", worst <= 1e-10,
          std::to_string(cases) + " cases, max abs error " + detail::fmt(worst)};
}

inline CheckResult value_target_oracle(std::size_t cases = 100, std::uint64_t seed = 13) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len(1, 8);
  const double gammas[] = {0.5, 0.99999};
  double worst = 0;
  bool terminal_zero = true;
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t T = len(rng);
    const auto r = detail::uniform_vec(rng, T, -2, 2);
    const auto got = value_targets(r, gammas[c % 2]);
    const auto want = detail::geometric_targets(r, gammas[c % 2]);
    if (got.size() != T + 1 || got[T] != 0.0) terminal_zero = false;
    for (std::size_t t = 0; t < std::min(got.size(), want.size()); ++t)
      worst = std::max(worst, std::abs(got[t] - want[t]));
  }
  return {"value targets vs geometric sums", worst <= 1e-10 && terminal_zero,
          std::to_string(cases) + " cases, max abs error " + detail::fmt(worst) +
              (terminal_zero ? ", terminal target 0" : ", terminal target NOT 0")};
}

// Worked examples, checked to within a few units in the last place of the
// hand-derived fractions.
inline CheckResult metric_examples() {
  std::vector<std::string> fails;
  auto near = [](double a, double b) { return std::abs(a - b) <= 4 * 1e-16 * std::max(1.0, std::abs(b)); };
  auto expect = [&](const char* what, const RougeTriple& t, double p, double r, double f) {
    if (!near(t.precision, p) || !near(t.recall, r) || !near(t.f1, f)) {
      std::ostringstream o;
      o.precision(17);
      o << what << " gave P=" << t.precision << " R=" << t.recall << " F1=" << t.f1;
      fails.push_back(o.str());
    }
  };
  expect("rouge1 the cat sat", rouge_n("the cat sat", "the cat slept", 1), 2.0 / 3, 2.0 / 3, 2.0 / 3);
  expect("rouge2 the cat sat", rouge_n("the cat sat", "the cat slept", 2), 0.5, 0.5, 0.5);
  expect("rouge1 identical", rouge_n("a b c d", "a b c d", 1), 1, 1, 1);
  expect("rouge2 identical", rouge_n("a b c d", "a b c d", 2), 1, 1, 1);
  expect("rouge1 disjoint", rouge_n("a b", "c d", 1), 0, 0, 0);
  expect("rouge2 disjoint", rouge_n("a b", "c d", 2), 0, 0, 0);
  expect("rougeL the cat sat", rouge_l("the cat sat", "the cat slept"), 2.0 / 3, 2.0 / 3, 2.0 / 3);
  if (rouge_l("x a y b z c", "a b c").recall != 1.0) fails.push_back("rougeL subsequence recall");
  expect("rougeL empty pred", rouge_l("", "a b"), 0, 0, 0);
  expect("length_adjust longer", length_adjust(make_triple(0.5, 1.0), {4, 2}), 0.5, 0.5, 0.5);
  expect("length_adjust shorter", length_adjust(make_triple(1.0, 0.25), {1, 4}), 0.25, 0.25, 0.25);
  expect("length_adjust equal", length_adjust(make_triple(0.3, 0.6), {5, 5}), 0.3, 0.6,
         harmonic_mean(0.3, 0.6));
  expect("length_adjust np=0", length_adjust(make_triple(0.3, 0.6), {0, 5}), 0, 0, 0);
  if (excess_length({"a b c"}, {"a"}) != 2.0) fails.push_back("excess a b c vs a");
  if (excess_length({"a b", "c"}, {"a b", "c"}) != 0.0) fails.push_back("excess identical");
  const auto one = evaluate({"a b c"}, {"a b c"});
  for (std::size_t i = 0; i < 18; ++i)
    if (one.values[i] != 1.0) fails.push_back("evaluate identical row " + report_rows()[i]);
  if (one.values.size() != 19) fails.push_back("report row count");
  if (evaluate({"a b", "c d"}, {"a b", "x y"}).get("rouge1-F1") != 0.5)
    fails.push_back("evaluate averaging");
  std::string detail = fails.empty() ? "all worked examples match" : fails.front();
  return {"metric worked examples", fails.empty(), detail};
}

// On random whitespace-token pairs: la-rouge1 precision equals recall (to
// 1e-12), no adjusted value exceeds its raw value, and everything is in [0,1].
inline CheckResult metric_properties(std::size_t pairs = 200, std::uint64_t seed = 17) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> len(0, 12), tok(0, 7);
  auto random_text = [&] {
    std::string s;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) s += (i ? " " : "") + std::string(1, static_cast<char>('a' + tok(rng)));
    return s;
  };
  double worst_gap = 0;
  bool bounded = true, shrinks = true;
  for (std::size_t i = 0; i < pairs; ++i) {
    const std::string p = random_text(), r = random_text();
    const LengthPair lp{detail::words_of(p).size(), detail::words_of(r).size()};
    for (std::size_t n : {1, 2, 3}) {
      const RougeTriple raw = n == 3 ? rouge_l(p, r) : rouge_n(p, r, n);
      const RougeTriple la = length_adjust(raw, lp);
      if (n == 1) worst_gap = std::max(worst_gap, std::abs(la.precision - la.recall));
      for (double v : {raw.precision, raw.recall, raw.f1, la.precision, la.recall, la.f1})
        if (!(v >= 0 && v <= 1)) bounded = false;
      if (la.precision > raw.precision || la.recall > raw.recall || la.f1 > raw.f1 + 1e-15)
        shrinks = false;
    }
  }
  return {"metric properties on random pairs", worst_gap <= 1e-12 && bounded && shrinks,
          std::to_string(pairs) + " pairs, max |la-P1 - la-R1| " + detail::fmt(worst_gap) +
              (bounded ? "" : ", value outside [0,1]") +
              (shrinks ? "" : ", adjusted value above raw")};
}

inline std::vector<CheckResult> negative_properties(std::size_t n = 1000,
                                                    std::uint64_t seed = 19) {
  const ExampleSet pos = gen_extraction_task(seed, n);
  std::map<TokenSeq, std::size_t> output_count;
  for (const auto& ex : pos.examples) ++output_count[ex.output_tokens];
  std::vector<CheckResult> out;

  {
    const auto neg = synthesize(NegCategory::kShuffled, pos, derive_seed(seed, 1));
    std::size_t bad = 0;
    for (std::size_t i = 0; i < n; ++i) {
      auto a = std::vector<TokenId>(output_words(neg[i].example).begin(), output_words(neg[i].example).end());
      auto b = std::vector<TokenId>(output_words(pos[i]).begin(), output_words(pos[i]).end());
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      if (a != b || neg[i].example.output_tokens.back() != kEos) ++bad;
    }
    out.push_back({"shuffled keeps the word multiset", bad == 0 && neg.size() == n,
                   std::to_string(bad) + " of " + std::to_string(neg.size()) + " violate"});
  }
  {
    const auto neg = synthesize(NegCategory::kRePaired, pos, derive_seed(seed, 2));
    std::size_t fixed = 0, foreign = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& o = neg[i].example.output_tokens;
      const auto it = output_count.find(o);
      if (it == output_count.end()) ++foreign;
      // An output that equals the example's own and occurs nowhere else can
      // only have come from the example itself.
      else if (o == pos[i].output_tokens && it->second == 1) ++fixed;
    }
    out.push_back({"re-paired has no fixed points", fixed == 0 && foreign == 0 && neg.size() == n,
                   std::to_string(fixed) + " fixed points, " + std::to_string(foreign) +
                       " outputs not drawn from the set"});
  }
  {
    const auto neg = synthesize(NegCategory::kInputEcho, pos, derive_seed(seed, 3));
    std::size_t bad = 0;
    for (std::size_t i = 0; i < n; ++i) {
      // Input tokens without BOS are exactly input words followed by EOS.
      const TokenSeq want(pos[i].input_tokens.begin() + 1, pos[i].input_tokens.end());
      if (neg[i].example.output_tokens != want ||
          neg[i].example.output_text != pos[i].input_text)
        ++bad;
    }
    out.push_back({"input echo equals its input", bad == 0 && neg.size() == n,
                   std::to_string(bad) + " of " + std::to_string(neg.size()) + " differ"});
  }
  {
    const auto neg = synthesize(NegCategory::kRepetitiveTail, pos, derive_seed(seed, 4));
    std::size_t bad = 0;
    for (const auto& d : neg) {
      const auto& o = d.example.output_tokens;
      bool found = false;
      for (std::size_t p = 1; p <= 5 && !found; ++p) {
        // Length of the longest p-periodic suffix.
        std::size_t run = std::min(p, o.size());
        while (run < o.size() && o[o.size() - 1 - run] == o[o.size() - 1 - run + p]) ++run;
        found = run >= 2 * p && 2 * run >= o.size();
      }
      if (!found || std::find(o.begin(), o.end(), kEos) != o.end()) ++bad;
    }
    out.push_back({"repetitive tail ends in a short repeated block", bad == 0 && neg.size() == n,
                   std::to_string(bad) + " of " + std::to_string(neg.size()) + " lack one"});
  }
  {
    const auto data = build_reward_dataset(pos, derive_seed(seed, 5));
    std::map<std::string, std::size_t> counts;
    for (const auto& d : data) ++counts[label_name(d)];
    bool ok = counts.size() == 6;
    std::string detail;
    for (const auto& [label, c] : counts) {
      ok = ok && c == n;
      detail += label + "=" + std::to_string(c) + " ";
    }
    out.push_back({"class counts equal the positive count", ok, detail});
  }
  return out;
}

inline CheckResult postprocess_checks(std::size_t corpus = 1000, std::uint64_t seed = 23) {
  std::vector<std::string> fails;
  auto eq = [&](const std::string& got, const std::string& want, const char* what) {
    if (got != want) fails.push_back(what);
  };
  eq(strip_sure_preamble("Sure, here is a summary:\nAlice met Bob."), "Alice met Bob.", "strip example");
  eq(strip_sure_preamble("Sure, but no newline"), "Sure, but no newline", "strip no newline");
  eq(strip_sure_preamble("Alice met Bob."), "Alice met Bob.", "strip no preamble");
  eq(truncate_after_newline("A summary.\nA summary.\nA summ"), "A summary.", "truncate example");
  eq(truncate_after_newline("no newline here"), "no newline here", "truncate no newline");
  eq(truncate_after_newline("\nleading newline"), "", "truncate leading newline");

  std::mt19937_64 rng(seed);
  const std::vector<std::string> pieces = {"Sure,", "Sure", " ", "\n", "a", "b.", ",", "Sure, "};
  std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1), len(0, 10);
  std::size_t not_idempotent = 0, lengthened = 0;
  for (std::size_t i = 0; i < corpus; ++i) {
    std::string s;
    for (std::size_t k = len(rng); k-- > 0;) s += pieces[pick(rng)];
    const std::string a = strip_sure_preamble(s), b = truncate_after_newline(s);
    if (strip_sure_preamble(a) != a || truncate_after_newline(b) != b) ++not_idempotent;
    if (b.size() > s.size()) ++lengthened;
  }
  if (not_idempotent) fails.push_back(std::to_string(not_idempotent) + " strings not idempotent");
  if (lengthened) fails.push_back(std::to_string(lengthened) + " strings lengthened");
  return {"post-processing examples and idempotence", fails.empty(),
          fails.empty() ? "examples exact, " + std::to_string(corpus) + " random strings idempotent"
                        : fails.front()};
}

inline std::vector<CheckResult> run_all() {
  std::vector<CheckResult> out = gradient_checks();
  out.push_back(gae_oracle());
  out.push_back(value_target_oracle());
  out.push_back(metric_examples());
  out.push_back(metric_properties());
  for (auto& c : negative_properties()) out.push_back(std::move(c));
  out.push_back(postprocess_checks());
  return out;
}

}  // namespace lastmile::verify

#endif  // LASTMILE_VERIFY_HPP_
