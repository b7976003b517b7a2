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

#ifndef LASTMILE_SEQMODEL_HPP_
#define LASTMILE_SEQMODEL_HPP_

// Small pre-norm causal transformer. One backbone, two heads: token logits
// for the policy / MLE / base models, and a per-position scalar for the
// reward and value networks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lastmile/autodiff.hpp"
#include "lastmile/corpus.hpp"
#include "lastmile/error.hpp"
#include "lastmile/kernels.hpp"
#include "lastmile/seeding.hpp"

namespace lastmile {

using Real = double;
using Tensor = ad::Tensor<Real>;

enum class HeadKind { kLogits, kScalar };

inline std::string head_name(HeadKind h) {
  return h == HeadKind::kLogits ? "logits" : "scalar";
}

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t ff = 256;
  std::size_t max_seq = 256;
  HeadKind head = HeadKind::kLogits;
  Real init_std = 0.02;
  Real ln_eps = 1e-5;

  std::size_t out_dim() const { return head == HeadKind::kLogits ? vocab_size : 1; }
  std::size_t head_dim() const { return d_model / heads; }

  void validate() const {
    if (vocab_size <= kNumReserved)
      throw ConfigError("model: vocab_size must exceed the reserved ids");
    if (d_model == 0 || layers == 0 || heads == 0 || ff == 0 || max_seq == 0)
      throw ConfigError("model: dimensions must be positive");
    if (d_model % heads != 0)
      throw ConfigError("model: d_model " + std::to_string(d_model) +
                        " not divisible by heads " + std::to_string(heads));
    if (!(init_std > 0)) throw ConfigError("model: init_std must be positive");
  }

  bool operator==(const ModelConfig&) const = default;
};

struct LayerParams {
  Tensor ln1_g, ln1_b;
  Tensor w_qkv, b_qkv;
  Tensor w_o, b_o;
  Tensor ln2_g, ln2_b;
  Tensor w_ff1, b_ff1;
  Tensor w_ff2, b_ff2;
};

class ModelParams {
 public:
  ModelConfig config;
  Tensor tok_emb, pos_emb;
  std::vector<LayerParams> layers;
  Tensor lnf_g, lnf_b;
  Tensor head_w, head_b;

  ModelParams() = default;
  ModelParams(ModelParams&&) noexcept = default;
  ModelParams& operator=(ModelParams&&) noexcept = default;
  // Copies are deep: the copy owns fresh tensors.
  ModelParams(const ModelParams& other) { copy_from(other); }
  ModelParams& operator=(const ModelParams& other) {
    if (this != &other) copy_from(other);
    return *this;
  }

  // Every tensor with a stable name, in a fixed order.
  std::vector<std::pair<std::string, Tensor*>> named() {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.emplace_back("tok_emb", &tok_emb);
    out.emplace_back("pos_emb", &pos_emb);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto& L = layers[l];
      const std::string p = "layer" + std::to_string(l) + ".";
      out.emplace_back(p + "ln1_g", &L.ln1_g);
      out.emplace_back(p + "ln1_b", &L.ln1_b);
      out.emplace_back(p + "w_qkv", &L.w_qkv);
      out.emplace_back(p + "b_qkv", &L.b_qkv);
      out.emplace_back(p + "w_o", &L.w_o);
      out.emplace_back(p + "b_o", &L.b_o);
      out.emplace_back(p + "ln2_g", &L.ln2_g);
      out.emplace_back(p + "ln2_b", &L.ln2_b);
      out.emplace_back(p + "w_ff1", &L.w_ff1);
      out.emplace_back(p + "b_ff1", &L.b_ff1);
      out.emplace_back(p + "w_ff2", &L.w_ff2);
      out.emplace_back(p + "b_ff2", &L.b_ff2);
    }
    out.emplace_back("lnf_g", &lnf_g);
    out.emplace_back("lnf_b", &lnf_b);
    out.emplace_back("head_w", &head_w);
    out.emplace_back("head_b", &head_b);
    return out;
  }

  std::vector<std::pair<std::string, const Tensor*>> named() const {
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (auto& [n, t] : const_cast<ModelParams*>(this)->named())
      out.emplace_back(n, t);
    return out;
  }

  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    for (auto& [n, t] : named()) out.push_back(*t);
    return out;
  }

  std::size_t num_values() const {
    std::size_t n = 0;
    for (auto& [name, t] : named()) n += t->size();
    return n;
  }

  void zero_grad() {
    for (auto& [n, t] : named()) t->zero_grad();
  }

  bool values_equal(const ModelParams& other) const {
    if (!(config == other.config)) return false;
    const auto a = named();
    const auto b = other.named();
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!std::equal(a[i].second->values().begin(), a[i].second->values().end(),
                      b[i].second->values().begin(), b[i].second->values().end()))
        return false;
    return true;
  }

 private:
  void copy_from(const ModelParams& other) {
    config = other.config;
    layers.assign(other.layers.size(), LayerParams{});
    auto dst = named();
    const auto src = other.named();
    for (std::size_t i = 0; i < dst.size(); ++i)
      *dst[i].second = src[i].second->clone();
  }
};

// Whether a parameter receives decoupled weight decay: matrices only.
inline bool decays(const std::string& name) {
  const auto dot = name.rfind('.');
  const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
  return leaf.rfind("w_", 0) == 0 || leaf == "tok_emb" || leaf == "pos_emb" ||
         leaf == "head_w";
}

namespace detail {

inline Tensor normal_tensor(std::size_t r, std::size_t c, Real stddev,
                            std::mt19937_64& rng) {
  std::normal_distribution<Real> dist(0.0, stddev);
  std::vector<Real> v(r * c);
  for (auto& x : v) x = dist(rng);
  return Tensor::from_values(r, c, std::move(v), true);
}

inline Tensor filled(std::size_t r, std::size_t c, Real value) {
  return Tensor::from_values(r, c, std::vector<Real>(r * c, value), true);
}

inline void init_head(ModelParams& p, std::mt19937_64& rng) {
  const auto& c = p.config;
  p.head_w = normal_tensor(c.d_model, c.out_dim(), c.init_std, rng);
  p.head_b = filled(1, c.out_dim(), 0.0);
}

}  // namespace detail

// Scaled-normal weights, unit layer-norm gains, zero biases. Residual output
// projections are shrunk by 1/sqrt(2 * layers).
inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.config = cfg;
  const std::size_t d = cfg.d_model;
  const Real resid_std =
      cfg.init_std / std::sqrt(2.0 * static_cast<Real>(cfg.layers));
  p.tok_emb = detail::normal_tensor(cfg.vocab_size, d, cfg.init_std, rng);
  p.pos_emb = detail::normal_tensor(cfg.max_seq, d, cfg.init_std, rng);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    LayerParams L;
    L.ln1_g = detail::filled(1, d, 1.0);
    L.ln1_b = detail::filled(1, d, 0.0);
    L.w_qkv = detail::normal_tensor(d, 3 * d, cfg.init_std, rng);
    L.b_qkv = detail::filled(1, 3 * d, 0.0);
    L.w_o = detail::normal_tensor(d, d, resid_std, rng);
    L.b_o = detail::filled(1, d, 0.0);
    L.ln2_g = detail::filled(1, d, 1.0);
    L.ln2_b = detail::filled(1, d, 0.0);
    L.w_ff1 = detail::normal_tensor(d, cfg.ff, cfg.init_std, rng);
    L.b_ff1 = detail::filled(1, cfg.ff, 0.0);
    L.w_ff2 = detail::normal_tensor(cfg.ff, d, resid_std, rng);
    L.b_ff2 = detail::filled(1, d, 0.0);
    p.layers.push_back(std::move(L));
  }
  p.lnf_g = detail::filled(1, d, 1.0);
  p.lnf_b = detail::filled(1, d, 0.0);
  detail::init_head(p, rng);
  return p;
}

// Copy of the backbone of `source` with a freshly initialized head of kind
// `head`.
inline ModelParams with_head(const ModelParams& source, HeadKind head,
                             std::uint64_t seed) {
  ModelParams p = source;
  p.config.head = head;
  std::mt19937_64 rng(seed);
  detail::init_head(p, rng);
  return p;
}

// Per-position outputs, shape [tokens, out_dim]. Records on the active tape
// when there is one.
inline Tensor forward(const ModelParams& p, std::span<const TokenId> tokens) {
  const auto& cfg = p.config;
  const std::size_t n = tokens.size();
  if (n == 0) throw LengthError("forward: empty token sequence");
  if (n > cfg.max_seq)
    throw LengthError("forward: " + std::to_string(n) +
                      " tokens exceed max_seq " + std::to_string(cfg.max_seq));
  std::vector<TokenId> positions(n);
  for (std::size_t i = 0; i < n; ++i) positions[i] = static_cast<TokenId>(i);
  Tensor x = ad::add(ad::embedding(p.tok_emb, tokens),
                     ad::embedding(p.pos_emb, std::span<const TokenId>(positions)));
  const std::size_t d = cfg.d_model;
  const std::size_t dh = cfg.head_dim();
  const Real attn_scale = Real(1) / std::sqrt(static_cast<Real>(dh));
  for (const auto& L : p.layers) {
    Tensor h = ad::layer_norm(x, L.ln1_g, L.ln1_b, cfg.ln_eps);
    Tensor qkv = ad::linear(h, L.w_qkv, L.b_qkv);
    std::vector<Tensor> heads;
    heads.reserve(cfg.heads);
    for (std::size_t hd = 0; hd < cfg.heads; ++hd) {
      Tensor q = ad::slice_cols(qkv, hd * dh, (hd + 1) * dh);
      Tensor k = ad::slice_cols(qkv, d + hd * dh, d + (hd + 1) * dh);
      Tensor v = ad::slice_cols(qkv, 2 * d + hd * dh, 2 * d + (hd + 1) * dh);
      Tensor scores = ad::scale(ad::matmul(q, ad::transpose(k)), attn_scale);
      Tensor probs = ad::softmax_rows(ad::causal_mask(scores));
      heads.push_back(ad::matmul(probs, v));
    }
    Tensor attn = ad::linear(ad::concat_cols(heads), L.w_o, L.b_o);
    x = ad::add(x, attn);
    Tensor h2 = ad::layer_norm(x, L.ln2_g, L.ln2_b, cfg.ln_eps);
    Tensor f = ad::gelu(ad::linear(h2, L.w_ff1, L.b_ff1));
    x = ad::add(x, ad::linear(f, L.w_ff2, L.b_ff2));
  }
  x = ad::layer_norm(x, p.lnf_g, p.lnf_b, cfg.ln_eps);
  return ad::linear(x, p.head_w, p.head_b);
}

inline Tensor forward_logits(const ModelParams& p, std::span<const TokenId> tokens) {
  if (p.config.head != HeadKind::kLogits)
    throw ConfigError("forward_logits: model has a scalar head");
  return forward(p, tokens);
}

// Shape [tokens, 1].
inline Tensor forward_scalar(const ModelParams& p, std::span<const TokenId> tokens) {
  if (p.config.head != HeadKind::kScalar)
    throw ConfigError("forward_scalar: model has a logits head");
  return forward(p, tokens);
}

// Row t of `rows` scores actions[t]; returns log softmax(rows[t])[actions[t]]
// as a [T,1] tensor.
inline Tensor log_prob(const Tensor& rows, std::span<const TokenId> actions) {
  if (rows.rows() != actions.size())
    throw ContractError("log_prob: " + std::to_string(rows.rows()) +
                        " logit rows for " + std::to_string(actions.size()) +
                        " actions");
  return ad::gather(ad::log_softmax_rows(rows), actions);
}

inline TokenSeq concat_tokens(std::span<const TokenId> a, std::span<const TokenId> b) {
  TokenSeq out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// log pi(actions[t] | prompt, actions[<t]) for every t, as a [T,1] tensor.
inline Tensor action_log_probs(const ModelParams& policy,
                               std::span<const TokenId> prompt,
                               std::span<const TokenId> actions) {
  if (prompt.empty() || actions.empty())
    throw ContractError("action_log_probs: empty prompt or actions");
  // The final action is scored, never consumed.
  const TokenSeq seq = concat_tokens(prompt, actions.first(actions.size() - 1));
  Tensor logits = forward_logits(policy, seq);
  Tensor rows = ad::slice_rows(logits, prompt.size() - 1, seq.size());
  return log_prob(rows, actions);
}

// Key/value cache decoder producing the same per-position outputs as
// forward(), bit for bit, one token at a time.
class IncrementalDecoder {
 public:
  explicit IncrementalDecoder(const ModelParams& params) : p_(params) {
    const auto& c = p_.config;
    keys_.resize(c.layers);
    vals_.resize(c.layers);
    out_.resize(c.out_dim());
  }

  std::size_t position() const { return pos_; }

  std::span<const Real> step(TokenId token) {
    const auto& c = p_.config;
    if (pos_ >= c.max_seq)
      throw LengthError("decoder: sequence exceeds max_seq " +
                        std::to_string(c.max_seq));
    if (token < 0 || static_cast<std::size_t>(token) >= c.vocab_size)
      throw ContractError("decoder: token " + std::to_string(token) +
                          " outside vocabulary");
    const std::size_t d = c.d_model, dh = c.head_dim();
    const Real attn_scale = Real(1) / std::sqrt(static_cast<Real>(dh));
    std::vector<Real> x(d), h(d), qkv(3 * d), cat(d), tmp(d), f(c.ff);
    const Real* te = p_.tok_emb.values().data() + static_cast<std::size_t>(token) * d;
    const Real* pe = p_.pos_emb.values().data() + pos_ * d;
    for (std::size_t j = 0; j < d; ++j) x[j] = te[j] + pe[j];
    const std::size_t n = pos_ + 1;
    std::vector<Real> scores(n), probs(n);
    for (std::size_t l = 0; l < c.layers; ++l) {
      const auto& L = p_.layers[l];
      kernels::layer_norm_row(x.data(), L.ln1_g.values().data(),
                              L.ln1_b.values().data(), h.data(), d, c.ln_eps,
                              static_cast<Real*>(nullptr));
      kernels::linear(h.data(), L.w_qkv.values().data(), L.b_qkv.values().data(),
                      qkv.data(), 1, d, 3 * d);
      keys_[l].insert(keys_[l].end(), qkv.begin() + static_cast<std::ptrdiff_t>(d),
                      qkv.begin() + static_cast<std::ptrdiff_t>(2 * d));
      vals_[l].insert(vals_[l].end(), qkv.begin() + static_cast<std::ptrdiff_t>(2 * d),
                      qkv.end());
      for (std::size_t hd = 0; hd < c.heads; ++hd) {
        const Real* q = qkv.data() + hd * dh;
        for (std::size_t j = 0; j < n; ++j) {
          const Real* k = keys_[l].data() + j * d + hd * dh;
          Real s = 0;
          for (std::size_t e = 0; e < dh; ++e) s += q[e] * k[e];
          scores[j] = s * attn_scale;
        }
        kernels::softmax_row(scores.data(), probs.data(), n);
        Real* o = cat.data() + hd * dh;
        std::fill(o, o + dh, Real(0));
        for (std::size_t j = 0; j < n; ++j) {
          const Real* v = vals_[l].data() + j * d + hd * dh;
          for (std::size_t e = 0; e < dh; ++e) o[e] += probs[j] * v[e];
        }
      }
      kernels::linear(cat.data(), L.w_o.values().data(), L.b_o.values().data(),
                      tmp.data(), 1, d, d);
      for (std::size_t j = 0; j < d; ++j) x[j] = x[j] + tmp[j];
      kernels::layer_norm_row(x.data(), L.ln2_g.values().data(),
                              L.ln2_b.values().data(), h.data(), d, c.ln_eps,
                              static_cast<Real*>(nullptr));
      kernels::linear(h.data(), L.w_ff1.values().data(), L.b_ff1.values().data(),
                      f.data(), 1, d, c.ff);
      for (auto& v : f) v = kernels::gelu(v);
      kernels::linear(f.data(), L.w_ff2.values().data(), L.b_ff2.values().data(),
                      tmp.data(), 1, c.ff, d);
      for (std::size_t j = 0; j < d; ++j) x[j] = x[j] + tmp[j];
    }
    kernels::layer_norm_row(x.data(), p_.lnf_g.values().data(),
                            p_.lnf_b.values().data(), h.data(), d, c.ln_eps,
                            static_cast<Real*>(nullptr));
    kernels::linear(h.data(), p_.head_w.values().data(), p_.head_b.values().data(),
                    out_.data(), 1, d, c.out_dim());
    ++pos_;
    return out_;
  }

 private:
  const ModelParams& p_;
  std::size_t pos_ = 0;
  std::vector<std::vector<Real>> keys_, vals_;
  std::vector<Real> out_;
};

namespace detail {

inline TokenId argmax(std::span<const Real> row) {
  return static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
}

template <class Pick>
TokenSeq decode_loop(const ModelParams& p, std::span<const TokenId> input,
                     std::size_t max_len, Pick&& pick) {
  if (p.config.head != HeadKind::kLogits)
    throw ConfigError("decode: model has a scalar head");
  if (max_len == 0) throw ConfigError("decode: max_len must be >= 1");
  if (input.empty()) throw ContractError("decode: empty input");
  if (input.size() + max_len - 1 > p.config.max_seq)
    throw LengthError("decode: input of " + std::to_string(input.size()) +
                      " tokens plus max_len " + std::to_string(max_len) +
                      " exceeds max_seq");
  IncrementalDecoder dec(p);
  std::span<const Real> row;
  for (TokenId t : input) row = dec.step(t);
  TokenSeq out;
  for (;;) {
    const TokenId next = pick(row);
    out.push_back(next);
    if (next == kEos || out.size() >= max_len) break;
    row = dec.step(next);
  }
  return out;
}

}  // namespace detail

inline TokenSeq greedy(const ModelParams& p, std::span<const TokenId> input,
                       std::size_t max_len) {
  return detail::decode_loop(p, input, max_len, [](std::span<const Real> row) {
    return detail::argmax(row);
  });
}

// Ancestral sampling at `temperature`; temperature 0 is greedy decoding.
inline TokenSeq sample(const ModelParams& p, std::span<const TokenId> input,
                       std::size_t max_len, Real temperature, std::uint64_t seed) {
  if (temperature < 0) throw ConfigError("sample: negative temperature");
  if (temperature == 0) return greedy(p, input, max_len);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Real> unit(0.0, 1.0);
  std::vector<Real> scaled, probs;
  return detail::decode_loop(p, input, max_len, [&](std::span<const Real> row) {
    scaled.resize(row.size());
    probs.resize(row.size());
    for (std::size_t i = 0; i < row.size(); ++i) scaled[i] = row[i] / temperature;
    kernels::softmax_row(scaled.data(), probs.data(), row.size());
    const Real u = unit(rng);
    Real acc = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return static_cast<TokenId>(i);
    }
    return static_cast<TokenId>(probs.size() - 1);
  });
}

}  // namespace lastmile

#endif  // LASTMILE_SEQMODEL_HPP_
