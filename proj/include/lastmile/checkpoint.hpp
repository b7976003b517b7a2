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

#ifndef LASTMILE_CHECKPOINT_HPP_
#define LASTMILE_CHECKPOINT_HPP_

// Binary container of named tensors:
//
//   "LMCK"            4-byte magic
//   u8                format version (1)
//   u32               tensor count
//   per tensor:
//     u32 + bytes     name
//     u32             rank
//     u64 * rank      dimensions
//     f64 * prod(dim) values
//
// All integers and floats little-endian. Model configuration and role tags
// are written next to the container as a "<path>.meta" key=value text file.

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lastmile/error.hpp"
#include "lastmile/seqmodel.hpp"

namespace lastmile {

inline constexpr char kCheckpointMagic[4] = {'L', 'M', 'C', 'K'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> values;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(const std::string& data, const std::string& path) : d_(data), path_(path) {}
  std::uint64_t get(int bytes) {
    if (pos_ + static_cast<std::size_t>(bytes) > d_.size())
      throw IoError("checkpoint '" + path_ + "' is truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(d_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  std::string bytes(std::size_t n) {
    if (pos_ + n > d_.size())
      throw IoError("checkpoint '" + path_ + "' is truncated");
    std::string s = d_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == d_.size(); }

 private:
  const std::string& d_;
  const std::string& path_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace detail

inline std::string encode_checkpoint(const std::vector<NamedArray>& arrays) {
  std::string out(kCheckpointMagic, 4);
  out.push_back(static_cast<char>(kCheckpointVersion));
  detail::put_u32(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    detail::put_u32(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    detail::put_u32(out, static_cast<std::uint32_t>(a.shape.size()));
    std::uint64_t count = 1;
    for (auto dim : a.shape) {
      detail::put_u64(out, dim);
      count *= dim;
    }
    if (count != a.values.size())
      throw ShapeError("checkpoint: '" + a.name + "' shape does not match values");
    for (double v : a.values) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

inline std::vector<NamedArray> decode_checkpoint(const std::string& data,
                                                 const std::string& path = "<memory>") {
  detail::Reader r(data, path);
  if (r.bytes(4) != std::string(kCheckpointMagic, 4))
    throw IoError("'" + path + "' is not a checkpoint (bad magic)");
  const auto version = r.get(1);
  if (version != kCheckpointVersion)
    throw IoError("'" + path + "': unsupported checkpoint version " +
                  std::to_string(version));
  const auto count = r.get(4);
  std::vector<NamedArray> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = r.bytes(r.get(4));
    const auto rank = r.get(4);
    std::uint64_t n = 1;
    for (std::uint64_t k = 0; k < rank; ++k) {
      a.shape.push_back(r.get(8));
      n *= a.shape.back();
    }
    a.values.resize(n);
    for (auto& v : a.values) v = std::bit_cast<double>(r.get(8));
    out.push_back(std::move(a));
  }
  if (!r.done()) throw IoError("'" + path + "': trailing bytes after checkpoint");
  return out;
}

// ---------------------------------------------------------------------------
// Model checkpoints

using Meta = std::map<std::string, std::string>;

inline std::string meta_text(const Meta& meta) {
  std::string out;
  for (const auto& [k, v] : meta) out += k + "=" + v + "\n";
  return out;
}

inline Meta parse_meta(const std::string& text) {
  Meta m;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    m[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return m;
}

inline Meta model_meta(const ModelConfig& c, const std::string& role) {
  std::ostringstream eps, std_;
  eps.precision(17);
  std_.precision(17);
  eps << c.ln_eps;
  std_ << c.init_std;
  return {{"vocab_size", std::to_string(c.vocab_size)},
          {"d_model", std::to_string(c.d_model)},
          {"layers", std::to_string(c.layers)},
          {"heads", std::to_string(c.heads)},
          {"ff", std::to_string(c.ff)},
          {"max_seq", std::to_string(c.max_seq)},
          {"head", head_name(c.head)},
          {"ln_eps", eps.str()},
          {"init_std", std_.str()},
          {"role", role}};
}

inline void save_model(const ModelParams& p, const std::string& path,
                       const std::string& role) {
  std::vector<NamedArray> arrays;
  for (const auto& [name, t] : p.named())
    arrays.push_back({name, {t->rows(), t->cols()},
                      std::vector<double>(t->values().begin(), t->values().end())});
  detail::write_file(path, encode_checkpoint(arrays));
  detail::write_file(path + ".meta", meta_text(model_meta(p.config, role)));
}

struct LoadedModel {
  ModelParams params;
  std::string role;
};

inline LoadedModel load_model(const std::string& path) {
  const Meta m = parse_meta(detail::read_file(path + ".meta"));
  auto need = [&](const char* key) -> const std::string& {
    auto it = m.find(key);
    if (it == m.end())
      throw IoError("'" + path + ".meta' lacks key '" + key + "'");
    return it->second;
  };
  ModelConfig c;
  c.vocab_size = std::stoul(need("vocab_size"));
  c.d_model = std::stoul(need("d_model"));
  c.layers = std::stoul(need("layers"));
  c.heads = std::stoul(need("heads"));
  c.ff = std::stoul(need("ff"));
  c.max_seq = std::stoul(need("max_seq"));
  c.head = need("head") == "scalar" ? HeadKind::kScalar : HeadKind::kLogits;
  c.ln_eps = std::stod(need("ln_eps"));
  c.init_std = std::stod(need("init_std"));
  ModelParams p = init_params(c, 0);
  auto arrays = decode_checkpoint(detail::read_file(path), path);
  auto slots = p.named();
  if (arrays.size() != slots.size())
    throw IoError("'" + path + "': expected " + std::to_string(slots.size()) +
                  " tensors, found " + std::to_string(arrays.size()));
  for (std::size_t i = 0; i < slots.size(); ++i) {
    auto& [name, t] = slots[i];
    const auto& a = arrays[i];
    if (a.name != name || a.shape.size() != 2 || a.shape[0] != t->rows() ||
        a.shape[1] != t->cols())
      throw IoError("'" + path + "': tensor '" + a.name +
                    "' does not match the configured model");
    std::copy(a.values.begin(), a.values.end(), t->mutable_values().begin());
  }
  return {std::move(p), need("role")};
}

}  // namespace lastmile

#endif  // LASTMILE_CHECKPOINT_HPP_
