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

#include "lastmile/checkpoint.hpp"

#include <gtest/gtest.h>

#include <filesystem>

namespace {

using namespace lastmile;

ModelConfig cfg() {
  ModelConfig c;
  c.vocab_size = 9;
  c.d_model = 8;
  c.layers = 1;
  c.heads = 2;
  c.ff = 16;
  c.max_seq = 16;
  return c;
}

std::string tmp(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("lastmile_ckpt_" + name)).string();
}

TEST(Checkpoint, EncodeDecodeRoundTrip) {
  std::vector<NamedArray> arrays = {{"a", {2, 3}, {1, -2, 3.5, 0, 1e-300, -0.0}},
                                    {"b", {1}, {42}}};
  const std::string bytes = encode_checkpoint(arrays);
  EXPECT_EQ(bytes.substr(0, 4), "LMCK");
  EXPECT_EQ(static_cast<int>(bytes[4]), 1);
  auto back = decode_checkpoint(bytes);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].name, "a");
  EXPECT_EQ(back[0].shape, (std::vector<std::uint64_t>{2, 3}));
  EXPECT_EQ(back[0].values, arrays[0].values);
  EXPECT_TRUE(std::signbit(back[0].values[5]));
}

TEST(Checkpoint, RejectsBadMagicVersionAndTruncation) {
  std::string bytes = encode_checkpoint({{"a", {1, 1}, {1.0}}});
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), IoError);
  bad = bytes;
  bad[4] = 9;
  EXPECT_THROW(decode_checkpoint(bad), IoError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), IoError);
  EXPECT_THROW(decode_checkpoint(bytes + "x"), IoError);
}

TEST(Checkpoint, ModelRoundTripIsBitExact) {
  for (HeadKind head : {HeadKind::kLogits, HeadKind::kScalar}) {
    ModelConfig c = cfg();
    c.head = head;
    ModelParams p = init_params(c, 5);
    const std::string path = tmp(head_name(head) + ".ckpt");
    save_model(p, path, "unit");
    LoadedModel m = load_model(path);
    EXPECT_TRUE(m.params.values_equal(p));
    EXPECT_EQ(m.role, "unit");
    EXPECT_TRUE(std::filesystem::exists(path + ".meta"));
  }
}

TEST(Checkpoint, SavedBytesAreDeterministic) {
  ModelParams p = init_params(cfg(), 5);
  save_model(p, tmp("d1.ckpt"), "x");
  save_model(p, tmp("d2.ckpt"), "x");
  EXPECT_EQ(detail::read_file(tmp("d1.ckpt")), detail::read_file(tmp("d2.ckpt")));
}

TEST(Checkpoint, MissingFileIsIoError) {
  EXPECT_THROW(load_model(tmp("does_not_exist.ckpt")), IoError);
}

}  // namespace
