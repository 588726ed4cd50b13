// Copyright 2026 The genrec Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstring>

#include <gtest/gtest.h>

#include "genrec/emb_io.hpp"
#include "test_util.hpp"

namespace genrec {
namespace {

TEST(Emb, HeaderLayoutIsLittleEndian) {
  Mat m(2, 3);
  m << 1, 2, 3, 4, 5, -0.5;
  const std::string bytes = encode_emb(m);
  ASSERT_EQ(bytes.size(), 8u + 4u + 4u + 6u * 4u);
  EXPECT_EQ(bytes.substr(0, 8), "CEMGEMB1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2);
  EXPECT_EQ(static_cast<unsigned char>(bytes[9]), 0);
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 3);
  // 1.0f = 0x3f800000, stored low byte first.
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 0x00);
  EXPECT_EQ(static_cast<unsigned char>(bytes[19]), 0x3f);
  // Row-major: the last value is m(1, 2) = -0.5f = 0xbf000000.
  EXPECT_EQ(static_cast<unsigned char>(bytes[bytes.size() - 1]), 0xbf);
}

TEST(Emb, RoundTripIsExactForF32Values) {
  const Mat m = round_to_f32(testing::random_mat(7, 5, 1));
  testing::TempDir dir;
  write_emb(dir / "m.emb", m);
  const Mat back = read_emb(dir / "m.emb");
  ASSERT_EQ(back.rows(), 7);
  ASSERT_EQ(back.cols(), 5);
  EXPECT_EQ(back, m);
  EXPECT_EQ(encode_emb(back), encode_emb(m));
}

TEST(Emb, EmptyMatrix) {
  const Mat back = decode_emb(encode_emb(Mat(0, 4)));
  EXPECT_EQ(back.rows(), 0);
  EXPECT_EQ(back.cols(), 4);
}

TEST(Emb, RejectsBadMagicAndTruncation) {
  std::string bytes = encode_emb(Mat::Ones(2, 2));
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_emb(bad), ParseError);
  EXPECT_THROW(decode_emb(bytes.substr(0, bytes.size() - 1)), ParseError);
  EXPECT_THROW(decode_emb(bytes.substr(0, 10)), ParseError);
  testing::TempDir dir;
  EXPECT_THROW(read_emb(dir / "nope.emb"), Error);
}

}  // namespace
}  // namespace genrec
