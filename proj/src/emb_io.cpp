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

#include "genrec/emb_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace genrec {
namespace {

constexpr std::size_t kHeaderBytes = 16;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  }
  return v;
}

}  // namespace

std::string encode_emb(const Mat& m) {
  if (m.rows() > std::numeric_limits<std::uint32_t>::max() ||
      m.cols() > std::numeric_limits<std::uint32_t>::max()) {
    throw ConfigError("EMB: matrix too large");
  }
  std::string out;
  out.reserve(kHeaderBytes + 4 * static_cast<std::size_t>(m.size()));
  out.append(kEmbMagic);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(m(r, c))));
    }
  }
  return out;
}

Mat decode_emb(std::string_view bytes) {
  if (bytes.size() < kHeaderBytes || bytes.substr(0, kEmbMagic.size()) != kEmbMagic) {
    throw ParseError("EMB: bad magic or truncated header");
  }
  const std::uint32_t rows = get_u32(bytes, 8);
  const std::uint32_t cols = get_u32(bytes, 12);
  const std::size_t expected = kHeaderBytes + 4ull * rows * cols;
  if (bytes.size() != expected) {
    throw ParseError("EMB: payload size " + std::to_string(bytes.size()) + " does not match " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
  Mat m(rows, cols);
  std::size_t at = kHeaderBytes;
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c, at += 4) {
      m(r, c) = std::bit_cast<float>(get_u32(bytes, at));
    }
  }
  return m;
}

void write_emb(const std::filesystem::path& path, const Mat& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_emb(m);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

Mat read_emb(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_emb(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

Mat round_to_f32(const Mat& m) { return m.cast<float>().cast<double>(); }

}  // namespace genrec
