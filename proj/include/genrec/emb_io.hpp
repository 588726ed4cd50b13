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

// EMB matrix format, used by every matrix artifact:
//
//   bytes 0..7   magic "CEMGEMB1"
//   bytes 8..11  rows, u32 little-endian
//   bytes 12..15 cols, u32 little-endian
//   then rows*cols f32 little-endian, row-major
//
// Values are narrowed to f32 on write; a read of a written matrix yields the
// f32-rounded values exactly.

#ifndef GENREC_EMB_IO_HPP_
#define GENREC_EMB_IO_HPP_

#include <filesystem>
#include <string>
#include <string_view>

#include "genrec/types.hpp"

namespace genrec {

inline constexpr std::string_view kEmbMagic = "CEMGEMB1";

std::string encode_emb(const Mat& m);
Mat decode_emb(std::string_view bytes);

void write_emb(const std::filesystem::path& path, const Mat& m);
Mat read_emb(const std::filesystem::path& path);

// Rounds every entry to the nearest f32, i.e. what a write/read cycle yields.
Mat round_to_f32(const Mat& m);

}  // namespace genrec

#endif  // GENREC_EMB_IO_HPP_
