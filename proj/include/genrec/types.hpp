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

#ifndef GENREC_TYPES_HPP_
#define GENREC_TYPES_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace genrec {

// All numerics run in double; artifacts on disk are f32 (see emb_io.hpp).
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

using UserId = std::uint32_t;
using ItemId = std::uint32_t;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class EmptyDatasetError : public Error {
 public:
  using Error::Error;
};

// Bad or inconsistent configuration: shapes, flags, parameter ranges.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Training diverged or a stage produced unusable output.
class NumericError : public Error {
 public:
  using Error::Error;
};

inline bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace genrec

#endif  // GENREC_TYPES_HPP_
