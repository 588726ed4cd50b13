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

#ifndef GENREC_OPTIM_HPP_
#define GENREC_OPTIM_HPP_

#include <cstdint>
#include <vector>

#include "genrec/types.hpp"

namespace genrec {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
  double clip_norm = 0.0;     // global-norm clip, 0 disables
};

// Adam with bias correction. Moment buffers are sized on the first step and
// follow the order of the parameter list, which must stay fixed.
class Adam {
 public:
  explicit Adam(AdamOptions opts) : opts_(opts) {}

  // Returns the global gradient norm before clipping.
  double step(const std::vector<Mat*>& params, const std::vector<const Mat*>& grads);

  std::uint64_t steps() const { return t_; }
  const AdamOptions& options() const { return opts_; }
  void set_lr(double lr) { opts_.lr = lr; }

 private:
  AdamOptions opts_;
  std::uint64_t t_ = 0;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
};

double global_norm(const std::vector<const Mat*>& grads);

}  // namespace genrec

#endif  // GENREC_OPTIM_HPP_
