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

#include "genrec/optim.hpp"

#include <cmath>

namespace genrec {

double global_norm(const std::vector<const Mat*>& grads) {
  double sq = 0.0;
  for (const Mat* g : grads) sq += g->squaredNorm();
  return std::sqrt(sq);
}

double Adam::step(const std::vector<Mat*>& params, const std::vector<const Mat*>& grads) {
  if (params.size() != grads.size()) throw ConfigError("Adam: params/grads size mismatch");
  if (m_.empty()) {
    for (const Mat* p : params) {
      m_.push_back(Mat::Zero(p->rows(), p->cols()));
      v_.push_back(Mat::Zero(p->rows(), p->cols()));
    }
  }
  if (m_.size() != params.size()) throw ConfigError("Adam: parameter list changed");
  const double norm = global_norm(grads);
  const double clip = (opts_.clip_norm > 0.0 && norm > opts_.clip_norm) ? opts_.clip_norm / norm : 1.0;
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Mat& p = *params[k];
    const Mat& g = *grads[k];
    m_[k] = opts_.beta1 * m_[k] + (1.0 - opts_.beta1) * clip * g;
    v_[k] = opts_.beta2 * v_[k] + (1.0 - opts_.beta2) * (clip * g).cwiseAbs2();
    if (opts_.weight_decay > 0.0) p *= (1.0 - opts_.lr * opts_.weight_decay);
    p.array() -= opts_.lr * (m_[k].array() / bc1) / ((v_[k].array() / bc2).sqrt() + opts_.eps);
  }
  return norm;
}

}  // namespace genrec
