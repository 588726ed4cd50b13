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

// Modality reduction and collaborative-guided fusion.
//
// The collaborative embedding e_c is the attention query; visual e_v and
// textual e_t are keys and values:
//
//   logit_m = (Wq e_c)^T (Wk e_m),  alpha = softmax(logit_v, logit_t)
//   x = [alpha_v e_v + alpha_t e_t ; e_c]       (length 2d)

#ifndef GENREC_FUSION_HPP_
#define GENREC_FUSION_HPP_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "genrec/types.hpp"

namespace genrec {

struct PcaReducer {
  RowVec mean;              // source_d
  Mat components;           // target_d x source_d, orthonormal rows
  Vec explained_variance;   // target_d, descending

  Mat project(const Mat& x) const;
  Mat inverse(const Mat& y) const;
};

// Components are sorted by variance; each component's largest-magnitude
// entry is made positive. Components past the data rank come from the
// eigenbasis completion and carry zero explained variance.
PcaReducer fit_pca(const Mat& features, std::uint32_t target_d);

// PCA to min(d, source_d) dims, zero-padded to d, then scaled so the fitted
// rows have unit mean L2 norm.
struct ModalityReducer {
  PcaReducer pca;
  std::uint32_t out_dim = 0;
  double scale = 1.0;

  Mat apply(const Mat& features) const;
};

ModalityReducer fit_modality(const Mat& features, std::uint32_t d);

// Scales `m` in place to unit mean row norm and returns the factor used
// (1 when every row is zero).
double normalize_mean_row_norm(Mat& m);

struct FusionParams {
  Mat wq;  // d x d
  Mat wk;  // d x d
};

// Identity plus N(0, noise^2) entries.
FusionParams init_fusion(std::uint32_t d, std::uint64_t seed, double noise = 0.01);

struct AttentionWeights {
  double alpha_v = 0.5;
  double alpha_t = 0.5;
};

AttentionWeights softmax2(double logit_v, double logit_t);
AttentionWeights guided_attention(const Vec& e_c, const Vec& e_v, const Vec& e_t,
                                  const FusionParams& p);
Vec fuse(const Vec& e_c, const Vec& e_v, const Vec& e_t, const AttentionWeights& w);

// Ablation switches. A disabled modality is replaced by zeros; with only one
// content modality the attention collapses onto it, and without the
// collaborative query both content modalities get weight 1/2.
struct FusionMode {
  bool use_collab = true;
  bool use_image = true;
  bool use_text = true;

  bool learns_attention() const { return use_collab && use_image && use_text; }
};

// Per-item inputs, all N x d after reduction.
struct ModalityInputs {
  Mat visual;
  Mat text;
  Mat collab;

  Eigen::Index n_items() const { return collab.rows(); }
  Eigen::Index dim() const { return collab.cols(); }
};

// Throws ConfigError naming the offending matrix on shape mismatch.
void check_fusion_shapes(const ModalityInputs& in, const FusionParams& p);

AttentionWeights item_attention(const ModalityInputs& in, Eigen::Index item, const FusionParams& p,
                                const FusionMode& mode);

Mat fuse_rows(const ModalityInputs& in, const std::vector<Eigen::Index>& rows,
              const FusionParams& p, const FusionMode& mode,
              std::vector<AttentionWeights>* weights = nullptr);

Mat fuse_catalog(const ModalityInputs& in, const FusionParams& p, const FusionMode& mode,
                 std::vector<AttentionWeights>* weights = nullptr);

// Accumulates dL/dWq and dL/dWk given dL/dx for the fused `rows`. No-op when
// the mode does not learn attention.
void fuse_rows_backward(const ModalityInputs& in, const std::vector<Eigen::Index>& rows,
                        const FusionParams& p, const FusionMode& mode, const Mat& grad_fused,
                        Mat& grad_wq, Mat& grad_wk);

void save_fusion(const std::filesystem::path& dir, const FusionParams& p, const FusionMode& mode);
FusionParams load_fusion(const std::filesystem::path& dir);

}  // namespace genrec

#endif  // GENREC_FUSION_HPP_
