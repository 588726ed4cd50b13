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

#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "genrec/emb_io.hpp"
#include "genrec/fusion.hpp"
#include "test_util.hpp"

namespace genrec {
namespace {

TEST(Pca, ComponentsAreOrthonormal) {
  const Mat x = testing::random_mat(50, 8, 1);
  const auto pca = fit_pca(x, 5);
  EXPECT_LT((pca.components * pca.components.transpose() - Mat::Identity(5, 5)).cwiseAbs().maxCoeff(),
            1e-6);
  for (Eigen::Index k = 1; k < 5; ++k) {
    EXPECT_GE(pca.explained_variance(k - 1), pca.explained_variance(k));
  }
}

TEST(Pca, FullWidthReconstructs) {
  const Mat x = testing::random_mat(40, 6, 2);
  const auto pca = fit_pca(x, 6);
  EXPECT_LT((pca.inverse(pca.project(x)) - x).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Pca, LineYEqualsTwoX) {
  Mat x(5, 2);
  for (int i = 0; i < 5; ++i) x.row(i) << i - 2.0, 2.0 * (i - 2.0);
  const auto pca = fit_pca(x, 2);
  const double total = pca.explained_variance.sum();
  EXPECT_NEAR(pca.explained_variance(0) / total, 1.0, 1e-12);
  EXPECT_NEAR(pca.components(0, 0), 1.0 / std::sqrt(5.0), 1e-12);
  EXPECT_NEAR(pca.components(0, 1), 2.0 / std::sqrt(5.0), 1e-12);
  EXPECT_EQ(pca.explained_variance(1), 0.0);
}

TEST(Pca, ZeroVarianceProjectsToZero) {
  const Mat x = Mat::Constant(10, 4, 3.5);
  const auto pca = fit_pca(x, 3);
  EXPECT_LT(pca.project(x).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(pca.explained_variance.sum(), 0.0);
}

TEST(Pca, SignConventionMakesLargestEntryPositive) {
  const auto pca = fit_pca(testing::random_mat(30, 5, 3), 5);
  for (Eigen::Index k = 0; k < 5; ++k) {
    Eigen::Index arg = 0;
    pca.components.row(k).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(pca.components(k, arg), 0.0);
  }
}

TEST(Pca, ProjectionIsIdempotentOnSubspace) {
  const Mat x = testing::random_mat(30, 7, 4);
  const auto pca = fit_pca(x, 3);
  const Mat p = pca.project(x);
  EXPECT_LT((pca.project(pca.inverse(p)) - p).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Pca, RejectsTooManyComponents) {
  EXPECT_THROW(fit_pca(testing::random_mat(5, 3, 1), 4), ConfigError);
}

TEST(Modality, PadsToTargetAndNormalizes) {
  const auto r = fit_modality(testing::random_mat(20, 3, 5), 8);
  const Mat y = r.apply(testing::random_mat(20, 3, 5));
  EXPECT_EQ(y.cols(), 8);
  EXPECT_LT(y.rightCols(5).cwiseAbs().maxCoeff(), 1e-300);
  EXPECT_NEAR(y.rowwise().norm().mean(), 1.0, 1e-12);
}

TEST(Attention, SymmetricInputsSplitEvenly) {
  const Vec e = testing::random_mat(4, 1, 1).col(0);
  FusionParams p{Mat::Identity(4, 4), Mat::Identity(4, 4)};
  const auto w = guided_attention(testing::random_mat(4, 1, 2).col(0), e, e, p);
  EXPECT_DOUBLE_EQ(w.alpha_v, 0.5);
  EXPECT_DOUBLE_EQ(w.alpha_t, 0.5);
}

TEST(Attention, ScalarSoftmaxOracle) {
  const auto w = softmax2(1.0, 0.0);
  EXPECT_NEAR(w.alpha_v, std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-15);
  EXPECT_NEAR(w.alpha_v, 0.7311, 1e-4);
  EXPECT_NEAR(w.alpha_t, 0.2689, 1e-4);
}

TEST(Attention, ShiftInvarianceAndStability) {
  const auto a = softmax2(0.3, -1.2);
  const auto b = softmax2(1000.3, 998.8);
  EXPECT_NEAR(a.alpha_v, b.alpha_v, 1e-12);
  const auto c = softmax2(1e6, -1e6);
  EXPECT_TRUE(std::isfinite(c.alpha_v));
  EXPECT_NEAR(c.alpha_v + c.alpha_t, 1.0, 1e-15);
}

TEST(Attention, PositiveScalingOfQueryKeepsArgmax) {
  const auto p = init_fusion(6, 3, 0.3);
  const Vec ec = testing::random_mat(6, 1, 7).col(0);
  const Vec ev = testing::random_mat(6, 1, 8).col(0);
  const Vec et = testing::random_mat(6, 1, 9).col(0);
  const auto w = guided_attention(ec, ev, et, p);
  for (double a : {0.01, 0.5, 3.0, 40.0}) {
    const auto s = guided_attention(a * ec, ev, et, p);
    EXPECT_EQ(w.alpha_v > w.alpha_t, s.alpha_v > s.alpha_t);
    EXPECT_NEAR(s.alpha_v + s.alpha_t, 1.0, 1e-12);
  }
}

TEST(Fuse, LimitWeightsAndConcatenation) {
  const Vec ec = testing::random_mat(5, 1, 1).col(0);
  const Vec ev = testing::random_mat(5, 1, 2).col(0);
  const Vec x = fuse(ec, ev, -ev, {1.0, 0.0});
  EXPECT_EQ(x.size(), 10);
  EXPECT_TRUE(x.head(5) == ev);
  EXPECT_TRUE(x.tail(5) == ec);
  const Vec y = fuse(ec, ev, -ev, {0.5, 0.5});
  EXPECT_EQ(y.head(5).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_TRUE(y.tail(5) == ec);
}

ModalityInputs random_inputs(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  return {testing::random_mat(n, d, seed), testing::random_mat(n, d, seed + 1),
          testing::random_mat(n, d, seed + 2)};
}

TEST(FuseCatalog, SingleItemMatchesFuse) {
  const auto in = random_inputs(1, 4, 10);
  const auto p = init_fusion(4, 1, 0.1);
  const Mat x = fuse_catalog(in, p, FusionMode{});
  const auto w = guided_attention(in.collab.row(0).transpose(), in.visual.row(0).transpose(),
                                  in.text.row(0).transpose(), p);
  const Vec ref = fuse(in.collab.row(0).transpose(), in.visual.row(0).transpose(),
                       in.text.row(0).transpose(), w);
  EXPECT_LT((x.row(0).transpose() - ref).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(FuseCatalog, SecondHalfIsCollabVerbatimAndWeightsSumToOne) {
  const auto in = random_inputs(12, 6, 20);
  std::vector<AttentionWeights> w;
  const Mat x = fuse_catalog(in, init_fusion(6, 2, 0.2), FusionMode{}, &w);
  EXPECT_TRUE(x.rightCols(6) == in.collab);
  for (const auto& a : w) {
    EXPECT_NEAR(a.alpha_v + a.alpha_t, 1.0, 1e-12);
    EXPECT_GT(a.alpha_v, 0.0);
    EXPECT_GT(a.alpha_t, 0.0);
  }
}

TEST(FuseCatalog, AblationsZeroModalitiesAndCollapseAttention) {
  const auto in = random_inputs(5, 4, 30);
  const auto p = init_fusion(4, 3, 0.1);
  std::vector<AttentionWeights> w;
  const Mat no_img = fuse_catalog(in, p, {true, false, true}, &w);
  for (const auto& a : w) EXPECT_EQ(a.alpha_t, 1.0);
  EXPECT_TRUE(no_img.leftCols(4) == in.text);
  const Mat no_txt = fuse_catalog(in, p, {true, true, false}, &w);
  for (const auto& a : w) EXPECT_EQ(a.alpha_v, 1.0);
  EXPECT_TRUE(no_txt.leftCols(4) == in.visual);
  const Mat no_col = fuse_catalog(in, p, {false, true, true}, &w);
  for (const auto& a : w) EXPECT_EQ(a.alpha_v, 0.5);
  EXPECT_EQ(no_col.rightCols(4).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LT((no_col.leftCols(4) - 0.5 * (in.visual + in.text)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(FuseCatalog, PermutationEquivariant) {
  const auto in = random_inputs(8, 3, 40);
  const auto p = init_fusion(3, 4, 0.1);
  const Mat x = fuse_catalog(in, p, FusionMode{});
  std::vector<Eigen::Index> perm{3, 1, 7, 0, 6, 2, 5, 4};
  const Mat y = fuse_rows(in, perm, p, FusionMode{});
  for (std::size_t k = 0; k < perm.size(); ++k) {
    EXPECT_TRUE(y.row(static_cast<Eigen::Index>(k)) == x.row(perm[k]));
  }
}

TEST(FuseCatalog, ShapeMismatchNamesMatrix) {
  auto in = random_inputs(4, 3, 50);
  in.text = testing::random_mat(4, 2, 1);
  try {
    fuse_catalog(in, init_fusion(3, 1), FusionMode{});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("text"), std::string::npos);
  }
  in = random_inputs(4, 3, 50);
  try {
    fuse_catalog(in, init_fusion(2, 1), FusionMode{});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("W_q"), std::string::npos);
  }
}

// Loss = sum of squared fused entries.
double fused_sq(const ModalityInputs& in, const std::vector<Eigen::Index>& rows,
                const FusionParams& p) {
  return fuse_rows(in, rows, p, FusionMode{}).squaredNorm();
}

TEST(FusionGrad, MatchesFiniteDifferences) {
  const auto in = random_inputs(4, 5, 60);
  FusionParams p = init_fusion(5, 5, 0.3);
  const std::vector<Eigen::Index> rows{0, 1, 2, 3};
  const Mat x = fuse_rows(in, rows, p, FusionMode{});
  Mat gq, gk;
  fuse_rows_backward(in, rows, p, FusionMode{}, 2.0 * x, gq, gk);
  const double h = 1e-6;
  double worst = 0.0;
  for (Mat* w : {&p.wq, &p.wk}) {
    const Mat& g = w == &p.wq ? gq : gk;
    for (Eigen::Index r = 0; r < 5; ++r) {
      for (Eigen::Index c = 0; c < 5; ++c) {
        const double keep = (*w)(r, c);
        (*w)(r, c) = keep + h;
        const double lp = fused_sq(in, rows, p);
        (*w)(r, c) = keep - h;
        const double lm = fused_sq(in, rows, p);
        (*w)(r, c) = keep;
        worst = std::max(worst, testing::rel_err(g(r, c), (lp - lm) / (2 * h)));
      }
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Fusion, CheckpointRoundTrip) {
  testing::TempDir dir;
  const auto p = init_fusion(4, 9, 0.1);
  save_fusion(dir.path(), p, FusionMode{});
  const auto back = load_fusion(dir.path());
  EXPECT_EQ(back.wq, round_to_f32(p.wq));
  EXPECT_EQ(back.wk, round_to_f32(p.wk));
}

}  // namespace
}  // namespace genrec
