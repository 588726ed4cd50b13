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

#include <gtest/gtest.h>

#include "genrec/collab.hpp"
#include "genrec/emb_io.hpp"
#include "test_util.hpp"

namespace genrec {
namespace {

SplitDataset three_user_split() {
  SplitDataset s;
  s.n_users = 3;
  s.n_items = 5;
  s.users = {{0, {0, 0, 1}, 2, 3}, {1, {1, 2}, 4, 0}, {2, {0, 1, 2}, 3, 4}};
  return s;
}

TEST(Graph, DeduplicatesTrainingEdgesOnly) {
  const auto g = build_graph(three_user_split());
  EXPECT_EQ(g.edges.size(), 7u);
  EXPECT_TRUE(g.has_edge(0, 0));
  EXPECT_TRUE(g.has_edge(0, 1));
  EXPECT_FALSE(g.has_edge(0, 2));  // valid target
  EXPECT_FALSE(g.has_edge(0, 3));  // test target
  EXPECT_EQ(g.deg_u, (std::vector<std::uint32_t>{2, 2, 3}));
  EXPECT_EQ(g.deg_i, (std::vector<std::uint32_t>{2, 3, 2, 0, 0}));
}

// Dense symmetric-normalized adjacency over users then items.
Mat dense_norm_adj(const BipartiteGraph& g) {
  const Eigen::Index n = g.n_users + g.n_items;
  Mat a = Mat::Zero(n, n);
  for (const auto& [u, i] : g.edges) {
    const double w = 1.0 / std::sqrt(static_cast<double>(g.deg_u[u]) * g.deg_i[i]);
    a(u, g.n_users + i) = w;
    a(g.n_users + i, u) = w;
  }
  return a;
}

Mat stacked(const CollabEmbeddings& e) {
  Mat s(e.user_emb.rows() + e.item_emb.rows(), e.user_emb.cols());
  s << e.user_emb, e.item_emb;
  return s;
}

TEST(Propagate, MatchesDenseMatrixPowerOracle) {
  // Six nodes: 3 users, 3 items; one item isolated from user 2.
  const auto g = make_graph(3, 4, {{0, 0}, {0, 1}, {1, 1}, {1, 2}, {2, 0}, {2, 1}, {2, 2}});
  const Mat a = dense_norm_adj(g);
  for (std::uint32_t L : {1u, 2u, 3u}) {
    CollabEmbeddings e0{testing::random_mat(3, 5, 11), testing::random_mat(4, 5, 12), L};
    const Mat x0 = stacked(e0);
    Mat acc = x0, cur = x0;
    for (std::uint32_t l = 0; l < L; ++l) {
      cur = a * cur;
      acc += cur;
    }
    acc /= static_cast<double>(L + 1);
    const Mat got = stacked(propagate(g, e0));
    EXPECT_LT((got - acc).cwiseAbs().maxCoeff(), 1e-6) << "L=" << L;
  }
}

TEST(Propagate, ZeroLayersIsIdentity) {
  const auto g = make_graph(2, 2, {{0, 0}, {1, 1}});
  CollabEmbeddings e0{testing::random_mat(2, 3, 1), testing::random_mat(2, 3, 2), 0};
  const auto out = propagate(g, e0);
  EXPECT_EQ(out.user_emb, e0.user_emb);
  EXPECT_EQ(out.item_emb, e0.item_emb);
}

TEST(Propagate, SingleEdgeAverages) {
  const auto g = make_graph(1, 1, {{0, 0}});
  CollabEmbeddings e0{testing::random_mat(1, 4, 1), testing::random_mat(1, 4, 2), 1};
  const auto out = propagate(g, e0);
  EXPECT_LT((out.item_emb - (e0.item_emb + e0.user_emb) / 2).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Propagate, IsolatedNodeKeepsOnlyLayerZeroShare) {
  const auto g = make_graph(2, 2, {{0, 0}});
  CollabEmbeddings e0{testing::random_mat(2, 3, 5), testing::random_mat(2, 3, 6), 2};
  const auto out = propagate(g, e0);
  EXPECT_LT((out.item_emb.row(1) - e0.item_emb.row(1) / 3.0).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((out.user_emb.row(1) - e0.user_emb.row(1) / 3.0).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Propagate, IsLinear) {
  const auto g = build_graph(three_user_split());
  CollabEmbeddings e0{testing::random_mat(3, 4, 3), testing::random_mat(5, 4, 4), 3};
  CollabEmbeddings scaled{2.5 * e0.user_emb, 2.5 * e0.item_emb, 3};
  const auto a = propagate(g, e0);
  const auto b = propagate(g, scaled);
  EXPECT_LT((b.user_emb - 2.5 * a.user_emb).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((b.item_emb - 2.5 * a.item_emb).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Propagate, DegreeWeightedSumConservedOnRegularGraph) {
  // 2-regular bipartite cycle: u0-i0-u1-i1-u2-i2-u0.
  const auto g = make_graph(3, 3, {{0, 0}, {1, 0}, {1, 1}, {2, 1}, {2, 2}, {0, 2}});
  const Mat xu = testing::random_mat(3, 4, 8);
  const Mat xi = testing::random_mat(3, 4, 9);
  Mat yu, yi;
  propagate_layer(g, xu, xi, yu, yi);
  const double s2 = std::sqrt(2.0);
  EXPECT_LT(((s2 * yi.colwise().sum()) - (s2 * xu.colwise().sum())).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(((s2 * yu.colwise().sum()) - (s2 * xi.colwise().sum())).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Bpr, ParityLossIsLn2) {
  const auto g = make_graph(1, 2, {{0, 0}});
  CollabEmbeddings e0{Mat::Zero(1, 3), Mat::Zero(2, 3), 1};
  EXPECT_NEAR(bpr_loss(g, e0, {{0, 0, 1}}, 0.0), std::log(2.0), 1e-15);
}

TEST(Bpr, LossIsPositive) {
  const auto g = build_graph(three_user_split());
  CollabEmbeddings e0{testing::random_mat(3, 4, 1, 3.0), testing::random_mat(5, 4, 2, 3.0), 2};
  EXPECT_GT(bpr_loss(g, e0, {{0, 0, 3}, {1, 2, 4}, {2, 1, 3}}, 0.0), 0.0);
}

TEST(Bpr, GradientMatchesFiniteDifferences) {
  const auto g = build_graph(three_user_split());
  CollabEmbeddings e0{testing::random_mat(3, 4, 21, 0.5), testing::random_mat(5, 4, 22, 0.5), 2};
  const std::vector<BprTriple> batch{{0, 0, 3}, {1, 2, 4}, {2, 1, 3}, {0, 1, 4}};
  const double reg = 1e-2;
  Mat gu, gi;
  bpr_loss(g, e0, batch, reg, &gu, &gi);
  const double h = 1e-6;
  double worst = 0.0;
  for (int which = 0; which < 2; ++which) {
    Mat& m = which == 0 ? e0.user_emb : e0.item_emb;
    const Mat& grad = which == 0 ? gu : gi;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double keep = m(r, c);
        m(r, c) = keep + h;
        const double lp = bpr_loss(g, e0, batch, reg);
        m(r, c) = keep - h;
        const double lm = bpr_loss(g, e0, batch, reg);
        m(r, c) = keep;
        const double fd = (lp - lm) / (2 * h);
        if (std::abs(fd) + std::abs(grad(r, c)) < 1e-9) continue;
        worst = std::max(worst, testing::rel_err(grad(r, c), fd));
      }
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Bpr, TrainingSeparatesTwoClusters) {
  // 20 users, 10 items; users 0-9 use items 0-4, users 10-19 items 5-9.
  std::vector<std::pair<UserId, ItemId>> edges;
  for (UserId u = 0; u < 20; ++u) {
    const ItemId base = u < 10 ? 0 : 5;
    for (ItemId k = 0; k < 3; ++k) edges.emplace_back(u, base + (u + k) % 5);
  }
  const auto g = make_graph(20, 10, edges);
  CollabConfig cfg;
  cfg.d = 16;
  cfg.n_layers = 2;
  cfg.epochs = 60;
  cfg.batch = 16;
  cfg.lr = 0.5;
  cfg.init_std = 0.1;
  std::vector<double> losses;
  const auto emb = bpr_train(g, cfg, &losses);
  ASSERT_TRUE(emb.item_emb.allFinite());
  EXPECT_LT(losses.back(), losses.front());
  auto cosine = [&](ItemId a, ItemId b) {
    return emb.item_emb.row(a).dot(emb.item_emb.row(b)) /
           (emb.item_emb.row(a).norm() * emb.item_emb.row(b).norm());
  };
  double in = 0, cross = 0;
  int n_in = 0, n_cross = 0;
  for (ItemId a = 0; a < 10; ++a) {
    for (ItemId b = a + 1; b < 10; ++b) {
      if ((a < 5) == (b < 5)) {
        in += cosine(a, b);
        ++n_in;
      } else {
        cross += cosine(a, b);
        ++n_cross;
      }
    }
  }
  EXPECT_GT(in / n_in, cross / n_cross);
}

TEST(Bpr, TrainingIsBitwiseReproducible) {
  const auto g = build_graph(three_user_split());
  CollabConfig cfg;
  cfg.d = 8;
  cfg.epochs = 5;
  const auto a = bpr_train(g, cfg);
  const auto b = bpr_train(g, cfg);
  EXPECT_EQ(encode_emb(a.item_emb), encode_emb(b.item_emb));
  EXPECT_TRUE(a.item_emb == b.item_emb);
}

TEST(Bpr, DivergenceIsReported) {
  const auto g = build_graph(three_user_split());
  CollabConfig cfg;
  cfg.d = 8;
  cfg.epochs = 50;
  cfg.lr = 1e200;
  cfg.init_std = 1.0;
  EXPECT_THROW(bpr_train(g, cfg), NumericError);
}

TEST(Collab, CheckpointRoundTrip) {
  const auto g = build_graph(three_user_split());
  CollabConfig cfg;
  cfg.d = 4;
  cfg.epochs = 2;
  const auto emb = bpr_train(g, cfg);
  testing::TempDir dir;
  save_collab(dir.path(), emb, cfg);
  const auto back = load_collab(dir.path());
  EXPECT_EQ(back.item_emb, round_to_f32(emb.item_emb));
  EXPECT_EQ(back.n_layers, cfg.n_layers);
  EXPECT_TRUE(std::filesystem::exists(dir / "collab.json"));
}

}  // namespace
}  // namespace genrec
