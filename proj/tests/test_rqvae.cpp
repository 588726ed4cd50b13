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
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "genrec/emb_io.hpp"
#include "genrec/rqvae.hpp"
#include "test_util.hpp"

namespace genrec {
namespace {

Codebook make_codebook(std::uint32_t level, const Mat& vectors) {
  Codebook cb;
  cb.level = level;
  cb.vectors = vectors;
  cb.usage.assign(static_cast<std::size_t>(vectors.rows()), 0);
  return cb;
}

TEST(Quantize, NearestNeighborByHand) {
  Mat c(2, 2);
  c << 0, 0, 1, 1;
  Vec z(2);
  z << 0.9, 1.2;
  const auto q = quantize(z, {make_codebook(1, c)});
  ASSERT_EQ(q.codes.size(), 1u);
  EXPECT_EQ(q.codes[0], 1u);
  EXPECT_NEAR(q.residual(0), -0.1, 1e-15);
  EXPECT_NEAR(q.residual(1), 0.2, 1e-15);
  EXPECT_EQ(q.residual_norms.size(), 2u);
}

TEST(Quantize, ExactCodevectorLeavesZeroResidual) {
  const Mat c = testing::random_mat(4, 3, 1);
  const Vec z = c.row(2).transpose();
  const auto q = quantize(z, {make_codebook(1, c)});
  EXPECT_EQ(q.codes[0], 2u);
  EXPECT_EQ(q.residual.norm(), 0.0);
  EXPECT_TRUE(q.quantized == z);
}

TEST(Quantize, TiesGoToLowestIndex) {
  Mat c = Mat::Zero(6, 2);
  c.row(2) << 1, 0;
  c.row(5) << -1, 0;
  for (int k : {0, 1, 3, 4}) c.row(k) << 10, 10;
  const auto q = quantize(Vec::Zero(2), {make_codebook(1, c)});
  EXPECT_EQ(q.codes[0], 2u);
}

TEST(Quantize, TelescopingIdentityIsBitwise) {
  std::vector<Codebook> cbs;
  for (std::uint32_t m = 0; m < 4; ++m) cbs.push_back(make_codebook(m + 1, testing::random_mat(16, 8, 100 + m, 1.0 / (m + 1))));
  const Mat zs = testing::random_mat(1000, 8, 7);
  for (Eigen::Index i = 0; i < zs.rows(); ++i) {
    const Vec z = zs.row(i).transpose();
    const auto q = quantize(z, cbs);
    Vec sum = Vec::Zero(8);
    for (std::uint32_t m = 0; m < 4; ++m) sum += cbs[m].vectors.row(q.codes[m]).transpose();
    const Vec lhs = z - sum;
    ASSERT_TRUE(lhs == q.residual) << "row " << i;
  }
}

TEST(Quantize, ExtraLevelWithZeroCodeNeverIncreasesResidual) {
  std::vector<Codebook> cbs;
  for (std::uint32_t m = 0; m < 2; ++m) cbs.push_back(make_codebook(m + 1, testing::random_mat(8, 5, 200 + m)));
  Mat extra = testing::random_mat(8, 5, 300, 0.3);
  extra.row(3).setZero();
  auto deeper = cbs;
  deeper.push_back(make_codebook(3, extra));
  const Mat zs = testing::random_mat(200, 5, 9);
  for (Eigen::Index i = 0; i < zs.rows(); ++i) {
    const Vec z = zs.row(i).transpose();
    EXPECT_LE(quantize(z, deeper).residual.norm(), quantize(z, cbs).residual.norm());
  }
}

// ReLU MLP computing the identity: relu(x) - relu(-x).
Mlp identity_mlp(Eigen::Index n) {
  Mlp m;
  m.w1.resize(n, 2 * n);
  m.w1 << Mat::Identity(n, n), -Mat::Identity(n, n);
  m.b1 = Mat::Zero(1, 2 * n);
  m.w2.resize(2 * n, n);
  m.w2 << Mat::Identity(n, n), -Mat::Identity(n, n);
  m.b2 = Mat::Zero(1, n);
  return m;
}

RqVaeModel tiny_model(Eigen::Index dim, std::uint32_t M, std::uint32_t K, std::uint64_t seed) {
  RqVaeConfig cfg;
  cfg.M = M;
  cfg.K = K;
  cfg.h = 3;
  cfg.hidden = 5;
  cfg.seed = seed;
  RqVaeModel m = init_rqvae(dim, cfg);
  for (std::uint32_t l = 0; l < M; ++l) m.codebooks[l].vectors = testing::random_mat(K, 3, seed + 10 + l, 0.7 / (l + 1));
  m.codebooks_initialized = true;
  return m;
}

TEST(Loss, PerfectAutoencoderWithExactCodesIsZero) {
  RqVaeModel m;
  m.encoder = identity_mlp(3);
  m.decoder = identity_mlp(3);
  Vec x(3);
  x << 0.4, -1.0, 2.0;
  Mat c1 = testing::random_mat(4, 3, 1);
  c1.row(1) = x.transpose();
  Mat c2 = testing::random_mat(4, 3, 2);
  c2.row(0).setZero();
  m.codebooks = {make_codebook(1, c1), make_codebook(2, c2)};
  const auto parts = loss_total(x, m);
  EXPECT_EQ(parts.recon, 0.0);
  EXPECT_EQ(parts.quant, 0.0);
}

TEST(Loss, DiversityUniformAndSingleCodeExtremes) {
  RqVaeModel m = tiny_model(4, 1, 4, 3);
  m.codebooks[0].vectors = Mat::Ones(4, 3);
  EXPECT_NEAR(loss_total(testing::random_mat(4, 1, 5).col(0), m).div, -std::log(4.0), 1e-12);
  m.codebooks[0].vectors = Mat::Zero(4, 3);
  m.codebooks[0].vectors.row(1) << 100, 100, 100;
  m.codebooks[0].vectors.row(2) << -100, 100, 100;
  m.codebooks[0].vectors.row(3) << 100, -100, 100;
  m.encoder = init_mlp(4, 5, 3, 1);
  m.encoder.w1 *= 1e-3;
  EXPECT_NEAR(loss_total(testing::random_mat(4, 1, 6).col(0), m).div, 0.0, 1e-12);
}

TEST(Loss, DiversityWithinBounds) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    RqVaeModel m = tiny_model(4, 3, 5, s);
    const double div = batch_loss(testing::random_mat(7, 4, s + 50), m).div;
    EXPECT_LE(div, 1e-12);
    EXPECT_GE(div, -3.0 * std::log(5.0) - 1e-12);
  }
}

TEST(Loss, EmptyBatchIsZero) {
  const auto parts = batch_loss(Mat(0, 4), tiny_model(4, 2, 3, 1));
  EXPECT_EQ(parts.total, 0.0);
  EXPECT_EQ(parts.div, 0.0);
}

// Central differences of the frozen straight-through loss.
double fd(const Mat& x, RqVaeModel& m, const FrozenQuantization& f, Mat& param, Eigen::Index r,
          Eigen::Index c, double h = 1e-6) {
  const double keep = param(r, c);
  param(r, c) = keep + h;
  const double lp = surrogate_loss(x, m, f).total;
  param(r, c) = keep - h;
  const double lm = surrogate_loss(x, m, f).total;
  param(r, c) = keep;
  return (lp - lm) / (2 * h);
}

double worst_rel(const Mat& x, RqVaeModel& m, const FrozenQuantization& f, Mat& param,
                 const Mat& grad) {
  double worst = 0.0;
  for (Eigen::Index r = 0; r < param.rows(); ++r) {
    for (Eigen::Index c = 0; c < param.cols(); ++c) {
      const double num = fd(x, m, f, param, r, c);
      if (std::abs(num) + std::abs(grad(r, c)) < 1e-9) continue;
      worst = std::max(worst, testing::rel_err(grad(r, c), num));
    }
  }
  return worst;
}

TEST(Gradients, EncoderDecoderAndCodebooksMatchFiniteDifferences) {
  RqVaeModel m = tiny_model(4, 2, 3, 9);
  m.lambda_d = 0.3;  // make the entropy term visible
  const Mat x = testing::random_mat(3, 4, 77);
  const auto f = freeze_quantization(x, m);
  RqVaeGrads g;
  surrogate_loss(x, m, f, &g);
  EXPECT_LT(worst_rel(x, m, f, m.encoder.w1, g.encoder.w1), 1e-4);
  EXPECT_LT(worst_rel(x, m, f, m.encoder.b1, g.encoder.b1), 1e-4);
  EXPECT_LT(worst_rel(x, m, f, m.encoder.w2, g.encoder.w2), 1e-4);
  EXPECT_LT(worst_rel(x, m, f, m.encoder.b2, g.encoder.b2), 1e-4);
  EXPECT_LT(worst_rel(x, m, f, m.decoder.w1, g.decoder.w1), 1e-4);
  EXPECT_LT(worst_rel(x, m, f, m.decoder.w2, g.decoder.w2), 1e-4);
  for (std::uint32_t l = 0; l < m.M(); ++l) {
    EXPECT_LT(worst_rel(x, m, f, m.codebooks[l].vectors, g.codebooks[l]), 1e-4) << "level " << l;
  }
  Mat xx = x;
  double worst = 0.0;
  for (Eigen::Index r = 0; r < xx.rows(); ++r) {
    for (Eigen::Index c = 0; c < xx.cols(); ++c) {
      const double keep = xx(r, c);
      xx(r, c) = keep + 1e-6;
      const double lp = surrogate_loss(xx, m, f).total;
      xx(r, c) = keep - 1e-6;
      const double lm = surrogate_loss(xx, m, f).total;
      xx(r, c) = keep;
      worst = std::max(worst, testing::rel_err(g.input(r, c), (lp - lm) / 2e-6));
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Gradients, StraightThroughPassesDecoderGradientUnchanged) {
  // With lambda_q = lambda_d = 0 only the reconstruction term remains, and
  // dL/dz must equal dL/d(decoder input).
  RqVaeModel m = tiny_model(4, 2, 3, 4);
  m.lambda_q = 0.0;
  m.lambda_d = 0.0;
  const Mat x = testing::random_mat(2, 4, 5);
  const auto f = freeze_quantization(x, m);
  Mat pre_e;
  const Mat z = m.encoder.forward(x, &pre_e);
  const Mat dec_in = z + f.ste_offset;
  // FD of the loss w.r.t. the decoder input.
  auto recon_at = [&](const Mat& din) { return (m.decoder.forward(din) - x).squaredNorm() / 2.0; };
  Mat g_dec(dec_in.rows(), dec_in.cols());
  Mat probe = dec_in;
  for (Eigen::Index r = 0; r < probe.rows(); ++r) {
    for (Eigen::Index c = 0; c < probe.cols(); ++c) {
      const double keep = probe(r, c);
      probe(r, c) = keep + 1e-6;
      const double lp = recon_at(probe);
      probe(r, c) = keep - 1e-6;
      const double lm = recon_at(probe);
      probe(r, c) = keep;
      g_dec(r, c) = (lp - lm) / 2e-6;
    }
  }
  // Encoder-side gradient implied by the analytic backward pass.
  RqVaeGrads g;
  surrogate_loss(x, m, f, &g);
  MlpGrads via_dec;
  via_dec.w1 = Mat::Zero(m.encoder.w1.rows(), m.encoder.w1.cols());
  via_dec.b1 = Mat::Zero(1, m.encoder.b1.cols());
  via_dec.w2 = Mat::Zero(m.encoder.w2.rows(), m.encoder.w2.cols());
  via_dec.b2 = Mat::Zero(1, m.encoder.b2.cols());
  mlp_backward(m.encoder, x, pre_e, g_dec, via_dec);
  EXPECT_LT((via_dec.w1 - g.encoder.w1).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((via_dec.w2 - g.encoder.w2).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Kmeans, DeterministicAndSeparatesBlobs) {
  Mat pts(40, 2);
  const Mat noise = testing::random_mat(40, 2, 3, 0.05);
  for (int i = 0; i < 40; ++i) pts.row(i) << (i < 20 ? -5.0 : 5.0), 0.0;
  pts += noise;
  const Mat a = kmeans(pts, 2, 10, 1);
  EXPECT_TRUE(a == kmeans(pts, 2, 10, 1));
  EXPECT_NEAR(std::abs(a(0, 0)), 5.0, 0.2);
  EXPECT_NEAR(a(0, 0) * a(1, 0), -25.0, 2.0);
}

Mat clustered(std::uint32_t n, std::uint32_t clusters, Eigen::Index dim, std::uint64_t seed) {
  const Mat centers = testing::random_mat(clusters, dim, seed, 2.0);
  const Mat noise = testing::random_mat(n, dim, seed + 1, 0.2);
  Mat x(n, dim);
  for (std::uint32_t i = 0; i < n; ++i) x.row(i) = centers.row(i % clusters) + noise.row(i);
  return x;
}

RqVaeConfig small_cfg() {
  RqVaeConfig cfg;
  cfg.M = 3;
  cfg.K = 8;
  cfg.h = 6;
  cfg.hidden = 16;
  cfg.epochs = 30;
  cfg.batch = 32;
  cfg.lr = 3e-3;
  return cfg;
}

TEST(Train, DeterministicAndReducesLoss) {
  const Mat x = clustered(96, 6, 10, 4);
  std::vector<LossParts> la, lb;
  const auto a = train_rqvae(x, small_cfg(), &la);
  const auto b = train_rqvae(x, small_cfg(), &lb);
  ASSERT_EQ(la.size(), 30u);
  for (std::size_t e = 0; e < la.size(); ++e) EXPECT_EQ(la[e].total, lb[e].total);
  EXPECT_TRUE(a.encoder.w1 == b.encoder.w1);
  EXPECT_LT(la.back().recon, la.front().recon);
}

TEST(Train, NonFiniteLossAborts) {
  auto cfg = small_cfg();
  cfg.lr = 1e6;
  cfg.epochs = 200;
  Mat x = clustered(64, 4, 6, 5) * 1e300;
  EXPECT_THROW(train_rqvae(x, cfg), NumericError);
}

TEST(Train, JointTrainingUpdatesFusionWeights) {
  ModalityInputs in{testing::random_mat(40, 4, 1), testing::random_mat(40, 4, 2),
                    testing::random_mat(40, 4, 3)};
  FusionParams p = init_fusion(4, 1);
  const FusionParams before = p;
  auto cfg = small_cfg();
  cfg.epochs = 3;
  train_rqvae_joint(in, p, FusionMode{}, cfg);
  EXPECT_FALSE(p.wq == before.wq);
  FusionParams q = init_fusion(4, 1);
  train_rqvae_joint(in, q, FusionMode{false, true, true}, cfg);
  EXPECT_TRUE(q.wq == before.wq);
}

TEST(AssignIds, IdenticalVectorsDifferOnlyAtLastLevel) {
  Mat x = testing::random_mat(64, 6, 8);
  const auto model = train_rqvae(x, small_cfg());
  x.row(5) = x.row(9);
  const auto ids = assign_ids(x, model);
  EXPECT_NE(ids[5].tokens, ids[9].tokens);
  for (std::uint32_t m = 0; m + 1 < model.M(); ++m) EXPECT_EQ(ids[5].tokens[m], ids[9].tokens[m]);
  EXPECT_EQ(ids[5].tokens, raw_codes(x, model)[5]);  // lower item id keeps its codes
  std::set<std::vector<std::uint32_t>> uniq;
  for (const auto& s : ids) uniq.insert(s.tokens);
  EXPECT_EQ(uniq.size(), ids.size());
}

TEST(AssignIds, SingleItem) {
  const auto model = tiny_model(4, 2, 3, 2);
  const auto ids = assign_ids(testing::random_mat(1, 4, 1), model);
  ASSERT_EQ(ids.size(), 1u);
  EXPECT_EQ(ids[0].item, 0u);
  EXPECT_EQ(ids[0].tokens.size(), 2u);
}

TEST(AssignIds, ExhaustedLastLevelIsHardError) {
  const auto model = tiny_model(4, 2, 2, 2);
  Mat x(3, 4);
  x.rowwise() = testing::random_mat(1, 4, 1).row(0);
  EXPECT_THROW(assign_ids(x, model), Error);
}

TEST(Perplexity, UniformAndCollapsed) {
  std::vector<std::vector<std::uint32_t>> codes;
  for (std::uint32_t i = 0; i < 8; ++i) codes.push_back({i % 4, 0});
  const auto p = code_perplexity(codes, 2, 4);
  EXPECT_NEAR(p[0], 4.0, 1e-12);
  EXPECT_NEAR(p[1], 1.0, 1e-12);
}

TEST(Io, SemanticIdCsvRoundTrip) {
  testing::TempDir dir;
  const std::vector<SemanticId> ids{{0, {1, 2, 3}}, {1, {4, 0, 2}}};
  write_semantic_ids(dir / "ids.csv", ids);
  std::ifstream in(dir / "ids.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "item_id,c1,c2,c3");
  const auto back = read_semantic_ids(dir / "ids.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].item, 1u);
  EXPECT_EQ(back[1].tokens, ids[1].tokens);
}

TEST(Io, CheckpointRoundTrip) {
  const auto cfg = small_cfg();
  const Mat x = clustered(40, 4, 6, 1);
  auto c = cfg;
  c.epochs = 2;
  const auto model = train_rqvae(x, c);
  testing::TempDir dir;
  save_rqvae(dir.path(), model, c);
  const auto back = load_rqvae(dir.path());
  EXPECT_EQ(back.M(), model.M());
  EXPECT_EQ(back.K(), model.K());
  EXPECT_EQ(back.encoder.w1, round_to_f32(model.encoder.w1));
  EXPECT_EQ(back.codebooks[2].vectors, round_to_f32(model.codebooks[2].vectors));
  EXPECT_EQ(back.lambda_q, model.lambda_q);
}

TEST(Config, PaperDefaults) {
  const RqVaeConfig cfg;
  EXPECT_EQ(cfg.M, 4u);
  EXPECT_EQ(cfg.K, 512u);
  EXPECT_DOUBLE_EQ(cfg.lambda_q, 0.25);
  EXPECT_DOUBLE_EQ(cfg.lambda_d, 0.01);
  EXPECT_DOUBLE_EQ(cfg.lr, 1e-4);
}

}  // namespace
}  // namespace genrec
