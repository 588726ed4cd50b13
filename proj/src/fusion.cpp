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

#include "genrec/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>

#include "genrec/emb_io.hpp"
#include "json.hpp"

namespace genrec {

Mat PcaReducer::project(const Mat& x) const {
  return (x.rowwise() - mean) * components.transpose();
}

Mat PcaReducer::inverse(const Mat& y) const {
  return (y * components).rowwise() + mean;
}

PcaReducer fit_pca(const Mat& features, std::uint32_t target_d) {
  const Eigen::Index n = features.rows();
  const Eigen::Index src = features.cols();
  if (n == 0) throw EmptyDatasetError("fit_pca: no rows");
  if (target_d == 0 || target_d > src) {
    throw ConfigError("fit_pca: target_d " + std::to_string(target_d) + " not in 1.." +
                      std::to_string(src));
  }
  PcaReducer pca;
  pca.mean = features.colwise().mean();
  const Mat centered = features.rowwise() - pca.mean;
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / denom;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericError("fit_pca: eigensolver failed");

  // Eigen returns ascending eigenvalues.
  const Eigen::VectorXd& evals = solver.eigenvalues();
  const Eigen::MatrixXd& evecs = solver.eigenvectors();
  const double top = std::max(0.0, evals(src - 1));
  const double floor = 1e-12 * std::max(1.0, top);
  pca.components.resize(target_d, src);
  pca.explained_variance.resize(target_d);
  for (std::uint32_t k = 0; k < target_d; ++k) {
    const Eigen::Index col = src - 1 - k;
    Eigen::VectorXd v = evecs.col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    pca.components.row(k) = v.transpose();
    pca.explained_variance(k) = evals(col) > floor ? evals(col) : 0.0;
  }
  return pca;
}

Mat ModalityReducer::apply(const Mat& features) const {
  const Mat reduced = pca.project(features);
  Mat out = Mat::Zero(features.rows(), out_dim);
  out.leftCols(reduced.cols()) = reduced * scale;
  return out;
}

double normalize_mean_row_norm(Mat& m) {
  if (m.rows() == 0) return 1.0;
  const double mean_norm = m.rowwise().norm().mean();
  if (!(mean_norm > 0.0)) return 1.0;
  const double s = 1.0 / mean_norm;
  m *= s;
  return s;
}

ModalityReducer fit_modality(const Mat& features, std::uint32_t d) {
  ModalityReducer r;
  r.out_dim = d;
  const auto target = static_cast<std::uint32_t>(std::min<Eigen::Index>(d, features.cols()));
  r.pca = fit_pca(features, target);
  Mat reduced = r.pca.project(features);
  r.scale = normalize_mean_row_norm(reduced);
  return r;
}

FusionParams init_fusion(std::uint32_t d, std::uint64_t seed, double noise) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, noise);
  FusionParams p;
  p.wq = Mat::Identity(d, d);
  p.wk = Mat::Identity(d, d);
  for (Mat* w : {&p.wq, &p.wk}) {
    for (Eigen::Index r = 0; r < w->rows(); ++r)
      for (Eigen::Index c = 0; c < w->cols(); ++c) (*w)(r, c) += gauss(rng);
  }
  return p;
}

AttentionWeights softmax2(double logit_v, double logit_t) {
  const double m = std::max(logit_v, logit_t);
  const double ev = std::exp(logit_v - m);
  const double et = std::exp(logit_t - m);
  const double z = ev + et;
  return {ev / z, et / z};
}

AttentionWeights guided_attention(const Vec& e_c, const Vec& e_v, const Vec& e_t,
                                  const FusionParams& p) {
  const Vec q = p.wq * e_c;
  return softmax2(q.dot(p.wk * e_v), q.dot(p.wk * e_t));
}

Vec fuse(const Vec& e_c, const Vec& e_v, const Vec& e_t, const AttentionWeights& w) {
  const Eigen::Index d = e_c.size();
  Vec x(2 * d);
  x.head(d) = w.alpha_v * e_v + w.alpha_t * e_t;
  x.tail(d) = e_c;
  return x;
}

void check_fusion_shapes(const ModalityInputs& in, const FusionParams& p) {
  const Eigen::Index n = in.collab.rows();
  const Eigen::Index d = in.collab.cols();
  auto check = [&](const Mat& m, Eigen::Index rows, Eigen::Index cols, const char* name) {
    if (m.rows() != rows || m.cols() != cols) {
      throw ConfigError(std::string("fusion: ") + name + " is " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                        std::to_string(cols));
    }
  };
  check(in.visual, n, d, "visual features");
  check(in.text, n, d, "text features");
  check(p.wq, d, d, "W_q");
  check(p.wk, d, d, "W_k");
}

AttentionWeights item_attention(const ModalityInputs& in, Eigen::Index item, const FusionParams& p,
                                const FusionMode& mode) {
  if (mode.use_image && !mode.use_text) return {1.0, 0.0};
  if (!mode.use_image && mode.use_text) return {0.0, 1.0};
  if (!mode.learns_attention()) return {0.5, 0.5};
  return guided_attention(in.collab.row(item).transpose(), in.visual.row(item).transpose(),
                          in.text.row(item).transpose(), p);
}

Mat fuse_rows(const ModalityInputs& in, const std::vector<Eigen::Index>& rows,
              const FusionParams& p, const FusionMode& mode,
              std::vector<AttentionWeights>* weights) {
  check_fusion_shapes(in, p);
  const Eigen::Index d = in.dim();
  Mat out(static_cast<Eigen::Index>(rows.size()), 2 * d);
  if (weights != nullptr) weights->clear();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Eigen::Index i = rows[k];
    const AttentionWeights w = item_attention(in, i, p, mode);
    if (weights != nullptr) weights->push_back(w);
    RowVec first = RowVec::Zero(d);
    if (mode.use_image) first += w.alpha_v * in.visual.row(i);
    if (mode.use_text) first += w.alpha_t * in.text.row(i);
    out.row(k).head(d) = first;
    if (mode.use_collab) {
      out.row(k).tail(d) = in.collab.row(i);
    } else {
      out.row(k).tail(d).setZero();
    }
  }
  return out;
}

Mat fuse_catalog(const ModalityInputs& in, const FusionParams& p, const FusionMode& mode,
                 std::vector<AttentionWeights>* weights) {
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(in.n_items()));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  return fuse_rows(in, rows, p, mode, weights);
}

void fuse_rows_backward(const ModalityInputs& in, const std::vector<Eigen::Index>& rows,
                        const FusionParams& p, const FusionMode& mode, const Mat& grad_fused,
                        Mat& grad_wq, Mat& grad_wk) {
  const Eigen::Index d = in.dim();
  if (grad_wq.rows() != d || grad_wq.cols() != d) grad_wq = Mat::Zero(d, d);
  if (grad_wk.rows() != d || grad_wk.cols() != d) grad_wk = Mat::Zero(d, d);
  if (!mode.learns_attention()) return;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Eigen::Index i = rows[k];
    const Vec ec = in.collab.row(i).transpose();
    const Vec ev = in.visual.row(i).transpose();
    const Vec et = in.text.row(i).transpose();
    const Vec q = p.wq * ec;
    const Vec kv = p.wk * ev;
    const Vec kt = p.wk * et;
    const AttentionWeights w = softmax2(q.dot(kv), q.dot(kt));
    const Vec g = grad_fused.row(static_cast<Eigen::Index>(k)).head(d).transpose();
    const double gv = g.dot(ev);
    const double gt = g.dot(et);
    const double gbar = w.alpha_v * gv + w.alpha_t * gt;
    const double dlv = w.alpha_v * (gv - gbar);
    const double dlt = w.alpha_t * (gt - gbar);
    grad_wq.noalias() += (dlv * kv + dlt * kt) * ec.transpose();
    grad_wk.noalias() += q * (dlv * ev + dlt * et).transpose();
  }
}

void save_fusion(const std::filesystem::path& dir, const FusionParams& p, const FusionMode& mode) {
  std::filesystem::create_directories(dir);
  write_emb(dir / "wq.emb", p.wq);
  write_emb(dir / "wk.emb", p.wk);
  nlohmann::ordered_json j;
  j["d"] = p.wq.rows();
  j["use_collab"] = mode.use_collab;
  j["use_image"] = mode.use_image;
  j["use_text"] = mode.use_text;
  std::ofstream(dir / "fusion.json") << j.dump(2) << '\n';
}

FusionParams load_fusion(const std::filesystem::path& dir) {
  return {read_emb(dir / "wq.emb"), read_emb(dir / "wk.emb")};
}

}  // namespace genrec
