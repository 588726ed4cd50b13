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

#include "genrec/rqvae.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "genrec/emb_io.hpp"
#include "genrec/optim.hpp"
#include "json.hpp"

namespace genrec {
namespace {

void fill_normal(Mat& m, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, std);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = gauss(rng);
}

MlpGrads zero_grads(const Mlp& m) {
  return {Mat::Zero(m.w1.rows(), m.w1.cols()), Mat::Zero(1, m.b1.cols()),
          Mat::Zero(m.w2.rows(), m.w2.cols()), Mat::Zero(1, m.b2.cols())};
}

std::uint32_t nearest_code(const Vec& r, const Mat& codebook) {
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < codebook.rows(); ++k) {
    const double d = (r.transpose() - codebook.row(k)).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::uint32_t>(k);
    }
  }
  return best;
}

// Squared distances B x K.
Mat sq_distances(const Mat& r, const Mat& c) {
  Mat d = (-2.0 * r) * c.transpose();
  d.colwise() += r.rowwise().squaredNorm();
  d.rowwise() += c.rowwise().squaredNorm().transpose();
  return d.cwiseMax(0.0);
}

Mat row_softmax(const Mat& logits) {
  Mat p = logits;
  for (Eigen::Index b = 0; b < p.rows(); ++b) {
    const double mx = p.row(b).maxCoeff();
    p.row(b) = (p.row(b).array() - mx).exp().matrix();
    p.row(b) /= p.row(b).sum();
  }
  return p;
}

}  // namespace

Mat Mlp::forward(const Mat& x, Mat* pre_activation) const {
  Mat a1 = x * w1;
  a1.rowwise() += b1.row(0);
  Mat y = a1.cwiseMax(0.0) * w2;
  y.rowwise() += b2.row(0);
  if (pre_activation != nullptr) *pre_activation = std::move(a1);
  return y;
}

Mlp init_mlp(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Mlp m;
  m.w1.resize(in, hidden);
  m.w2.resize(hidden, out);
  fill_normal(m.w1, std::sqrt(2.0 / static_cast<double>(in)), rng);
  fill_normal(m.w2, std::sqrt(1.0 / static_cast<double>(hidden)), rng);
  m.b1 = Mat::Zero(1, hidden);
  m.b2 = Mat::Zero(1, out);
  return m;
}

Mat mlp_backward(const Mlp& mlp, const Mat& x, const Mat& pre_activation, const Mat& grad_out,
                 MlpGrads& grads) {
  if (grads.w1.size() == 0) grads = zero_grads(mlp);
  const Mat hidden = pre_activation.cwiseMax(0.0);
  grads.w2.noalias() += hidden.transpose() * grad_out;
  grads.b2 += grad_out.colwise().sum();
  Mat dh = grad_out * mlp.w2.transpose();
  dh.array() *= (pre_activation.array() > 0.0).cast<double>();
  grads.w1.noalias() += x.transpose() * dh;
  grads.b1 += dh.colwise().sum();
  return dh * mlp.w1.transpose();
}

std::uint32_t RqVaeModel::K() const {
  return codebooks.empty() ? 0 : static_cast<std::uint32_t>(codebooks.front().vectors.rows());
}

RqVaeModel init_rqvae(Eigen::Index input_dim, const RqVaeConfig& cfg) {
  if (cfg.M == 0 || cfg.K == 0 || cfg.h == 0) throw ConfigError("rqvae: M, K and h must be positive");
  RqVaeModel m;
  m.encoder = init_mlp(input_dim, cfg.hidden, cfg.h, cfg.seed * 2654435761u + 1);
  m.decoder = init_mlp(cfg.h, cfg.hidden, input_dim, cfg.seed * 2654435761u + 2);
  for (std::uint32_t level = 1; level <= cfg.M; ++level) {
    Codebook cb;
    cb.level = level;
    cb.vectors = Mat::Zero(cfg.K, cfg.h);
    cb.usage.assign(cfg.K, 0);
    m.codebooks.push_back(std::move(cb));
  }
  m.lambda_q = cfg.lambda_q;
  m.lambda_d = cfg.lambda_d;
  m.beta = cfg.beta;
  m.tau = cfg.tau;
  return m;
}

QuantizationResult quantize(const Vec& z, const std::vector<Codebook>& codebooks) {
  QuantizationResult res;
  res.quantized = Vec::Zero(z.size());
  Vec r = z;
  res.residual_norms.push_back(r.norm());
  for (const auto& cb : codebooks) {
    if (cb.vectors.cols() != z.size()) throw ConfigError("quantize: latent/codebook width mismatch");
    const std::uint32_t c = nearest_code(r, cb.vectors);
    res.codes.push_back(c);
    res.quantized += cb.vectors.row(c).transpose();
    r = z - res.quantized;
    res.residual_norms.push_back(r.norm());
  }
  res.residual = std::move(r);
  return res;
}

Mat encode(const RqVaeModel& model, const Mat& x) { return model.encoder.forward(x); }

FrozenQuantization freeze_quantization(const Mat& x, const RqVaeModel& model) {
  const Mat z = encode(model, x);
  const Eigen::Index B = z.rows();
  const Eigen::Index h = z.cols();
  FrozenQuantization f;
  f.codes.assign(static_cast<std::size_t>(B), {});
  for (std::uint32_t m = 0; m < model.M(); ++m) {
    f.prefix_sum.push_back(Mat::Zero(B, h));
    f.residual.push_back(Mat::Zero(B, h));
    f.chosen.push_back(Mat::Zero(B, h));
  }
  f.ste_offset.resize(B, h);
  for (Eigen::Index b = 0; b < B; ++b) {
    const Vec zb = z.row(b).transpose();
    Vec q = Vec::Zero(h);
    for (std::uint32_t m = 0; m < model.M(); ++m) {
      const Vec r = zb - q;
      const std::uint32_t c = nearest_code(r, model.codebooks[m].vectors);
      f.codes[b].push_back(c);
      f.prefix_sum[m].row(b) = q.transpose();
      f.residual[m].row(b) = r.transpose();
      f.chosen[m].row(b) = model.codebooks[m].vectors.row(c);
      q += model.codebooks[m].vectors.row(c).transpose();
    }
    f.ste_offset.row(b) = (q - zb).transpose();
  }
  return f;
}

LossParts surrogate_loss(const Mat& x, const RqVaeModel& model, const FrozenQuantization& frozen,
                         RqVaeGrads* grads) {
  LossParts out;
  const Eigen::Index B = x.rows();
  if (B == 0) return out;
  const double invB = 1.0 / static_cast<double>(B);
  const bool want = grads != nullptr;

  Mat pre_e, pre_d;
  const Mat z = model.encoder.forward(x, &pre_e);
  const Mat dec_in = z + frozen.ste_offset;
  const Mat xhat = model.decoder.forward(dec_in, &pre_d);
  const Mat diff = xhat - x;
  out.recon = diff.squaredNorm() * invB;

  Mat dz;
  if (want) {
    grads->encoder = zero_grads(model.encoder);
    grads->decoder = zero_grads(model.decoder);
    grads->codebooks.clear();
    for (const auto& cb : model.codebooks) grads->codebooks.push_back(Mat::Zero(cb.vectors.rows(), cb.vectors.cols()));
    dz = Mat::Zero(z.rows(), z.cols());
  }

  for (std::uint32_t m = 0; m < model.M(); ++m) {
    const Mat& C = model.codebooks[m].vectors;
    const Mat r_live = z - frozen.prefix_sum[m];
    Mat b_live(B, z.cols());
    for (Eigen::Index b = 0; b < B; ++b) b_live.row(b) = C.row(frozen.codes[b][m]);

    // Codebook-side and commitment terms.
    const Mat to_code = frozen.residual[m] - b_live;
    const Mat commit = r_live - frozen.chosen[m];
    out.quant += (to_code.squaredNorm() + model.beta * commit.squaredNorm()) * invB;

    // Soft-assignment entropy term.
    const Mat P = row_softmax(-sq_distances(r_live, C) / model.tau);
    const RowVec p = P.colwise().mean();
    RowVec g = RowVec::Zero(p.size());
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      if (p(k) > 0.0) {
        out.div += p(k) * std::log(p(k));
        g(k) = (std::log(p(k)) + 1.0) * invB;
      }
    }

    if (want) {
      for (Eigen::Index b = 0; b < B; ++b) {
        grads->codebooks[m].row(frozen.codes[b][m]) += -2.0 * model.lambda_q * invB * to_code.row(b);
      }
      dz += (2.0 * model.lambda_q * model.beta * invB) * commit;

      Mat DL = P.array().rowwise() * g.array();
      const Vec pg = (P.array().rowwise() * g.array()).rowwise().sum();
      DL -= (P.array().colwise() * pg.array()).matrix();
      DL *= model.lambda_d;
      const double s = 2.0 / model.tau;
      dz += s * (DL * C);
      const RowVec colsum = DL.colwise().sum();
      grads->codebooks[m] += s * (DL.transpose() * r_live - (C.array().colwise() * colsum.transpose().array()).matrix());
    }
  }
  out.total = out.recon + model.lambda_q * out.quant + model.lambda_d * out.div;

  if (want) {
    const Mat dxhat = 2.0 * invB * diff;
    dz += mlp_backward(model.decoder, dec_in, pre_d, dxhat, grads->decoder);
    grads->input = mlp_backward(model.encoder, x, pre_e, dz, grads->encoder) - dxhat;
  }
  return out;
}

LossParts batch_loss(const Mat& x, const RqVaeModel& model) {
  if (x.rows() == 0) return {};
  return surrogate_loss(x, model, freeze_quantization(x, model), nullptr);
}

LossParts loss_total(const Vec& x, const RqVaeModel& model) {
  return batch_loss(x.transpose(), model);
}

Mat kmeans(const Mat& points, std::uint32_t k, std::uint32_t iters, std::uint64_t seed) {
  const Eigen::Index n = points.rows();
  if (n == 0) throw EmptyDatasetError("kmeans: no points");
  std::mt19937_64 rng(seed);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  Mat centers(k, points.cols());
  const double spread = std::max(1e-6, std::sqrt(points.rowwise().squaredNorm().mean()));
  std::normal_distribution<double> jitter(0.0, 1e-3 * spread);
  std::uniform_int_distribution<Eigen::Index> any(0, n - 1);
  for (std::uint32_t c = 0; c < k; ++c) {
    if (static_cast<Eigen::Index>(c) < n) {
      centers.row(c) = points.row(idx[c]);
    } else {
      centers.row(c) = points.row(any(rng));
      for (Eigen::Index j = 0; j < centers.cols(); ++j) centers(c, j) += jitter(rng);
    }
  }
  std::vector<std::uint32_t> assign(static_cast<std::size_t>(n));
  for (std::uint32_t it = 0; it < iters; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) assign[i] = nearest_code(points.row(i).transpose(), centers);
    Mat sums = Mat::Zero(k, points.cols());
    std::vector<std::size_t> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[i]) += points.row(i);
      ++counts[assign[i]];
    }
    for (std::uint32_t c = 0; c < k; ++c) {
      if (counts[c] > 0) centers.row(c) = sums.row(c) / static_cast<double>(counts[c]);
    }
  }
  return centers;
}

void init_codebooks(RqVaeModel& model, const Mat& x, const RqVaeConfig& cfg) {
  const Mat z = encode(model, x);
  Mat q = Mat::Zero(z.rows(), z.cols());
  for (std::uint32_t m = 0; m < model.M(); ++m) {
    const Mat r = z - q;
    model.codebooks[m].vectors = kmeans(r, model.K(), cfg.kmeans_iters, cfg.seed + 7919ull * (m + 1));
    for (Eigen::Index b = 0; b < r.rows(); ++b) {
      q.row(b) += model.codebooks[m].vectors.row(nearest_code(r.row(b).transpose(), model.codebooks[m].vectors));
    }
  }
  model.codebooks_initialized = true;
}

namespace {

std::vector<Mat*> param_list(RqVaeModel& m) {
  std::vector<Mat*> p = {&m.encoder.w1, &m.encoder.b1, &m.encoder.w2, &m.encoder.b2,
                         &m.decoder.w1, &m.decoder.b1, &m.decoder.w2, &m.decoder.b2};
  for (auto& cb : m.codebooks) p.push_back(&cb.vectors);
  return p;
}

std::vector<const Mat*> grad_list(const RqVaeGrads& g) {
  std::vector<const Mat*> p = {&g.encoder.w1, &g.encoder.b1, &g.encoder.w2, &g.encoder.b2,
                               &g.decoder.w1, &g.decoder.b1, &g.decoder.w2, &g.decoder.b2};
  for (const auto& c : g.codebooks) p.push_back(&c);
  return p;
}

bool grads_finite(const RqVaeGrads& g) {
  for (const Mat* m : grad_list(g)) {
    if (!m->allFinite()) return false;
  }
  return g.input.allFinite();
}

}  // namespace

std::vector<LossParts> train_rqvae(RqVaeModel& model, const BatchSource& source,
                                   const RqVaeConfig& cfg) {
  const Eigen::Index n = source.n_items;
  if (n == 0) throw EmptyDatasetError("train_rqvae: no items");
  if (cfg.batch == 0) throw ConfigError("train_rqvae: batch must be positive");
  if (n < static_cast<Eigen::Index>(model.K())) {
    std::cerr << "warning: rqvae: " << n << " items < codebook size " << model.K()
              << "; many codes will stay unused\n";
  }
  std::mt19937_64 rng(cfg.seed ^ 0xA5A5A5A5ull);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  AdamOptions opts;
  opts.lr = cfg.lr;
  Adam adam(opts);
  std::vector<LossParts> log;
  std::normal_distribution<double> noise(0.0, cfg.reseed_noise);
  std::uniform_int_distribution<Eigen::Index> any_item(0, n - 1);

  for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const RqVaeModel last_finite = model;
    std::shuffle(order.begin(), order.end(), rng);
    for (auto& cb : model.codebooks) std::fill(cb.usage.begin(), cb.usage.end(), 0);
    LossParts sum;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch);
      const std::vector<Eigen::Index> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(stop));
      const Mat x = source.rows(rows);
      if (!model.codebooks_initialized) init_codebooks(model, x, cfg);
      const FrozenQuantization frozen = freeze_quantization(x, model);
      for (const auto& codes : frozen.codes)
        for (std::uint32_t m = 0; m < model.M(); ++m) ++model.codebooks[m].usage[codes[m]];
      RqVaeGrads grads;
      const LossParts parts = surrogate_loss(x, model, frozen, &grads);
      if (!std::isfinite(parts.total) || !grads_finite(grads)) {
        model = last_finite;
        std::ostringstream msg;
        msg << "train_rqvae: non-finite loss at epoch " << epoch << " (lr=" << cfg.lr
            << "); model restored to the start of the epoch";
        throw NumericError(msg.str());
      }
      adam.step(param_list(model), grad_list(grads));
      if (source.on_grad) source.on_grad(rows, grads.input);
      sum.total += parts.total;
      sum.recon += parts.recon;
      sum.quant += parts.quant;
      sum.div += parts.div;
      ++n_batches;
    }
    if (n_batches > 0) {
      const double inv = 1.0 / static_cast<double>(n_batches);
      log.push_back({sum.total * inv, sum.recon * inv, sum.quant * inv, sum.div * inv});
    }

    if (cfg.reseed_dead && epoch + 1 < cfg.epochs) {
      for (std::uint32_t m = 0; m < model.M(); ++m) {
        auto& cb = model.codebooks[m];
        for (std::uint32_t k = 0; k < model.K(); ++k) {
          if (cb.usage[k] != 0) continue;
          const Mat xi = source.rows({any_item(rng)});
          const Vec zi = encode(model, xi).row(0).transpose();
          Vec q = Vec::Zero(zi.size());
          for (std::uint32_t j = 0; j < m; ++j) {
            q += model.codebooks[j].vectors.row(nearest_code(zi - q, model.codebooks[j].vectors)).transpose();
          }
          Vec r = zi - q;
          for (Eigen::Index c = 0; c < r.size(); ++c) r(c) += noise(rng);
          cb.vectors.row(k) = r.transpose();
        }
      }
    }
  }
  return log;
}

RqVaeModel train_rqvae(const Mat& fused, const RqVaeConfig& cfg, std::vector<LossParts>* log) {
  RqVaeModel model = init_rqvae(fused.cols(), cfg);
  BatchSource src;
  src.n_items = fused.rows();
  src.rows = [&fused](const std::vector<Eigen::Index>& rows) {
    Mat x(static_cast<Eigen::Index>(rows.size()), fused.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) x.row(static_cast<Eigen::Index>(k)) = fused.row(rows[k]);
    return x;
  };
  auto trace = train_rqvae(model, src, cfg);
  if (log != nullptr) *log = std::move(trace);
  return model;
}

RqVaeModel train_rqvae_joint(const ModalityInputs& inputs, FusionParams& params,
                             const FusionMode& mode, const RqVaeConfig& cfg,
                             std::vector<LossParts>* log) {
  check_fusion_shapes(inputs, params);
  RqVaeModel model = init_rqvae(2 * inputs.dim(), cfg);
  AdamOptions opts;
  opts.lr = cfg.lr;
  Adam fusion_opt(opts);
  BatchSource src;
  src.n_items = inputs.n_items();
  src.rows = [&](const std::vector<Eigen::Index>& rows) { return fuse_rows(inputs, rows, params, mode); };
  if (mode.learns_attention()) {
    src.on_grad = [&](const std::vector<Eigen::Index>& rows, const Mat& grad) {
      Mat gq, gk;
      fuse_rows_backward(inputs, rows, params, mode, grad, gq, gk);
      fusion_opt.step({&params.wq, &params.wk}, {&gq, &gk});
    };
  }
  auto trace = train_rqvae(model, src, cfg);
  if (log != nullptr) *log = std::move(trace);
  return model;
}

std::vector<std::vector<std::uint32_t>> raw_codes(const Mat& fused, const RqVaeModel& model) {
  const Mat z = encode(model, fused);
  std::vector<std::vector<std::uint32_t>> out;
  out.reserve(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) out.push_back(quantize(z.row(i).transpose(), model.codebooks).codes);
  return out;
}

std::vector<SemanticId> assign_ids(const Mat& fused, const RqVaeModel& model) {
  if (model.M() == 0) throw ConfigError("assign_ids: model has no codebooks");
  const Mat z = encode(model, fused);
  const std::uint32_t M = model.M();
  const std::uint32_t K = model.K();
  std::vector<QuantizationResult> q;
  q.reserve(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) q.push_back(quantize(z.row(i).transpose(), model.codebooks));

  std::map<std::vector<std::uint32_t>, std::vector<ItemId>> groups;
  for (std::size_t i = 0; i < q.size(); ++i) groups[q[i].codes].push_back(static_cast<ItemId>(i));

  std::set<std::vector<std::uint32_t>> used;
  for (const auto& [codes, items] : groups) used.insert(codes);

  std::vector<SemanticId> ids(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) ids[i] = {static_cast<ItemId>(i), q[i].codes};

  for (const auto& [codes, items] : groups) {
    for (std::size_t j = 1; j < items.size(); ++j) {
      const ItemId item = items[j];
      // Residual entering the final level: z - (quantized - b_last).
      const Mat& last = model.codebooks[M - 1].vectors;
      const Vec r_prev = q[item].residual + last.row(codes[M - 1]).transpose();
      std::vector<std::pair<double, std::uint32_t>> cand;
      for (std::uint32_t k = 0; k < K; ++k) cand.emplace_back((r_prev.transpose() - last.row(k)).squaredNorm(), k);
      std::sort(cand.begin(), cand.end());
      bool placed = false;
      std::vector<std::uint32_t> t = codes;
      for (const auto& [dist, k] : cand) {
        t[M - 1] = k;
        if (used.insert(t).second) {
          ids[item].tokens = t;
          placed = true;
          break;
        }
      }
      if (!placed) {
        throw NumericError("assign_ids: " + std::to_string(items.size()) +
                           " items share a code prefix but the last level has only K=" +
                           std::to_string(K) + " codes");
      }
    }
  }
  return ids;
}

std::vector<double> code_perplexity(const std::vector<std::vector<std::uint32_t>>& codes,
                                    std::uint32_t M, std::uint32_t K) {
  std::vector<double> out;
  for (std::uint32_t m = 0; m < M; ++m) {
    std::vector<double> counts(K, 0.0);
    for (const auto& c : codes) counts.at(c.at(m)) += 1.0;
    double h = 0.0;
    const double n = static_cast<double>(codes.size());
    for (double c : counts) {
      if (c > 0) h -= (c / n) * std::log(c / n);
    }
    out.push_back(std::exp(h));
  }
  return out;
}

void write_semantic_ids(const std::filesystem::path& path, const std::vector<SemanticId>& ids) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  const std::size_t M = ids.empty() ? 0 : ids.front().tokens.size();
  out << "item_id";
  for (std::size_t m = 1; m <= M; ++m) out << ",c" << m;
  out << '\n';
  for (const auto& id : ids) {
    out << id.item;
    for (auto t : id.tokens) out << ',' << t;
    out << '\n';
  }
}

std::vector<SemanticId> read_semantic_ids(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("item_id", 0) != 0) {
    throw ParseError(path.string() + ": missing item_id header");
  }
  const auto M = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  std::vector<SemanticId> ids;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    std::vector<std::uint64_t> vals;
    while (std::getline(ls, field, ',')) vals.push_back(std::stoull(field));
    if (vals.size() != M + 1) {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": expected " +
                       std::to_string(M + 1) + " fields");
    }
    SemanticId id;
    id.item = static_cast<ItemId>(vals[0]);
    for (std::size_t m = 1; m <= M; ++m) id.tokens.push_back(static_cast<std::uint32_t>(vals[m]));
    ids.push_back(std::move(id));
  }
  return ids;
}

void save_rqvae(const std::filesystem::path& dir, const RqVaeModel& model, const RqVaeConfig& cfg) {
  std::filesystem::create_directories(dir);
  write_emb(dir / "enc_w1.emb", model.encoder.w1);
  write_emb(dir / "enc_b1.emb", model.encoder.b1);
  write_emb(dir / "enc_w2.emb", model.encoder.w2);
  write_emb(dir / "enc_b2.emb", model.encoder.b2);
  write_emb(dir / "dec_w1.emb", model.decoder.w1);
  write_emb(dir / "dec_b1.emb", model.decoder.b1);
  write_emb(dir / "dec_w2.emb", model.decoder.w2);
  write_emb(dir / "dec_b2.emb", model.decoder.b2);
  for (const auto& cb : model.codebooks) {
    write_emb(dir / ("codebook_" + std::to_string(cb.level) + ".emb"), cb.vectors);
  }
  nlohmann::ordered_json j;
  j["M"] = model.M();
  j["K"] = model.K();
  j["h"] = model.latent_dim();
  j["hidden"] = model.encoder.w1.cols();
  j["input_dim"] = model.input_dim();
  j["lambda_q"] = model.lambda_q;
  j["lambda_d"] = model.lambda_d;
  j["beta"] = model.beta;
  j["tau"] = model.tau;
  j["seed"] = cfg.seed;
  std::ofstream(dir / "rqvae.json") << j.dump(2) << '\n';
}

RqVaeModel load_rqvae(const std::filesystem::path& dir) {
  std::ifstream in(dir / "rqvae.json");
  if (!in) throw Error("missing " + (dir / "rqvae.json").string());
  const auto j = nlohmann::json::parse(in);
  RqVaeModel m;
  m.encoder = {read_emb(dir / "enc_w1.emb"), read_emb(dir / "enc_b1.emb"),
               read_emb(dir / "enc_w2.emb"), read_emb(dir / "enc_b2.emb")};
  m.decoder = {read_emb(dir / "dec_w1.emb"), read_emb(dir / "dec_b1.emb"),
               read_emb(dir / "dec_w2.emb"), read_emb(dir / "dec_b2.emb")};
  const auto M = j.at("M").get<std::uint32_t>();
  for (std::uint32_t level = 1; level <= M; ++level) {
    Codebook cb;
    cb.level = level;
    cb.vectors = read_emb(dir / ("codebook_" + std::to_string(level) + ".emb"));
    cb.usage.assign(static_cast<std::size_t>(cb.vectors.rows()), 0);
    m.codebooks.push_back(std::move(cb));
  }
  m.lambda_q = j.at("lambda_q").get<double>();
  m.lambda_d = j.at("lambda_d").get<double>();
  m.beta = j.at("beta").get<double>();
  m.tau = j.at("tau").get<double>();
  m.codebooks_initialized = true;
  return m;
}

}  // namespace genrec
