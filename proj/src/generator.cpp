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

#include "genrec/generator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "genrec/emb_io.hpp"
#include "genrec/optim.hpp"
#include "json.hpp"

namespace genrec {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

double gelu_grad(double x) {
  const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

struct LnCache {
  Mat xhat;
  Vec rstd;
};

Mat layer_norm(const Mat& x, const Mat& g, const Mat& b, LnCache* cache) {
  const Eigen::Index n = x.rows();
  Mat xhat(n, x.cols());
  Vec rstd(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().mean();
    rstd(i) = 1.0 / std::sqrt(var + kLnEps);
    xhat.row(i) = (x.row(i).array() - mu) * rstd(i);
  }
  Mat y = (xhat.array().rowwise() * g.row(0).array()).matrix();
  y.rowwise() += b.row(0);
  if (cache != nullptr) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

Mat layer_norm_backward(const LnCache& c, const Mat& g, const Mat& dy, Mat& dg, Mat& db) {
  dg.row(0) += (dy.array() * c.xhat.array()).matrix().colwise().sum();
  db.row(0) += dy.colwise().sum();
  const Mat dxhat = (dy.array().rowwise() * g.row(0).array()).matrix();
  const double w = static_cast<double>(dy.cols());
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double m1 = dxhat.row(i).sum() / w;
    const double m2 = dxhat.row(i).dot(c.xhat.row(i)) / w;
    dx.row(i) = c.rstd(i) * (dxhat.row(i).array() - m1 - c.xhat.row(i).array() * m2).matrix();
  }
  return dx;
}

RowVec layer_norm_row(const RowVec& x, const Mat& g, const Mat& b) {
  const double mu = x.mean();
  const double var = (x.array() - mu).square().mean();
  const double rstd = 1.0 / std::sqrt(var + kLnEps);
  return ((x.array() - mu) * rstd * g.row(0).array() + b.row(0).array()).matrix();
}

struct LayerCache {
  Mat x_in;
  LnCache ln1;
  Mat h1;
  Mat qkv;
  std::vector<Mat> probs;  // per (sequence, head)
  Mat attn;
  Mat x_mid;
  LnCache ln2;
  Mat h2;
  Mat pre;
  Mat act;
};

struct ForwardCache {
  std::vector<Eigen::Index> offsets;  // size n_seq + 1
  std::vector<std::uint32_t> tokens;
  std::vector<LayerCache> layers;
  LnCache lnf;
  Mat hf;
  Mat logits;
};

Mat forward(const GeneratorModel& model, const std::vector<TrainSequence>& batch,
            ForwardCache* cache) {
  const Eigen::Index W = model.width();
  const Eigen::Index H = model.n_heads;
  const Eigen::Index D = W / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(D));
  const std::uint32_t V = model.vocab.size();

  std::vector<Eigen::Index> offsets{0};
  for (const auto& s : batch) {
    if (s.input.empty()) throw ConfigError("generator: empty input sequence");
    if (s.input.size() > model.max_len) {
      throw ConfigError("generator: sequence length " + std::to_string(s.input.size()) +
                        " exceeds max_len " + std::to_string(model.max_len));
    }
    offsets.push_back(offsets.back() + static_cast<Eigen::Index>(s.input.size()));
  }
  const Eigen::Index N = offsets.back();

  Mat x(N, W);
  std::vector<std::uint32_t> tokens;
  tokens.reserve(static_cast<std::size_t>(N));
  for (std::size_t s = 0; s < batch.size(); ++s) {
    for (std::size_t t = 0; t < batch[s].input.size(); ++t) {
      const std::uint32_t tok = batch[s].input[t];
      if (tok >= V) throw ConfigError("generator: token " + std::to_string(tok) + " out of range");
      tokens.push_back(tok);
      x.row(offsets[s] + static_cast<Eigen::Index>(t)) =
          model.tok_emb.row(tok) + model.pos_emb.row(static_cast<Eigen::Index>(t));
    }
  }

  std::vector<LayerCache> lcs;
  for (const GeneratorLayer& L : model.layers) {
    LayerCache lc;
    lc.x_in = x;
    lc.h1 = layer_norm(x, L.ln1_g, L.ln1_b, &lc.ln1);
    lc.qkv = lc.h1 * L.w_qkv;
    lc.qkv.rowwise() += L.b_qkv.row(0);
    lc.attn.resize(N, W);
    for (std::size_t s = 0; s < batch.size(); ++s) {
      const Eigen::Index o = offsets[s];
      const Eigen::Index T = offsets[s + 1] - o;
      for (Eigen::Index h = 0; h < H; ++h) {
        const auto Q = lc.qkv.block(o, h * D, T, D);
        const auto K = lc.qkv.block(o, W + h * D, T, D);
        const auto Vv = lc.qkv.block(o, 2 * W + h * D, T, D);
        Mat P = (Q * K.transpose()) * scale;
        for (Eigen::Index i = 0; i < T; ++i) {
          const double m = P.row(i).head(i + 1).maxCoeff();
          double z = 0.0;
          for (Eigen::Index j = 0; j <= i; ++j) {
            P(i, j) = std::exp(P(i, j) - m);
            z += P(i, j);
          }
          P.row(i).head(i + 1) /= z;
          P.row(i).tail(T - i - 1).setZero();
        }
        lc.attn.block(o, h * D, T, D) = P * Vv;
        lc.probs.push_back(std::move(P));
      }
    }
    x = x + lc.attn * L.w_o;
    x.rowwise() += L.b_o.row(0);
    lc.x_mid = x;
    lc.h2 = layer_norm(x, L.ln2_g, L.ln2_b, &lc.ln2);
    lc.pre = lc.h2 * L.w_fc1;
    lc.pre.rowwise() += L.b_fc1.row(0);
    lc.act = lc.pre.unaryExpr([](double v) { return gelu(v); });
    x = x + lc.act * L.w_fc2;
    x.rowwise() += L.b_fc2.row(0);
    if (cache != nullptr) lcs.push_back(std::move(lc));
  }
  LnCache lnf;
  Mat hf = layer_norm(x, model.lnf_g, model.lnf_b, &lnf);
  Mat logits = hf * model.w_out;
  logits.rowwise() += model.b_out.row(0);
  if (cache != nullptr) {
    cache->offsets = std::move(offsets);
    cache->tokens = std::move(tokens);
    cache->layers = std::move(lcs);
    cache->lnf = std::move(lnf);
    cache->hf = std::move(hf);
  }
  return logits;
}

GeneratorModel zeros_like(const GeneratorModel& m) {
  GeneratorModel z = m;
  for (auto& [name, p] : z.named_params()) p->setZero();
  return z;
}

void backward(const GeneratorModel& model, const ForwardCache& c, const Mat& dlogits,
              GeneratorModel& g) {
  const Eigen::Index W = model.width();
  const Eigen::Index H = model.n_heads;
  const Eigen::Index D = W / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(D));

  g.w_out.noalias() += c.hf.transpose() * dlogits;
  g.b_out.row(0) += dlogits.colwise().sum();
  Mat dx = layer_norm_backward(c.lnf, model.lnf_g, dlogits * model.w_out.transpose(), g.lnf_g,
                               g.lnf_b);

  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const GeneratorLayer& L = model.layers[li];
    GeneratorLayer& G = g.layers[li];
    const LayerCache& lc = c.layers[li];

    G.w_fc2.noalias() += lc.act.transpose() * dx;
    G.b_fc2.row(0) += dx.colwise().sum();
    Mat dpre = dx * L.w_fc2.transpose();
    dpre.array() *= lc.pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
    G.w_fc1.noalias() += lc.h2.transpose() * dpre;
    G.b_fc1.row(0) += dpre.colwise().sum();
    dx += layer_norm_backward(lc.ln2, L.ln2_g, dpre * L.w_fc1.transpose(), G.ln2_g, G.ln2_b);

    G.w_o.noalias() += lc.attn.transpose() * dx;
    G.b_o.row(0) += dx.colwise().sum();
    const Mat dattn = dx * L.w_o.transpose();
    Mat dqkv = Mat::Zero(dx.rows(), 3 * W);
    std::size_t pi = 0;
    for (std::size_t s = 0; s + 1 < c.offsets.size(); ++s) {
      const Eigen::Index o = c.offsets[s];
      const Eigen::Index T = c.offsets[s + 1] - o;
      for (Eigen::Index h = 0; h < H; ++h) {
        const Mat& P = lc.probs[pi++];
        const auto Q = lc.qkv.block(o, h * D, T, D);
        const auto K = lc.qkv.block(o, W + h * D, T, D);
        const auto Vv = lc.qkv.block(o, 2 * W + h * D, T, D);
        const auto dO = dattn.block(o, h * D, T, D);
        const Mat dP = dO * Vv.transpose();
        dqkv.block(o, 2 * W + h * D, T, D) = P.transpose() * dO;
        const Vec rs = (dP.array() * P.array()).rowwise().sum();
        const Mat dS = (P.array() * (dP.array().colwise() - rs.array())).matrix() * scale;
        dqkv.block(o, h * D, T, D) = dS * K;
        dqkv.block(o, W + h * D, T, D) = dS.transpose() * Q;
      }
    }
    G.w_qkv.noalias() += lc.h1.transpose() * dqkv;
    G.b_qkv.row(0) += dqkv.colwise().sum();
    dx += layer_norm_backward(lc.ln1, L.ln1_g, dqkv * L.w_qkv.transpose(), G.ln1_g, G.ln1_b);
  }

  std::size_t k = 0;
  for (std::size_t s = 0; s + 1 < c.offsets.size(); ++s) {
    for (Eigen::Index t = 0; t < c.offsets[s + 1] - c.offsets[s]; ++t, ++k) {
      const Eigen::Index row = c.offsets[s] + t;
      g.tok_emb.row(c.tokens[k]) += dx.row(row);
      g.pos_emb.row(t) += dx.row(row);
    }
  }
}

// Sum of cross-entropies and the number of scored targets; fills dlogits
// with d(sum)/d(logits) when non-null.
std::pair<double, std::size_t> cross_entropy(const Mat& logits,
                                             const std::vector<TrainSequence>& batch,
                                             Mat* dlogits) {
  double sum = 0.0;
  std::size_t count = 0;
  if (dlogits != nullptr) *dlogits = Mat::Zero(logits.rows(), logits.cols());
  Eigen::Index row = 0;
  for (const auto& s : batch) {
    if (s.target.size() != s.input.size()) {
      throw ConfigError("generator: target length does not match input length");
    }
    for (std::size_t t = 0; t < s.input.size(); ++t, ++row) {
      const std::int32_t y = s.target[t];
      if (y < 0) continue;
      if (y >= logits.cols()) throw ConfigError("generator: target token out of range");
      const RowVec lp = log_softmax(logits.row(row));
      sum -= lp(y);
      ++count;
      if (dlogits != nullptr) {
        dlogits->row(row) = lp.array().exp().matrix();
        (*dlogits)(row, y) -= 1.0;
      }
    }
  }
  return {sum, count};
}

std::vector<std::uint32_t> flatten_tokens(const std::vector<std::vector<std::uint32_t>>& history,
                                          const VocabSpec& vocab, std::size_t first) {
  std::vector<std::uint32_t> out;
  for (std::size_t i = first; i < history.size(); ++i) {
    const auto& codes = history[i];
    if (codes.size() != vocab.M) throw ConfigError("prompt: item code length differs from M");
    for (std::uint32_t m = 0; m < vocab.M; ++m) out.push_back(vocab.token_id(m + 1, codes[m]));
  }
  return out;
}

std::pair<double, std::size_t> eval_loss_sum(const GeneratorModel& model,
                                             const std::vector<TrainSequence>& seqs,
                                             std::size_t chunk) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < seqs.size(); b += chunk) {
    const std::vector<TrainSequence> part(seqs.begin() + static_cast<std::ptrdiff_t>(b),
                                          seqs.begin() + static_cast<std::ptrdiff_t>(
                                                             std::min(seqs.size(), b + chunk)));
    const auto [s, n] = cross_entropy(forward(model, part, nullptr), part, nullptr);
    sum += s;
    count += n;
  }
  return {sum, count};
}

}  // namespace

std::uint32_t VocabSpec::token_id(std::uint32_t level, std::uint32_t code) const {
  if (level < 1 || level > M) throw ConfigError("token_id: level out of range");
  if (code >= K) throw ConfigError("token_id: code out of range");
  return 2 + (level - 1) * K + code;
}

std::pair<std::uint32_t, std::uint32_t> VocabSpec::decode(std::uint32_t token) const {
  if (token < 2 || token >= size()) {
    throw ConfigError("decode: token " + std::to_string(token) + " is not a code token");
  }
  const std::uint32_t off = token - 2;
  return {off / K + 1, off % K};
}

IdTable::IdTable(const std::vector<SemanticId>& ids) {
  ItemId max_item = 0;
  for (const auto& s : ids) max_item = std::max(max_item, s.item);
  codes_.assign(ids.empty() ? 0 : static_cast<std::size_t>(max_item) + 1, {});
  for (const auto& s : ids) {
    if (M_ == 0) M_ = static_cast<std::uint32_t>(s.tokens.size());
    if (s.tokens.size() != M_) throw ConfigError("IdTable: inconsistent code lengths");
    codes_[s.item] = s.tokens;
  }
  for (std::size_t i = 0; i < codes_.size(); ++i) {
    if (codes_[i].empty()) throw ConfigError("IdTable: item " + std::to_string(i) + " has no id");
  }
}

const std::vector<std::uint32_t>& IdTable::codes(ItemId item) const {
  if (item >= codes_.size()) throw ConfigError("IdTable: unknown item " + std::to_string(item));
  return codes_[item];
}

Prompt build_prompt(const std::vector<std::vector<std::uint32_t>>& history, const VocabSpec& vocab,
                    std::uint32_t max_len) {
  if (history.empty()) throw ConfigError("build_prompt: empty history");
  if (max_len < 1) throw ConfigError("build_prompt: max_len must be at least 1");
  const std::size_t fit = (max_len - 1) / vocab.M;
  const std::size_t first = history.size() > fit ? history.size() - fit : 0;
  Prompt p;
  p.max_len = max_len;
  p.tokens.push_back(VocabSpec::kBos);
  const auto body = flatten_tokens(history, vocab, first);
  p.tokens.insert(p.tokens.end(), body.begin(), body.end());
  return p;
}

std::vector<std::pair<std::string, Mat*>> GeneratorModel::named_params() {
  std::vector<std::pair<std::string, Mat*>> out{{"tok_emb", &tok_emb}, {"pos_emb", &pos_emb}};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    GeneratorLayer& L = layers[i];
    const std::string p = "l" + std::to_string(i) + "_";
    out.insert(out.end(), {{p + "ln1_g", &L.ln1_g},
                           {p + "ln1_b", &L.ln1_b},
                           {p + "w_qkv", &L.w_qkv},
                           {p + "b_qkv", &L.b_qkv},
                           {p + "w_o", &L.w_o},
                           {p + "b_o", &L.b_o},
                           {p + "ln2_g", &L.ln2_g},
                           {p + "ln2_b", &L.ln2_b},
                           {p + "w_fc1", &L.w_fc1},
                           {p + "b_fc1", &L.b_fc1},
                           {p + "w_fc2", &L.w_fc2},
                           {p + "b_fc2", &L.b_fc2}});
  }
  out.insert(out.end(),
             {{"lnf_g", &lnf_g}, {"lnf_b", &lnf_b}, {"w_out", &w_out}, {"b_out", &b_out}});
  return out;
}

std::vector<std::pair<std::string, const Mat*>> GeneratorModel::named_params() const {
  auto mut = const_cast<GeneratorModel*>(this)->named_params();
  std::vector<std::pair<std::string, const Mat*>> out;
  out.reserve(mut.size());
  for (auto& [n, p] : mut) out.emplace_back(n, p);
  return out;
}

GeneratorModel init_generator(const VocabSpec& vocab, const GeneratorConfig& cfg) {
  if (cfg.n_heads == 0 || cfg.width % cfg.n_heads != 0) {
    throw ConfigError("generator: width must be divisible by n_heads");
  }
  if (vocab.M == 0 || vocab.K == 0) throw ConfigError("generator: empty vocabulary");
  GeneratorModel m;
  m.vocab = vocab;
  m.n_heads = cfg.n_heads;
  m.max_len = cfg.max_len == 0 ? 1 + 50 * vocab.M : cfg.max_len;
  const Eigen::Index W = cfg.width;
  const Eigen::Index F = static_cast<Eigen::Index>(cfg.width) * cfg.ff_mult;
  const Eigen::Index V = vocab.size();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto randn = [&](Eigen::Index r, Eigen::Index c, double sd) {
    Mat w(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) w(i, j) = sd * gauss(rng);
    return w;
  };
  const double sd = cfg.init_std;
  const double sd_res = sd / std::sqrt(2.0 * std::max<std::uint32_t>(1, cfg.n_layers));
  m.tok_emb = randn(V, W, sd);
  m.pos_emb = randn(m.max_len, W, sd);
  for (std::uint32_t l = 0; l < cfg.n_layers; ++l) {
    GeneratorLayer L;
    L.ln1_g = Mat::Ones(1, W);
    L.ln1_b = Mat::Zero(1, W);
    L.w_qkv = randn(W, 3 * W, sd);
    L.b_qkv = Mat::Zero(1, 3 * W);
    L.w_o = randn(W, W, sd_res);
    L.b_o = Mat::Zero(1, W);
    L.ln2_g = Mat::Ones(1, W);
    L.ln2_b = Mat::Zero(1, W);
    L.w_fc1 = randn(W, F, sd);
    L.b_fc1 = Mat::Zero(1, F);
    L.w_fc2 = randn(F, W, sd_res);
    L.b_fc2 = Mat::Zero(1, W);
    m.layers.push_back(std::move(L));
  }
  m.lnf_g = Mat::Ones(1, W);
  m.lnf_b = Mat::Zero(1, W);
  m.w_out = randn(W, V, sd);
  m.b_out = Mat::Zero(1, V);
  return m;
}

Mat forward_logits(const GeneratorModel& model, const std::vector<TrainSequence>& batch) {
  return forward(model, batch, nullptr);
}

double ntp_loss(const GeneratorModel& model, const std::vector<TrainSequence>& batch,
                std::vector<Mat>* grads) {
  ForwardCache cache;
  const Mat logits = forward(model, batch, grads != nullptr ? &cache : nullptr);
  Mat dlogits;
  const auto [sum, count] = cross_entropy(logits, batch, grads != nullptr ? &dlogits : nullptr);
  if (count == 0) throw ConfigError("ntp_loss: no scored targets in batch");
  const double loss = sum / static_cast<double>(count);
  if (grads != nullptr) {
    dlogits /= static_cast<double>(count);
    GeneratorModel g = zeros_like(model);
    backward(model, cache, dlogits, g);
    grads->clear();
    for (auto& [name, p] : g.named_params()) grads->push_back(std::move(*p));
  }
  return loss;
}

std::vector<TrainSequence> training_sequences(const SplitDataset& split, const IdTable& ids,
                                              const VocabSpec& vocab, std::uint32_t max_len) {
  const std::size_t cap = max_len / vocab.M;
  if (cap < 2) throw ConfigError("training_sequences: max_len too small for two items");
  std::vector<TrainSequence> out;
  for (const UserSplit& us : split.users) {
    const std::size_t n = us.train.size();
    std::size_t e = n;
    while (e > 1) {
      const std::size_t s = e > cap ? e - cap : 0;
      std::vector<std::vector<std::uint32_t>> items;
      for (std::size_t i = s; i < e; ++i) items.push_back(ids.codes(us.train[i]));
      std::vector<std::uint32_t> tokens{VocabSpec::kBos};
      const auto body = flatten_tokens(items, vocab, 0);
      tokens.insert(tokens.end(), body.begin(), body.end());
      TrainSequence seq;
      seq.input.assign(tokens.begin(), tokens.end() - 1);
      seq.target.resize(seq.input.size());
      for (std::size_t t = 0; t < seq.input.size(); ++t) {
        seq.target[t] = t < vocab.M ? -1 : static_cast<std::int32_t>(tokens[t + 1]);
      }
      out.push_back(std::move(seq));
      e = s + 1;
    }
  }
  return out;
}

std::vector<ItemId> history_for(const UserSplit& us, HistoryMode mode) {
  std::vector<ItemId> h = us.train;
  if (mode == HistoryMode::kTest) h.push_back(us.valid);
  return h;
}

std::vector<TrainSequence> heldout_sequences(const SplitDataset& split, const IdTable& ids,
                                             const VocabSpec& vocab, std::uint32_t max_len,
                                             HistoryMode mode) {
  if (max_len < vocab.M) throw ConfigError("heldout_sequences: max_len smaller than M");
  std::vector<TrainSequence> out;
  for (const UserSplit& us : split.users) {
    std::vector<std::vector<std::uint32_t>> hist;
    for (ItemId it : history_for(us, mode)) hist.push_back(ids.codes(it));
    const Prompt p = build_prompt(hist, vocab, max_len - (vocab.M - 1));
    const auto& target = ids.codes(mode == HistoryMode::kTest ? us.test : us.valid);
    TrainSequence seq;
    seq.input = p.tokens;
    seq.target.assign(p.tokens.size() - 1, -1);
    for (std::uint32_t m = 0; m < vocab.M; ++m) {
      const std::uint32_t tok = vocab.token_id(m + 1, target[m]);
      seq.target.push_back(static_cast<std::int32_t>(tok));
      if (m + 1 < vocab.M) seq.input.push_back(tok);
    }
    out.push_back(std::move(seq));
  }
  return out;
}

GeneratorModel train_generator(const std::vector<TrainSequence>& train,
                               const std::vector<TrainSequence>& valid, const VocabSpec& vocab,
                               const GeneratorConfig& cfg, GeneratorTrainLog* log) {
  if (train.empty()) throw EmptyDatasetError("train_generator: no training sequences");
  GeneratorModel model = init_generator(vocab, cfg);
  AdamOptions opts;
  opts.lr = cfg.lr;
  opts.clip_norm = cfg.clip_norm;
  Adam adam(opts);
  std::vector<Mat*> params;
  for (auto& [name, p] : model.named_params()) params.push_back(p);

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = std::max<std::uint32_t>(1, cfg.batch);

  GeneratorModel best = model;
  double best_val = std::numeric_limits<double>::infinity();
  GeneratorTrainLog local;
  for (std::uint32_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t b = 0; b < order.size(); b += batch) {
      std::vector<TrainSequence> part;
      for (std::size_t i = b; i < std::min(order.size(), b + batch); ++i) {
        part.push_back(train[order[i]]);
      }
      std::vector<Mat> grads;
      const double loss = ntp_loss(model, part, &grads);
      if (!std::isfinite(loss)) {
        model = best;
        throw NumericError("train_generator: non-finite loss at epoch " + std::to_string(epoch));
      }
      std::vector<const Mat*> gp;
      for (const Mat& g : grads) gp.push_back(&g);
      adam.step(params, gp);
      loss_sum += loss;
      ++n_batches;
    }
    const double train_loss = loss_sum / static_cast<double>(n_batches);
    double val_loss = train_loss;
    if (!valid.empty()) {
      const auto [s, n] = eval_loss_sum(model, valid, 256);
      if (n > 0) val_loss = s / static_cast<double>(n);
    }
    if (!std::isfinite(val_loss)) {
      throw NumericError("train_generator: non-finite validation loss at epoch " +
                         std::to_string(epoch));
    }
    local.train_loss.push_back(train_loss);
    local.val_loss.push_back(val_loss);
    if (val_loss < best_val) {
      best_val = val_loss;
      best = model;
      local.best_epoch = epoch;
      local.best_val_loss = val_loss;
    }
  }
  if (log != nullptr) *log = std::move(local);
  return cfg.epochs == 0 ? model : best;
}

GeneratorModel train_generator(const SplitDataset& split, const IdTable& ids,
                               const VocabSpec& vocab, const GeneratorConfig& cfg,
                               GeneratorTrainLog* log) {
  const std::uint32_t max_len = cfg.max_len == 0 ? 1 + 50 * vocab.M : cfg.max_len;
  const auto train = training_sequences(split, ids, vocab, max_len);
  const auto valid = heldout_sequences(split, ids, vocab, max_len, HistoryMode::kValidation);
  GeneratorConfig c = cfg;
  c.max_len = max_len;
  return train_generator(train, valid, vocab, c, log);
}

DecodeSession::DecodeSession(const GeneratorModel& model) : model_(&model) {
  suffix_.k.assign(model.layers.size(), Mat(0, model.width()));
  suffix_.v.assign(model.layers.size(), Mat(0, model.width()));
}

const RowVec& DecodeSession::push(std::uint32_t token) {
  const GeneratorModel& m = *model_;
  const std::size_t pos = length();
  if (pos >= m.max_len) throw ConfigError("DecodeSession: max_len exceeded");
  if (token >= m.vocab.size()) throw ConfigError("DecodeSession: token out of range");
  const Eigen::Index W = m.width();
  const Eigen::Index H = m.n_heads;
  const Eigen::Index D = W / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(D));
  const auto T = static_cast<Eigen::Index>(pos + 1);
  const auto nb = static_cast<Eigen::Index>(base_len_);

  RowVec x = m.tok_emb.row(token) + m.pos_emb.row(static_cast<Eigen::Index>(pos));
  std::vector<double> scores(static_cast<std::size_t>(T));
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const GeneratorLayer& L = m.layers[l];
    const RowVec h1 = layer_norm_row(x, L.ln1_g, L.ln1_b);
    const RowVec qkv = h1 * L.w_qkv + L.b_qkv;
    Mat& ks = suffix_.k[l];
    Mat& vs = suffix_.v[l];
    ks.conservativeResize(ks.rows() + 1, W);
    vs.conservativeResize(vs.rows() + 1, W);
    ks.row(ks.rows() - 1) = qkv.segment(W, W);
    vs.row(vs.rows() - 1) = qkv.segment(2 * W, W);
    auto key = [&](Eigen::Index j) -> Eigen::Ref<const RowVec> {
      if (j < nb) return base_->k[l].row(j);
      return ks.row(j - nb);
    };
    auto val = [&](Eigen::Index j) -> Eigen::Ref<const RowVec> {
      if (j < nb) return base_->v[l].row(j);
      return vs.row(j - nb);
    };
    RowVec attn(W);
    for (Eigen::Index h = 0; h < H; ++h) {
      const RowVec q = qkv.segment(h * D, D);
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < T; ++j) {
        const double s = q.dot(key(j).segment(h * D, D)) * scale;
        scores[static_cast<std::size_t>(j)] = s;
        mx = std::max(mx, s);
      }
      double z = 0.0;
      for (Eigen::Index j = 0; j < T; ++j) {
        double& s = scores[static_cast<std::size_t>(j)];
        s = std::exp(s - mx);
        z += s;
      }
      RowVec o = RowVec::Zero(D);
      for (Eigen::Index j = 0; j < T; ++j) {
        o += (scores[static_cast<std::size_t>(j)] / z) * val(j).segment(h * D, D);
      }
      attn.segment(h * D, D) = o;
    }
    x += attn * L.w_o + L.b_o;
    const RowVec h2 = layer_norm_row(x, L.ln2_g, L.ln2_b);
    RowVec pre = h2 * L.w_fc1 + L.b_fc1;
    pre = pre.unaryExpr([](double v) { return gelu(v); });
    x += pre * L.w_fc2 + L.b_fc2;
  }
  const RowVec hf = layer_norm_row(x, m.lnf_g, m.lnf_b);
  logits_ = hf * m.w_out + m.b_out;
  ++suffix_len_;
  return logits_;
}

void DecodeSession::seal() {
  if (suffix_len_ == 0) return;
  auto merged = std::make_shared<Cache>();
  const Eigen::Index W = model_->width();
  const auto nb = static_cast<Eigen::Index>(base_len_);
  const auto ns = static_cast<Eigen::Index>(suffix_len_);
  for (std::size_t l = 0; l < model_->layers.size(); ++l) {
    Mat k(nb + ns, W);
    Mat v(nb + ns, W);
    if (nb > 0) {
      k.topRows(nb) = base_->k[l];
      v.topRows(nb) = base_->v[l];
    }
    k.bottomRows(ns) = suffix_.k[l];
    v.bottomRows(ns) = suffix_.v[l];
    merged->k.push_back(std::move(k));
    merged->v.push_back(std::move(v));
    suffix_.k[l].resize(0, W);
    suffix_.v[l].resize(0, W);
  }
  base_ = std::move(merged);
  base_len_ += suffix_len_;
  suffix_len_ = 0;
}

RowVec log_softmax(const RowVec& logits) {
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return (logits.array() - lse).matrix();
}

RowVec next_token_logprobs(const GeneratorModel& model, const std::vector<std::uint32_t>& prefix) {
  if (prefix.empty()) throw ConfigError("next_token_logprobs: empty prefix");
  if (prefix.size() > model.max_len) {
    throw ConfigError("next_token_logprobs: prefix length " + std::to_string(prefix.size()) +
                      " exceeds max_len " + std::to_string(model.max_len));
  }
  DecodeSession s(model);
  for (std::uint32_t t : prefix) s.push(t);
  return log_softmax(s.logits());
}

void save_generator(const std::filesystem::path& dir, const GeneratorModel& model,
                    const GeneratorCheckpointInfo& info) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json j;
  j["M"] = model.vocab.M;
  j["K"] = model.vocab.K;
  j["n_layers"] = model.layers.size();
  j["n_heads"] = model.n_heads;
  j["width"] = model.width();
  j["ff_dim"] = model.layers.empty() ? 0 : model.layers[0].w_fc1.cols();
  j["max_len"] = model.max_len;
  j["lr"] = info.cfg.lr;
  j["epochs"] = info.cfg.epochs;
  j["batch"] = info.cfg.batch;
  j["seed"] = info.cfg.seed;
  j["best_epoch"] = info.epoch;
  j["val_loss"] = info.val_loss;
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  for (const auto& [name, p] : model.named_params()) {
    write_emb(dir / (name + ".emb"), *p);
    tensors.push_back(name);
  }
  j["tensors"] = tensors;
  std::ofstream(dir / "generator.json") << j.dump(2) << '\n';
}

GeneratorModel load_generator(const std::filesystem::path& dir) {
  std::ifstream in(dir / "generator.json");
  if (!in) throw ParseError("load_generator: missing " + (dir / "generator.json").string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("load_generator: ") + e.what());
  }
  VocabSpec vocab{j.at("M").get<std::uint32_t>(), j.at("K").get<std::uint32_t>()};
  GeneratorConfig cfg;
  cfg.n_layers = j.at("n_layers").get<std::uint32_t>();
  cfg.n_heads = j.at("n_heads").get<std::uint32_t>();
  cfg.width = j.at("width").get<std::uint32_t>();
  const auto ff = j.at("ff_dim").get<std::uint32_t>();
  cfg.ff_mult = cfg.width == 0 ? 1 : ff / cfg.width;
  cfg.max_len = j.at("max_len").get<std::uint32_t>();
  GeneratorModel m = init_generator(vocab, cfg);
  for (auto& [name, p] : m.named_params()) {
    Mat t = read_emb(dir / (name + ".emb"));
    if (t.rows() != p->rows() || t.cols() != p->cols()) {
      throw ParseError("load_generator: tensor " + name + " has wrong shape");
    }
    *p = std::move(t);
  }
  return m;
}

}  // namespace genrec
