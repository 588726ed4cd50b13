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

// Residual-quantized autoencoder that turns fused item vectors into
// fixed-length semantic ids.
//
// Loss per batch (means over items):
//   recon = ||x - dec(z + sg(q - z))||^2
//   quant = sum_m ||sg(r_{m-1}) - b_m||^2 + beta ||r_{m-1} - sg(b_m)||^2
//   div   = sum_m sum_k p_mk ln p_mk,  p_mk = mean_b softmax_k(-||r_{m-1} - b_mk||^2 / tau)
//   total = recon + lambda_q quant + lambda_d div

#ifndef GENREC_RQVAE_HPP_
#define GENREC_RQVAE_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "genrec/fusion.hpp"
#include "genrec/types.hpp"

namespace genrec {

// in -> hidden (ReLU) -> out.
struct Mlp {
  Mat w1, b1, w2, b2;

  Eigen::Index in_dim() const { return w1.rows(); }
  Eigen::Index out_dim() const { return w2.cols(); }
  Mat forward(const Mat& x, Mat* pre_activation = nullptr) const;
};

struct MlpGrads {
  Mat w1, b1, w2, b2;
};

Mlp init_mlp(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, std::uint64_t seed);

// Returns dL/dx; parameter gradients are accumulated into `grads`.
Mat mlp_backward(const Mlp& mlp, const Mat& x, const Mat& pre_activation, const Mat& grad_out,
                 MlpGrads& grads);

struct Codebook {
  std::uint32_t level = 1;
  Mat vectors;                       // K x h
  std::vector<std::uint64_t> usage;  // hard assignments since last reset
};

struct RqVaeConfig {
  std::uint32_t M = 4;
  std::uint32_t K = 512;
  std::uint32_t h = 256;
  std::uint32_t hidden = 512;
  double lr = 1e-4;
  std::uint32_t epochs = 200;
  std::uint32_t batch = 256;
  std::uint64_t seed = 42;
  double lambda_q = 0.25;
  double lambda_d = 0.01;
  double beta = 0.25;
  double tau = 1.0;
  std::uint32_t kmeans_iters = 10;
  bool reseed_dead = true;
  double reseed_noise = 0.01;
};

struct RqVaeModel {
  Mlp encoder;  // 2d -> h
  Mlp decoder;  // h -> 2d
  std::vector<Codebook> codebooks;
  double lambda_q = 0.25;
  double lambda_d = 0.01;
  double beta = 0.25;
  double tau = 1.0;
  bool codebooks_initialized = false;

  std::uint32_t M() const { return static_cast<std::uint32_t>(codebooks.size()); }
  std::uint32_t K() const;
  Eigen::Index latent_dim() const { return encoder.out_dim(); }
  Eigen::Index input_dim() const { return encoder.in_dim(); }
};

RqVaeModel init_rqvae(Eigen::Index input_dim, const RqVaeConfig& cfg);

struct QuantizationResult {
  std::vector<std::uint32_t> codes;   // M
  std::vector<double> residual_norms; // M + 1: ||r_0|| .. ||r_M||
  Vec quantized;                      // running sum of chosen codevectors
  Vec residual;                       // r_M = z - quantized
};

// Greedy residual quantization, ties to the lowest index. Residuals are
// formed as z minus the running codevector sum, so z - sum_m b_m == r_M
// holds exactly.
QuantizationResult quantize(const Vec& z, const std::vector<Codebook>& codebooks);

struct LossParts {
  double total = 0.0;
  double recon = 0.0;
  double quant = 0.0;
  double div = 0.0;
};

// Everything held fixed by stop-gradients at one parameter point. Evaluating
// `surrogate_loss` with it gives the straight-through loss as an ordinary
// differentiable function of (encoder, decoder, codebooks).
struct FrozenQuantization {
  std::vector<std::vector<std::uint32_t>> codes;  // per item, M
  Mat ste_offset;                // B x h: q_M - z at freeze time
  std::vector<Mat> prefix_sum;   // per level: q_{m-1}, B x h
  std::vector<Mat> residual;     // per level: r_{m-1} at freeze time
  std::vector<Mat> chosen;       // per level: b_{m, c_m} at freeze time
};

FrozenQuantization freeze_quantization(const Mat& x, const RqVaeModel& model);

struct RqVaeGrads {
  MlpGrads encoder;
  MlpGrads decoder;
  std::vector<Mat> codebooks;
  Mat input;  // dL/dx
};

LossParts surrogate_loss(const Mat& x, const RqVaeModel& model, const FrozenQuantization& frozen,
                         RqVaeGrads* grads = nullptr);

// Forward-only loss on a batch with live quantization. Empty batch -> zeros.
LossParts batch_loss(const Mat& x, const RqVaeModel& model);
LossParts loss_total(const Vec& x, const RqVaeModel& model);

// Seeded k-means (random distinct starting points, Lloyd iterations).
Mat kmeans(const Mat& points, std::uint32_t k, std::uint32_t iters, std::uint64_t seed);

// Runs k-means on the per-level residuals of `x` to set every codebook.
void init_codebooks(RqVaeModel& model, const Mat& x, const RqVaeConfig& cfg);

// Supplies fused rows for a batch and receives dL/d(fused rows) after each step.
struct BatchSource {
  Eigen::Index n_items = 0;
  std::function<Mat(const std::vector<Eigen::Index>&)> rows;
  std::function<void(const std::vector<Eigen::Index>&, const Mat&)> on_grad;
};

// Trains in place. Deterministic given cfg.seed. On a non-finite loss the
// model is restored to its last finite state and NumericError is thrown.
std::vector<LossParts> train_rqvae(RqVaeModel& model, const BatchSource& source,
                                   const RqVaeConfig& cfg);

RqVaeModel train_rqvae(const Mat& fused, const RqVaeConfig& cfg,
                       std::vector<LossParts>* log = nullptr);

// Trains the fusion attention jointly by passing the tokenizer loss back
// through the fused vectors.
RqVaeModel train_rqvae_joint(const ModalityInputs& inputs, FusionParams& params,
                             const FusionMode& mode, const RqVaeConfig& cfg,
                             std::vector<LossParts>* log = nullptr);

Mat encode(const RqVaeModel& model, const Mat& x);

struct SemanticId {
  ItemId item = 0;
  std::vector<std::uint32_t> tokens;
};

// Quantizes every row, then resolves duplicate code tuples: in ascending item
// order, the first holder keeps its codes and each later one takes the
// nearest (by final-level residual distance) unused final-level code.
std::vector<SemanticId> assign_ids(const Mat& fused, const RqVaeModel& model);

// Raw quantization codes for every row (no collision handling).
std::vector<std::vector<std::uint32_t>> raw_codes(const Mat& fused, const RqVaeModel& model);

// exp(entropy) of each level's hard code distribution.
std::vector<double> code_perplexity(const std::vector<std::vector<std::uint32_t>>& codes,
                                    std::uint32_t M, std::uint32_t K);

void write_semantic_ids(const std::filesystem::path& path, const std::vector<SemanticId>& ids);
std::vector<SemanticId> read_semantic_ids(const std::filesystem::path& path);

void save_rqvae(const std::filesystem::path& dir, const RqVaeModel& model, const RqVaeConfig& cfg);
RqVaeModel load_rqvae(const std::filesystem::path& dir);

}  // namespace genrec

#endif  // GENREC_RQVAE_HPP_
