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

// Semantic-token vocabulary, history prompts and a small decoder-only
// transformer trained with next-token prediction.

#ifndef GENREC_GENERATOR_HPP_
#define GENREC_GENERATOR_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "genrec/dataset.hpp"
#include "genrec/rqvae.hpp"
#include "genrec/types.hpp"

namespace genrec {

// token_id(m, k) = 2 + (m - 1) K + k for level m in 1..M, code k in 0..K-1.
struct VocabSpec {
  static constexpr std::uint32_t kPad = 0;
  static constexpr std::uint32_t kBos = 1;

  std::uint32_t M = 4;
  std::uint32_t K = 512;

  std::uint32_t size() const { return 2 + M * K; }
  std::uint32_t token_id(std::uint32_t level, std::uint32_t code) const;
  // Inverse of token_id; throws for special or out-of-range tokens.
  std::pair<std::uint32_t, std::uint32_t> decode(std::uint32_t token) const;
};

// Per-item code sequences indexed by item id.
class IdTable {
 public:
  IdTable() = default;
  explicit IdTable(const std::vector<SemanticId>& ids);

  const std::vector<std::uint32_t>& codes(ItemId item) const;
  std::size_t size() const { return codes_.size(); }
  std::uint32_t M() const { return M_; }

 private:
  std::vector<std::vector<std::uint32_t>> codes_;
  std::uint32_t M_ = 0;
};

struct Prompt {
  std::vector<std::uint32_t> tokens;
  std::uint32_t max_len = 0;
};

// [BOS] followed by the history's tokens in order. When too long, the oldest
// items are dropped whole. Throws on an empty history.
Prompt build_prompt(const std::vector<std::vector<std::uint32_t>>& history, const VocabSpec& vocab,
                    std::uint32_t max_len);

struct GeneratorConfig {
  std::uint32_t n_layers = 6;
  std::uint32_t n_heads = 8;
  std::uint32_t width = 256;
  std::uint32_t ff_mult = 4;
  std::uint32_t max_len = 0;  // 0 -> 1 + 50 M
  double lr = 1e-4;
  std::uint32_t epochs = 30;
  std::uint32_t batch = 32;
  std::uint64_t seed = 42;
  double clip_norm = 1.0;
  double init_std = 0.02;
};

struct GeneratorLayer {
  Mat ln1_g, ln1_b;
  Mat w_qkv, b_qkv;  // W x 3W
  Mat w_o, b_o;
  Mat ln2_g, ln2_b;
  Mat w_fc1, b_fc1;  // W x F
  Mat w_fc2, b_fc2;  // F x W
};

struct GeneratorModel {
  VocabSpec vocab;
  std::uint32_t n_heads = 1;
  std::uint32_t max_len = 0;
  Mat tok_emb;  // V x W
  Mat pos_emb;  // max_len x W
  std::vector<GeneratorLayer> layers;
  Mat lnf_g, lnf_b;
  Mat w_out, b_out;  // W x V

  std::uint32_t width() const { return static_cast<std::uint32_t>(tok_emb.cols()); }

  // Stable order used by the optimizer and checkpoints.
  std::vector<std::pair<std::string, Mat*>> named_params();
  std::vector<std::pair<std::string, const Mat*>> named_params() const;
};

GeneratorModel init_generator(const VocabSpec& vocab, const GeneratorConfig& cfg);

// One training sequence: input tokens and per-position targets (-1 = ignore).
struct TrainSequence {
  std::vector<std::uint32_t> input;
  std::vector<std::int32_t> target;
};

// Logits for every position of every sequence, stacked row-wise.
Mat forward_logits(const GeneratorModel& model, const std::vector<TrainSequence>& batch);

// Mean cross-entropy over non-ignored targets. Throws when every target is
// ignored. Writes gradients (same order as named_params) when non-null.
double ntp_loss(const GeneratorModel& model, const std::vector<TrainSequence>& batch,
                std::vector<Mat>* grads = nullptr);

// Sliding windows over each user's training prefix. Every item except the
// first of a user's prefix is a prediction target exactly once.
std::vector<TrainSequence> training_sequences(const SplitDataset& split, const IdTable& ids,
                                              const VocabSpec& vocab, std::uint32_t max_len);

// Teacher-forced sequences scoring each user's held-out item after `history`.
enum class HistoryMode { kValidation, kTest };
std::vector<TrainSequence> heldout_sequences(const SplitDataset& split, const IdTable& ids,
                                             const VocabSpec& vocab, std::uint32_t max_len,
                                             HistoryMode mode);

// History used when predicting the held-out item of `us`.
std::vector<ItemId> history_for(const UserSplit& us, HistoryMode mode);

struct GeneratorTrainLog {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::uint32_t best_epoch = 0;
  double best_val_loss = 0.0;
};

// Keeps the parameters of the epoch with the lowest validation loss. On a
// non-finite loss the best checkpoint is kept and NumericError is thrown.
GeneratorModel train_generator(const SplitDataset& split, const IdTable& ids,
                               const VocabSpec& vocab, const GeneratorConfig& cfg,
                               GeneratorTrainLog* log = nullptr);

// Same, with explicit sequence sets (used by tests).
GeneratorModel train_generator(const std::vector<TrainSequence>& train,
                               const std::vector<TrainSequence>& valid, const VocabSpec& vocab,
                               const GeneratorConfig& cfg, GeneratorTrainLog* log = nullptr);

// Key/value cache for incremental decoding. Every token goes through the
// same per-row arithmetic, so logits depend only on the token sequence, not
// on how it was split between a shared prefix and per-beam suffixes.
class DecodeSession {
 public:
  explicit DecodeSession(const GeneratorModel& model);

  // Appends a token and returns the next-token logits.
  const RowVec& push(std::uint32_t token);
  const RowVec& logits() const { return logits_; }
  std::size_t length() const { return base_len_ + suffix_len_; }

  // Moves the current cache into an immutable shared prefix; copies of the
  // session made afterwards share it.
  void seal();

 private:
  struct Cache {
    std::vector<Mat> k;  // per layer, rows = tokens
    std::vector<Mat> v;
  };
  const GeneratorModel* model_;
  std::shared_ptr<const Cache> base_;
  std::size_t base_len_ = 0;
  Cache suffix_;
  std::size_t suffix_len_ = 0;
  RowVec logits_;
};

// Log-softmax of the logits after `prefix`. Throws if the prefix is empty
// or longer than the model's max_len.
RowVec next_token_logprobs(const GeneratorModel& model, const std::vector<std::uint32_t>& prefix);

RowVec log_softmax(const RowVec& logits);

struct GeneratorCheckpointInfo {
  GeneratorConfig cfg;
  std::uint32_t epoch = 0;
  double val_loss = 0.0;
};

void save_generator(const std::filesystem::path& dir, const GeneratorModel& model,
                    const GeneratorCheckpointInfo& info);
GeneratorModel load_generator(const std::filesystem::path& dir);

}  // namespace genrec

#endif  // GENREC_GENERATOR_HPP_
