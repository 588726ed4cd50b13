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

// Catalog trie and constrained beam search over semantic ids.

#ifndef GENREC_DECODER_HPP_
#define GENREC_DECODER_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <unordered_set>
#include <vector>

#include "genrec/generator.hpp"
#include "genrec/rqvae.hpp"

namespace genrec {

class CatalogTrie {
 public:
  CatalogTrie() = default;
  // Throws ConfigError on duplicate ids or inconsistent lengths.
  explicit CatalogTrie(const std::vector<SemanticId>& ids);

  std::uint32_t depth() const { return depth_; }
  std::size_t leaf_count() const { return leaves_; }

  // Child codes of the node reached by `prefix`, ascending. Throws on an
  // invalid prefix or when the prefix is already complete.
  std::vector<std::uint32_t> children(const std::vector<std::uint32_t>& prefix) const;

  // Item at a complete path; throws when the path is not a leaf.
  ItemId item_at(const std::vector<std::uint32_t>& codes) const;
  bool contains(const std::vector<std::uint32_t>& codes) const;

 private:
  struct Node {
    std::map<std::uint32_t, std::uint32_t> next;
    ItemId item = 0;
  };
  const Node* find(const std::vector<std::uint32_t>& prefix) const;

  std::vector<Node> nodes_;
  std::uint32_t depth_ = 0;
  std::size_t leaves_ = 0;
};

// Token ids allowed after `prefix` (level |prefix| + 1), ascending.
std::vector<std::uint32_t> allowed_tokens(const CatalogTrie& trie,
                                          const std::vector<std::uint32_t>& prefix,
                                          const VocabSpec& vocab);

// Log-probabilities over `allowed` renormalized to sum to one.
std::vector<double> masked_logprobs(const RowVec& logits, const std::vector<std::uint32_t>& allowed);

struct ScoredItem {
  ItemId item = 0;
  std::vector<std::uint32_t> codes;
  double score = 0.0;
};

// Up to B distinct items, score descending, ties by ascending item id.
std::vector<ScoredItem> beam_search(const GeneratorModel& model, const Prompt& prompt,
                                    const CatalogTrie& trie, std::uint32_t beam_width);

// Every catalog item scored by the same masked log-probability rule.
std::vector<ScoredItem> exhaustive_scores(const GeneratorModel& model, const Prompt& prompt,
                                          const CatalogTrie& trie,
                                          const std::vector<SemanticId>& ids);

struct Recommendation {
  UserId user = 0;
  std::vector<ItemId> items;
  std::vector<double> scores;
  bool shortfall = false;  // fewer than the requested count survived filtering
};

struct RecommendOptions {
  std::uint32_t top_k = 10;
  std::uint32_t beam_width = 30;
  bool exclude_seen = true;
};

// Builds the prompt from `history`, decodes and keeps the first top_k items.
Recommendation recommend(const GeneratorModel& model, const IdTable& ids, const CatalogTrie& trie,
                         const std::vector<ItemId>& history, const RecommendOptions& opts);

// {"user": id, "items": [...], "scores": [...]}
void write_recommendation(std::ostream& out, const Recommendation& rec);
std::vector<Recommendation> read_recommendations(const std::filesystem::path& path);

}  // namespace genrec

#endif  // GENREC_DECODER_HPP_
