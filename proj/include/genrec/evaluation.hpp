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

// Leave-one-out ranking metrics.

#ifndef GENREC_EVALUATION_HPP_
#define GENREC_EVALUATION_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <unordered_set>
#include <vector>

#include "genrec/dataset.hpp"
#include "genrec/generator.hpp"
#include "json.hpp"

namespace genrec {

double hit_rate(const std::vector<ItemId>& ranked, ItemId target, std::uint32_t k);
// 1 / log2(rank + 1) for a 1-based rank within the cutoff, else 0.
double ndcg(const std::vector<ItemId>& ranked, ItemId target, std::uint32_t k);

struct EvalResult {
  std::string slice = "all";
  std::map<std::uint32_t, double> hr;
  std::map<std::uint32_t, double> ndcg;
  std::uint64_t n_users = 0;
};

struct ColdStartSlice {
  std::unordered_set<ItemId> cold_items;
  std::uint32_t threshold = 5;
};

// Items with at most `threshold` interactions in the training prefixes.
ColdStartSlice cold_slice(const SplitDataset& split, std::uint32_t threshold = 5);

// Held-out target of a user for the given mode.
ItemId heldout_target(const UserSplit& us, HistoryMode mode);

// Ranked items for a user given the history visible in this mode.
using Recommender =
    std::function<std::vector<ItemId>(const UserSplit& user, const std::vector<ItemId>& history)>;

// Mean metrics over users, in split order. With a slice, only users whose
// target is cold are counted. Throws EmptyDatasetError if no user counts.
EvalResult evaluate_rankings(const SplitDataset& split,
                             const std::vector<std::vector<ItemId>>& rankings,
                             const std::vector<std::uint32_t>& ks, HistoryMode mode,
                             const ColdStartSlice* slice = nullptr);

EvalResult evaluate(const SplitDataset& split, const Recommender& rec,
                    const std::vector<std::uint32_t>& ks, HistoryMode mode,
                    const ColdStartSlice* slice = nullptr);

// Items by descending training count, ties by ascending id.
std::vector<ItemId> popularity_order(const SplitDataset& split);

// Most popular unseen items.
Recommender popularity_recommender(const SplitDataset& split, std::uint32_t top_k);

// Expected HR@k of a uniformly random ranking over n items.
double random_hit_rate(std::uint32_t k, std::size_t n_items);

nlohmann::ordered_json eval_to_json(const EvalResult& r);
EvalResult eval_from_json(const nlohmann::json& j);

}  // namespace genrec

#endif  // GENREC_EVALUATION_HPP_
