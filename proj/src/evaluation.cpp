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

#include "genrec/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace genrec {

namespace {

// 1-based rank of target within the first k entries, or 0.
std::size_t rank_of(const std::vector<ItemId>& ranked, ItemId target, std::uint32_t k) {
  const std::size_t n = std::min<std::size_t>(ranked.size(), k);
  for (std::size_t i = 0; i < n; ++i) {
    if (ranked[i] == target) return i + 1;
  }
  return 0;
}

}  // namespace

double hit_rate(const std::vector<ItemId>& ranked, ItemId target, std::uint32_t k) {
  return rank_of(ranked, target, k) > 0 ? 1.0 : 0.0;
}

double ndcg(const std::vector<ItemId>& ranked, ItemId target, std::uint32_t k) {
  const std::size_t r = rank_of(ranked, target, k);
  return r > 0 ? 1.0 / std::log2(static_cast<double>(r) + 1.0) : 0.0;
}

ColdStartSlice cold_slice(const SplitDataset& split, std::uint32_t threshold) {
  std::vector<std::uint32_t> counts(split.n_items, 0);
  for (const UserSplit& us : split.users) {
    for (ItemId it : us.train) ++counts.at(it);
  }
  ColdStartSlice s;
  s.threshold = threshold;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] <= threshold) s.cold_items.insert(static_cast<ItemId>(i));
  }
  return s;
}

ItemId heldout_target(const UserSplit& us, HistoryMode mode) {
  return mode == HistoryMode::kTest ? us.test : us.valid;
}

EvalResult evaluate_rankings(const SplitDataset& split,
                             const std::vector<std::vector<ItemId>>& rankings,
                             const std::vector<std::uint32_t>& ks, HistoryMode mode,
                             const ColdStartSlice* slice) {
  if (rankings.size() != split.users.size()) {
    throw ConfigError("evaluate: one ranking per user is required");
  }
  if (ks.empty()) throw ConfigError("evaluate: no cutoffs given");
  EvalResult r;
  r.slice = slice != nullptr ? "cold" : "all";
  for (std::uint32_t k : ks) {
    r.hr[k] = 0.0;
    r.ndcg[k] = 0.0;
  }
  for (std::size_t u = 0; u < split.users.size(); ++u) {
    const ItemId target = heldout_target(split.users[u], mode);
    if (slice != nullptr && slice->cold_items.count(target) == 0) continue;
    ++r.n_users;
    for (std::uint32_t k : ks) {
      r.hr[k] += hit_rate(rankings[u], target, k);
      r.ndcg[k] += ndcg(rankings[u], target, k);
    }
  }
  if (r.n_users == 0) {
    throw EmptyDatasetError(std::string("evaluate: no users in slice '") + r.slice + "'");
  }
  const auto n = static_cast<double>(r.n_users);
  for (auto& [k, v] : r.hr) v /= n;
  for (auto& [k, v] : r.ndcg) v /= n;
  return r;
}

EvalResult evaluate(const SplitDataset& split, const Recommender& rec,
                    const std::vector<std::uint32_t>& ks, HistoryMode mode,
                    const ColdStartSlice* slice) {
  std::vector<std::vector<ItemId>> rankings;
  rankings.reserve(split.users.size());
  for (const UserSplit& us : split.users) {
    const ItemId target = heldout_target(us, mode);
    if (slice != nullptr && slice->cold_items.count(target) == 0) {
      rankings.emplace_back();
      continue;
    }
    rankings.push_back(rec(us, history_for(us, mode)));
  }
  return evaluate_rankings(split, rankings, ks, mode, slice);
}

std::vector<ItemId> popularity_order(const SplitDataset& split) {
  std::vector<std::uint64_t> counts(split.n_items, 0);
  for (const UserSplit& us : split.users) {
    for (ItemId it : us.train) ++counts.at(it);
  }
  std::vector<ItemId> order(split.n_items);
  std::iota(order.begin(), order.end(), ItemId{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](ItemId a, ItemId b) { return counts[a] > counts[b]; });
  return order;
}

Recommender popularity_recommender(const SplitDataset& split, std::uint32_t top_k) {
  auto order = std::make_shared<const std::vector<ItemId>>(popularity_order(split));
  return [order, top_k](const UserSplit&, const std::vector<ItemId>& history) {
    const std::unordered_set<ItemId> seen(history.begin(), history.end());
    std::vector<ItemId> out;
    for (ItemId it : *order) {
      if (out.size() >= top_k) break;
      if (seen.count(it) == 0) out.push_back(it);
    }
    return out;
  };
}

double random_hit_rate(std::uint32_t k, std::size_t n_items) {
  if (n_items == 0) throw EmptyDatasetError("random_hit_rate: empty catalog");
  return std::min(1.0, static_cast<double>(k) / static_cast<double>(n_items));
}

nlohmann::ordered_json eval_to_json(const EvalResult& r) {
  nlohmann::ordered_json j;
  j["slice"] = r.slice;
  nlohmann::ordered_json hr = nlohmann::ordered_json::object();
  nlohmann::ordered_json nd = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.hr) hr[std::to_string(k)] = v;
  for (const auto& [k, v] : r.ndcg) nd[std::to_string(k)] = v;
  j["hr"] = hr;
  j["ndcg"] = nd;
  j["n_users"] = r.n_users;
  return j;
}

EvalResult eval_from_json(const nlohmann::json& j) {
  EvalResult r;
  r.slice = j.value("slice", std::string("all"));
  for (const auto& [k, v] : j.at("hr").items()) r.hr[std::stoul(k)] = v.get<double>();
  for (const auto& [k, v] : j.at("ndcg").items()) r.ndcg[std::stoul(k)] = v.get<double>();
  r.n_users = j.value("n_users", std::uint64_t{0});
  return r;
}

}  // namespace genrec
