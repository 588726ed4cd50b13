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

// Interaction logs, k-core filtering, leave-one-out splits, item feature
// catalogs and the synthetic clustered-preference generator.

#ifndef GENREC_DATASET_HPP_
#define GENREC_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "genrec/types.hpp"

namespace genrec {

struct Event {
  UserId user = 0;
  ItemId item = 0;
  std::int64_t timestamp = 0;
};

// Events keep input order. per_user[u] is u's item sequence sorted by
// timestamp, ties in input order.
struct InteractionLog {
  std::vector<Event> events;
  std::vector<std::string> user_names;
  std::vector<std::string> item_names;
  std::vector<std::vector<ItemId>> per_user;

  std::size_t n_users() const { return user_names.size(); }
  std::size_t n_items() const { return item_names.size(); }
  std::size_t n_interactions() const { return events.size(); }
};

struct RawEvent {
  std::string user;
  std::string item;
  std::int64_t timestamp = 0;
};

// Dense ids are assigned in order of first appearance.
InteractionLog build_log(const std::vector<RawEvent>& raw);

// One event per line: user<delim>item<delim>unix_timestamp. Blank lines are
// skipped. Throws ParseError (with 1-based line number) or EmptyDatasetError.
InteractionLog parse_interactions(std::istream& in, char delimiter = '\t');
InteractionLog load_interactions(const std::filesystem::path& path, char delimiter = '\t');
void write_interactions(const std::filesystem::path& path, const InteractionLog& log);

// Iteratively drops users and items with fewer than k events until no more
// change; registries are re-densified keeping relative order.
InteractionLog filter_core(const InteractionLog& log, std::uint32_t k = 5);

struct ItemCatalog {
  std::vector<std::string> item_names;
  Mat visual;  // N x d_v
  Mat text;    // N x d_t
  std::vector<std::uint8_t> has_visual;
  std::vector<std::uint8_t> has_text;

  std::size_t size() const { return item_names.size(); }
};

// Aligns feature rows (keyed by raw item id) to the given item registry.
// Items without a row get the column mean and a false presence flag.
Mat align_features(const std::vector<std::string>& item_names, const Mat& rows,
                   const std::vector<std::string>& row_ids, std::vector<std::uint8_t>& present,
                   const std::string& what);

ItemCatalog make_catalog(const std::vector<std::string>& item_names, const Mat& visual_rows,
                         const std::vector<std::string>& visual_ids, const Mat& text_rows,
                         const std::vector<std::string>& text_ids);

// Picks the catalog rows for `item_names` (e.g. after filtering).
ItemCatalog select_items(const ItemCatalog& catalog, const std::vector<std::string>& item_names);

std::vector<std::string> read_id_list(const std::filesystem::path& path);
void write_id_list(const std::filesystem::path& path, const std::vector<std::string>& ids);

struct UserSplit {
  UserId user = 0;
  std::vector<ItemId> train;
  ItemId valid = 0;
  ItemId test = 0;
};

struct SplitDataset {
  std::vector<UserSplit> users;
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::uint32_t min_len = 3;
};

SplitDataset leave_one_out_split(const InteractionLog& log);

void write_split(const std::filesystem::path& path, const SplitDataset& split);
SplitDataset read_split(const std::filesystem::path& path);

struct SynthConfig {
  std::uint64_t seed = 42;
  std::uint32_t n_users = 1000;
  std::uint32_t n_items = 200;
  std::uint32_t n_clusters = 8;
  std::uint32_t d_v = 64;
  std::uint32_t d_t = 48;
  double p_in = 0.8;
  double center_scale = 1.0;
  double noise_scale = 0.5;
  std::uint32_t min_len = 8;
  std::uint32_t max_len = 16;
  // Fraction of each cluster's items drawn with weight `cold_weight` instead of 1.
  double cold_fraction = 0.0;
  double cold_weight = 0.05;
  // When set (and n_clusters is even), each modality separates clusters only
  // up to pairs, with different pairings for image and text.
  bool split_modalities = true;
  // 0: in-cluster items drawn independently; s > 0: in-cluster picks walk a
  // ring over the cluster's items with steps in 1..s.
  std::uint32_t walk_span = 0;
  // Probability that a user's final event is a uniform draw from the home
  // cluster's cold items, modelling items released at the end of the log.
  double cold_tail = 0.0;
};

struct SyntheticData {
  InteractionLog log;
  ItemCatalog catalog;
  std::vector<std::uint32_t> item_cluster;
  std::vector<std::uint32_t> user_cluster;
  std::vector<std::uint8_t> item_cold;
};

SyntheticData generate_synthetic(const SynthConfig& cfg);

struct DatasetStats {
  std::uint64_t n_users = 0;
  std::uint64_t n_items = 0;
  std::uint64_t n_interactions = 0;
  double avg_len = 0.0;
  double sparsity = 0.0;
};

DatasetStats compute_stats(const InteractionLog& log);
DatasetStats compute_stats(std::uint64_t n_users, std::uint64_t n_items,
                           std::uint64_t n_interactions);
std::string stats_to_json(const DatasetStats& stats);

}  // namespace genrec

#endif  // GENREC_DATASET_HPP_
