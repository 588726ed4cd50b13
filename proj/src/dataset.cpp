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

#include "genrec/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace genrec {
namespace {

std::vector<std::string_view> split_fields(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

void build_per_user(InteractionLog& log) {
  log.per_user.assign(log.n_users(), {});
  std::vector<std::vector<std::size_t>> idx(log.n_users());
  for (std::size_t e = 0; e < log.events.size(); ++e) idx[log.events[e].user].push_back(e);
  for (std::size_t u = 0; u < idx.size(); ++u) {
    auto& ev = idx[u];
    std::stable_sort(ev.begin(), ev.end(), [&](std::size_t a, std::size_t b) {
      return log.events[a].timestamp < log.events[b].timestamp;
    });
    log.per_user[u].reserve(ev.size());
    for (std::size_t e : ev) log.per_user[u].push_back(log.events[e].item);
  }
}

}  // namespace

InteractionLog build_log(const std::vector<RawEvent>& raw) {
  InteractionLog log;
  std::unordered_map<std::string, UserId> users;
  std::unordered_map<std::string, ItemId> items;
  log.events.reserve(raw.size());
  for (const auto& r : raw) {
    auto [uit, unew] = users.try_emplace(r.user, static_cast<UserId>(log.user_names.size()));
    if (unew) log.user_names.push_back(r.user);
    auto [iit, inew] = items.try_emplace(r.item, static_cast<ItemId>(log.item_names.size()));
    if (inew) log.item_names.push_back(r.item);
    log.events.push_back({uit->second, iit->second, r.timestamp});
  }
  build_per_user(log);
  return log;
}

InteractionLog parse_interactions(std::istream& in, char delimiter) {
  std::vector<RawEvent> raw;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto fields = split_fields(view, delimiter);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected user, item, timestamp");
    }
    const std::string_view ts = trim(fields[2]);
    std::int64_t t = 0;
    const auto res = std::from_chars(ts.data(), ts.data() + ts.size(), t);
    if (res.ec != std::errc() || res.ptr != ts.data() + ts.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": bad timestamp '" +
                       std::string(ts) + "'");
    }
    raw.push_back({std::string(fields[0]), std::string(fields[1]), t});
  }
  if (raw.empty()) throw EmptyDatasetError("interaction file has no events");
  return build_log(raw);
}

InteractionLog load_interactions(const std::filesystem::path& path, char delimiter) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return parse_interactions(in, delimiter);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_interactions(const std::filesystem::path& path, const InteractionLog& log) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  for (const auto& e : log.events) {
    out << log.user_names[e.user] << '\t' << log.item_names[e.item] << '\t' << e.timestamp
        << '\n';
  }
}

InteractionLog filter_core(const InteractionLog& log, std::uint32_t k) {
  if (k < 1) throw ConfigError("filter_core: k must be >= 1");
  std::vector<std::uint8_t> keep(log.events.size(), 1);
  while (true) {
    std::vector<std::uint64_t> du(log.n_users(), 0), di(log.n_items(), 0);
    for (std::size_t e = 0; e < log.events.size(); ++e) {
      if (!keep[e]) continue;
      ++du[log.events[e].user];
      ++di[log.events[e].item];
    }
    bool changed = false;
    for (std::size_t e = 0; e < log.events.size(); ++e) {
      if (keep[e] && (du[log.events[e].user] < k || di[log.events[e].item] < k)) {
        keep[e] = 0;
        changed = true;
      }
    }
    if (!changed) break;
  }

  std::vector<std::int64_t> umap(log.n_users(), -1), imap(log.n_items(), -1);
  for (std::size_t e = 0; e < log.events.size(); ++e) {
    if (!keep[e]) continue;
    umap[log.events[e].user] = 0;
    imap[log.events[e].item] = 0;
  }
  InteractionLog out;
  for (std::size_t u = 0; u < umap.size(); ++u) {
    if (umap[u] < 0) continue;
    umap[u] = static_cast<std::int64_t>(out.user_names.size());
    out.user_names.push_back(log.user_names[u]);
  }
  for (std::size_t i = 0; i < imap.size(); ++i) {
    if (imap[i] < 0) continue;
    imap[i] = static_cast<std::int64_t>(out.item_names.size());
    out.item_names.push_back(log.item_names[i]);
  }
  for (std::size_t e = 0; e < log.events.size(); ++e) {
    if (!keep[e]) continue;
    const Event& ev = log.events[e];
    out.events.push_back({static_cast<UserId>(umap[ev.user]), static_cast<ItemId>(imap[ev.item]),
                          ev.timestamp});
  }
  if (out.events.empty()) {
    throw EmptyDatasetError("filter_core(k=" + std::to_string(k) + ") removed every interaction");
  }
  build_per_user(out);
  return out;
}

Mat align_features(const std::vector<std::string>& item_names, const Mat& rows,
                   const std::vector<std::string>& row_ids, std::vector<std::uint8_t>& present,
                   const std::string& what) {
  if (static_cast<std::size_t>(rows.rows()) != row_ids.size()) {
    throw ConfigError(what + ": " + std::to_string(rows.rows()) + " feature rows but " +
                      std::to_string(row_ids.size()) + " ids");
  }
  if (!rows.allFinite()) throw ConfigError(what + ": non-finite feature entries");
  std::unordered_map<std::string, Eigen::Index> by_id;
  for (std::size_t r = 0; r < row_ids.size(); ++r) by_id.emplace(row_ids[r], r);

  Mat out(static_cast<Eigen::Index>(item_names.size()), rows.cols());
  present.assign(item_names.size(), 0);
  RowVec mean = RowVec::Zero(rows.cols());
  std::size_t n_present = 0;
  for (std::size_t i = 0; i < item_names.size(); ++i) {
    auto it = by_id.find(item_names[i]);
    if (it == by_id.end()) continue;
    out.row(i) = rows.row(it->second);
    mean += rows.row(it->second);
    present[i] = 1;
    ++n_present;
  }
  if (n_present > 0) mean /= static_cast<double>(n_present);
  for (std::size_t i = 0; i < item_names.size(); ++i) {
    if (!present[i]) out.row(i) = mean;
  }
  return out;
}

ItemCatalog make_catalog(const std::vector<std::string>& item_names, const Mat& visual_rows,
                         const std::vector<std::string>& visual_ids, const Mat& text_rows,
                         const std::vector<std::string>& text_ids) {
  ItemCatalog c;
  c.item_names = item_names;
  c.visual = align_features(item_names, visual_rows, visual_ids, c.has_visual, "visual");
  c.text = align_features(item_names, text_rows, text_ids, c.has_text, "text");
  return c;
}

ItemCatalog select_items(const ItemCatalog& catalog, const std::vector<std::string>& item_names) {
  std::unordered_map<std::string, Eigen::Index> by_id;
  for (std::size_t r = 0; r < catalog.item_names.size(); ++r) by_id.emplace(catalog.item_names[r], r);
  ItemCatalog out;
  out.item_names = item_names;
  out.visual.resize(static_cast<Eigen::Index>(item_names.size()), catalog.visual.cols());
  out.text.resize(static_cast<Eigen::Index>(item_names.size()), catalog.text.cols());
  for (std::size_t i = 0; i < item_names.size(); ++i) {
    auto it = by_id.find(item_names[i]);
    if (it == by_id.end()) throw ConfigError("catalog has no item '" + item_names[i] + "'");
    out.visual.row(i) = catalog.visual.row(it->second);
    out.text.row(i) = catalog.text.row(it->second);
    out.has_visual.push_back(catalog.has_visual[it->second]);
    out.has_text.push_back(catalog.has_text[it->second]);
  }
  return out;
}

std::vector<std::string> read_id_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    const auto v = trim(line);
    if (!v.empty()) ids.emplace_back(v);
  }
  return ids;
}

void write_id_list(const std::filesystem::path& path, const std::vector<std::string>& ids) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  for (const auto& id : ids) out << id << '\n';
}

SplitDataset leave_one_out_split(const InteractionLog& log) {
  SplitDataset split;
  split.n_users = log.n_users();
  split.n_items = log.n_items();
  for (std::size_t u = 0; u < log.per_user.size(); ++u) {
    const auto& seq = log.per_user[u];
    if (seq.size() < split.min_len) continue;
    UserSplit us;
    us.user = static_cast<UserId>(u);
    us.train.assign(seq.begin(), seq.end() - 2);
    us.valid = seq[seq.size() - 2];
    us.test = seq.back();
    split.users.push_back(std::move(us));
  }
  return split;
}

// Format: header "n_users<TAB>n_items", then one line per user:
// user<TAB>valid<TAB>test<TAB>space-separated train items.
void write_split(const std::filesystem::path& path, const SplitDataset& split) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << split.n_users << '\t' << split.n_items << '\n';
  for (const auto& us : split.users) {
    out << us.user << '\t' << us.valid << '\t' << us.test << '\t';
    for (std::size_t j = 0; j < us.train.size(); ++j) out << (j ? " " : "") << us.train[j];
    out << '\n';
  }
}

SplitDataset read_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  SplitDataset split;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty split file");
  {
    std::istringstream hs(line);
    if (!(hs >> split.n_users >> split.n_items)) throw ParseError(path.string() + ": bad header");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, '\t');
    if (fields.size() != 4) {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": bad split row");
    }
    UserSplit us;
    us.user = static_cast<UserId>(std::stoul(std::string(fields[0])));
    us.valid = static_cast<ItemId>(std::stoul(std::string(fields[1])));
    us.test = static_cast<ItemId>(std::stoul(std::string(fields[2])));
    std::istringstream ts{std::string(fields[3])};
    ItemId it = 0;
    while (ts >> it) us.train.push_back(it);
    split.users.push_back(std::move(us));
  }
  return split;
}

SyntheticData generate_synthetic(const SynthConfig& cfg) {
  if (cfg.n_clusters == 0 || cfg.n_clusters > cfg.n_items) {
    throw ConfigError("synthetic: need 1 <= n_clusters <= n_items");
  }
  if (cfg.min_len == 0 || cfg.min_len > cfg.max_len) {
    throw ConfigError("synthetic: need 1 <= min_len <= max_len");
  }
  for (double p : {cfg.p_in, cfg.cold_fraction, cfg.cold_weight, cfg.cold_tail}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("synthetic: probabilities must lie in [0, 1]");
  }
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SyntheticData out;
  const std::uint32_t C = cfg.n_clusters;
  out.item_cluster.resize(cfg.n_items);
  std::vector<std::vector<ItemId>> members(C);
  for (ItemId i = 0; i < cfg.n_items; ++i) {
    out.item_cluster[i] = i % C;
    members[i % C].push_back(i);
  }

  // Each modality gets one center per group; with split modalities the image
  // groups pair clusters {0,1},{2,3},.. and the text groups pair {C-1,0},{1,2},..
  const bool paired = cfg.split_modalities && C % 2 == 0 && C >= 4;
  const std::uint32_t n_groups = paired ? C / 2 : C;
  auto visual_group = [&](std::uint32_t c) { return paired ? c / 2 : c; };
  auto text_group = [&](std::uint32_t c) { return paired ? ((c + 1) % C) / 2 : c; };
  Mat vcenters(n_groups, cfg.d_v), tcenters(n_groups, cfg.d_t);
  for (Eigen::Index r = 0; r < vcenters.rows(); ++r)
    for (Eigen::Index c = 0; c < vcenters.cols(); ++c) vcenters(r, c) = cfg.center_scale * gauss(rng);
  for (Eigen::Index r = 0; r < tcenters.rows(); ++r)
    for (Eigen::Index c = 0; c < tcenters.cols(); ++c) tcenters(r, c) = cfg.center_scale * gauss(rng);

  ItemCatalog& cat = out.catalog;
  cat.visual.resize(cfg.n_items, cfg.d_v);
  cat.text.resize(cfg.n_items, cfg.d_t);
  for (ItemId i = 0; i < cfg.n_items; ++i) {
    const std::uint32_t c = out.item_cluster[i];
    for (std::uint32_t j = 0; j < cfg.d_v; ++j)
      cat.visual(i, j) = vcenters(visual_group(c), j) + cfg.noise_scale * gauss(rng);
    for (std::uint32_t j = 0; j < cfg.d_t; ++j)
      cat.text(i, j) = tcenters(text_group(c), j) + cfg.noise_scale * gauss(rng);
  }
  cat.has_visual.assign(cfg.n_items, 1);
  cat.has_text.assign(cfg.n_items, 1);

  // Cold items: the last ceil(cold_fraction * size) members of each cluster.
  out.item_cold.assign(cfg.n_items, 0);
  std::vector<double> weight(cfg.n_items, 1.0);
  for (const auto& mem : members) {
    const auto n_cold = static_cast<std::size_t>(std::ceil(cfg.cold_fraction * mem.size()));
    for (std::size_t j = mem.size() - std::min(n_cold, mem.size()); j < mem.size(); ++j) {
      out.item_cold[mem[j]] = 1;
      weight[mem[j]] = cfg.cold_weight;
    }
  }
  std::vector<std::vector<ItemId>> cold_members(C);
  for (std::uint32_t c = 0; c < C; ++c)
    for (ItemId i : members[c])
      if (out.item_cold[i]) cold_members[c].push_back(i);
  std::vector<std::discrete_distribution<std::size_t>> in_cluster;
  std::vector<std::vector<ItemId>> outside(C);
  std::vector<std::discrete_distribution<std::size_t>> out_cluster;
  for (std::uint32_t c = 0; c < C; ++c) {
    std::vector<double> w;
    for (ItemId i : members[c]) w.push_back(weight[i]);
    in_cluster.emplace_back(w.begin(), w.end());
    std::vector<double> wo;
    for (ItemId i = 0; i < cfg.n_items; ++i) {
      if (out.item_cluster[i] == c) continue;
      outside[c].push_back(i);
      wo.push_back(weight[i]);
    }
    if (wo.empty()) wo.push_back(1.0);
    out_cluster.emplace_back(wo.begin(), wo.end());
  }

  std::uniform_int_distribution<std::uint32_t> pick_cluster(0, C - 1);
  std::uniform_int_distribution<std::uint32_t> pick_len(cfg.min_len, cfg.max_len);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<std::uint32_t> pick_step(1, std::max<std::uint32_t>(1, cfg.walk_span));

  std::vector<RawEvent> raw;
  out.user_cluster.resize(cfg.n_users);
  const std::int64_t t0 = 1'600'000'000;
  for (std::uint32_t u = 0; u < cfg.n_users; ++u) {
    const std::uint32_t home = pick_cluster(rng);
    out.user_cluster[u] = home;
    const std::uint32_t len = pick_len(rng);
    std::int64_t pos = -1;  // ring position of the last in-cluster item
    for (std::uint32_t j = 0; j < len; ++j) {
      ItemId item = 0;
      if (j + 1 == len && !cold_members[home].empty() && cfg.cold_tail > 0.0 && coin(rng) < cfg.cold_tail) {
        std::uniform_int_distribution<std::size_t> pick(0, cold_members[home].size() - 1);
        item = cold_members[home][pick(rng)];
      } else if (coin(rng) < cfg.p_in || outside[home].empty()) {
        const auto& mem = members[home];
        if (cfg.walk_span > 0 && pos >= 0) {
          const auto n = static_cast<std::int64_t>(mem.size());
          pos = (pos + pick_step(rng)) % n;
          // Cold items are kept with probability equal to their weight.
          for (std::int64_t hop = 0; hop < n && coin(rng) >= weight[mem[static_cast<std::size_t>(pos)]]; ++hop) {
            pos = (pos + 1) % n;
          }
        } else {
          pos = static_cast<std::int64_t>(in_cluster[home](rng));
        }
        item = mem[static_cast<std::size_t>(pos)];
      } else {
        item = outside[home][out_cluster[home](rng)];
      }
      raw.push_back({"u" + std::to_string(u), "i" + std::to_string(item),
                     t0 + static_cast<std::int64_t>(u) * 100'000 + 60 * j});
    }
  }
  out.log = build_log(raw);

  // build_log numbers items by first appearance; reorder the catalog to match.
  ItemCatalog full = std::move(out.catalog);
  for (ItemId i = 0; i < cfg.n_items; ++i) full.item_names.push_back("i" + std::to_string(i));
  std::vector<std::uint32_t> cluster_by_name = out.item_cluster;
  std::vector<std::uint8_t> cold_by_name = out.item_cold;
  out.catalog = select_items(full, out.log.item_names);
  out.item_cluster.assign(out.log.n_items(), 0);
  out.item_cold.assign(out.log.n_items(), 0);
  for (std::size_t i = 0; i < out.log.n_items(); ++i) {
    const auto orig = static_cast<std::size_t>(std::stoul(out.log.item_names[i].substr(1)));
    out.item_cluster[i] = cluster_by_name[orig];
    out.item_cold[i] = cold_by_name[orig];
  }
  return out;
}

DatasetStats compute_stats(std::uint64_t n_users, std::uint64_t n_items,
                           std::uint64_t n_interactions) {
  if (n_users == 0 || n_items == 0) throw EmptyDatasetError("compute_stats: empty dataset");
  DatasetStats s;
  s.n_users = n_users;
  s.n_items = n_items;
  s.n_interactions = n_interactions;
  s.avg_len = static_cast<double>(n_interactions) / static_cast<double>(n_users);
  s.sparsity = 1.0 - static_cast<double>(n_interactions) /
                         (static_cast<double>(n_users) * static_cast<double>(n_items));
  return s;
}

DatasetStats compute_stats(const InteractionLog& log) {
  return compute_stats(log.n_users(), log.n_items(), log.n_interactions());
}

std::string stats_to_json(const DatasetStats& stats) {
  nlohmann::ordered_json j;
  j["n_users"] = stats.n_users;
  j["n_items"] = stats.n_items;
  j["n_interactions"] = stats.n_interactions;
  j["avg_len"] = stats.avg_len;
  j["sparsity"] = stats.sparsity;
  return j.dump();
}

}  // namespace genrec
