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

#include "genrec/collab.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "genrec/emb_io.hpp"
#include "json.hpp"

namespace genrec {

bool BipartiteGraph::has_edge(UserId u, ItemId i) const {
  const auto first = user_adj.begin() + static_cast<std::ptrdiff_t>(user_ptr[u]);
  const auto last = user_adj.begin() + static_cast<std::ptrdiff_t>(user_ptr[u + 1]);
  return std::binary_search(first, last, i);
}

BipartiteGraph make_graph(std::uint32_t n_users, std::uint32_t n_items,
                          std::vector<std::pair<UserId, ItemId>> edges) {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  BipartiteGraph g;
  g.n_users = n_users;
  g.n_items = n_items;
  g.deg_u.assign(n_users, 0);
  g.deg_i.assign(n_items, 0);
  for (const auto& [u, i] : edges) {
    if (u >= n_users || i >= n_items) throw ConfigError("make_graph: edge out of range");
    ++g.deg_u[u];
    ++g.deg_i[i];
  }
  g.user_ptr.assign(n_users + 1, 0);
  g.item_ptr.assign(n_items + 1, 0);
  for (std::uint32_t u = 0; u < n_users; ++u) g.user_ptr[u + 1] = g.user_ptr[u] + g.deg_u[u];
  for (std::uint32_t i = 0; i < n_items; ++i) g.item_ptr[i + 1] = g.item_ptr[i] + g.deg_i[i];
  g.user_adj.resize(edges.size());
  g.item_adj.resize(edges.size());
  std::vector<std::size_t> ufill(g.user_ptr.begin(), g.user_ptr.end() - 1);
  std::vector<std::size_t> ifill(g.item_ptr.begin(), g.item_ptr.end() - 1);
  // Edges are sorted by (u, i), so both adjacency lists come out ascending.
  for (const auto& [u, i] : edges) {
    g.user_adj[ufill[u]++] = i;
    g.item_adj[ifill[i]++] = u;
  }
  g.edges = std::move(edges);
  return g;
}

BipartiteGraph build_graph(const SplitDataset& split) {
  if (split.users.empty()) throw EmptyDatasetError("build_graph: split has no users");
  std::vector<std::pair<UserId, ItemId>> edges;
  for (const auto& us : split.users) {
    for (ItemId i : us.train) edges.emplace_back(us.user, i);
  }
  return make_graph(static_cast<std::uint32_t>(split.n_users),
                    static_cast<std::uint32_t>(split.n_items), std::move(edges));
}

void propagate_layer(const BipartiteGraph& g, const Mat& users_in, const Mat& items_in,
                     Mat& users_out, Mat& items_out) {
  const Eigen::Index d = users_in.cols();
  users_out.setZero(g.n_users, d);
  items_out.setZero(g.n_items, d);
  for (std::uint32_t u = 0; u < g.n_users; ++u) {
    for (std::size_t p = g.user_ptr[u]; p < g.user_ptr[u + 1]; ++p) {
      const ItemId i = g.user_adj[p];
      const double w = 1.0 / std::sqrt(static_cast<double>(g.deg_u[u]) * g.deg_i[i]);
      users_out.row(u) += w * items_in.row(i);
    }
  }
  for (std::uint32_t i = 0; i < g.n_items; ++i) {
    for (std::size_t p = g.item_ptr[i]; p < g.item_ptr[i + 1]; ++p) {
      const UserId u = g.item_adj[p];
      const double w = 1.0 / std::sqrt(static_cast<double>(g.deg_u[u]) * g.deg_i[i]);
      items_out.row(i) += w * users_in.row(u);
    }
  }
}

CollabEmbeddings propagate(const BipartiteGraph& g, const CollabEmbeddings& emb0) {
  if (emb0.user_emb.rows() != g.n_users || emb0.item_emb.rows() != g.n_items) {
    throw ConfigError("propagate: embedding rows do not match graph");
  }
  CollabEmbeddings out{emb0.user_emb, emb0.item_emb, emb0.n_layers};
  if (emb0.n_layers == 0) return out;
  Mat cur_u = emb0.user_emb, cur_i = emb0.item_emb, next_u, next_i;
  for (std::uint32_t l = 0; l < emb0.n_layers; ++l) {
    propagate_layer(g, cur_u, cur_i, next_u, next_i);
    out.user_emb += next_u;
    out.item_emb += next_i;
    std::swap(cur_u, next_u);
    std::swap(cur_i, next_i);
  }
  const double inv = 1.0 / (emb0.n_layers + 1.0);
  out.user_emb *= inv;
  out.item_emb *= inv;
  return out;
}

namespace {

double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }
double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace

double bpr_loss(const BipartiteGraph& g, const CollabEmbeddings& layer0,
                const std::vector<BprTriple>& triples, double reg, Mat* grad_users,
                Mat* grad_items) {
  if (triples.empty()) throw ConfigError("bpr_loss: empty batch");
  const CollabEmbeddings fin = propagate(g, layer0);
  const double scale = 1.0 / static_cast<double>(triples.size());
  const bool want_grad = grad_users != nullptr && grad_items != nullptr;
  Mat gu, gi;
  if (want_grad) {
    gu.setZero(fin.user_emb.rows(), fin.user_emb.cols());
    gi.setZero(fin.item_emb.rows(), fin.item_emb.cols());
  }
  double loss = 0.0;
  for (const auto& t : triples) {
    const double x = fin.user_emb.row(t.user).dot(fin.item_emb.row(t.pos) - fin.item_emb.row(t.neg));
    loss -= log_sigmoid(x);
    if (want_grad) {
      const double dx = -sigmoid(-x) * scale;  // d(-log sigma(x))/dx
      gu.row(t.user) += dx * (fin.item_emb.row(t.pos) - fin.item_emb.row(t.neg));
      gi.row(t.pos) += dx * fin.user_emb.row(t.user);
      gi.row(t.neg) -= dx * fin.user_emb.row(t.user);
    }
  }
  loss *= scale;
  loss += reg * (layer0.user_emb.squaredNorm() + layer0.item_emb.squaredNorm());
  if (want_grad) {
    // The normalized adjacency is symmetric, so the adjoint of the layer mean
    // is the same layer mean applied to the gradient.
    const CollabEmbeddings back = propagate(g, {gu, gi, layer0.n_layers});
    *grad_users = back.user_emb + 2.0 * reg * layer0.user_emb;
    *grad_items = back.item_emb + 2.0 * reg * layer0.item_emb;
  }
  return loss;
}

CollabEmbeddings init_layer0(const BipartiteGraph& g, const CollabConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, cfg.init_std);
  CollabEmbeddings e;
  e.n_layers = cfg.n_layers;
  e.user_emb.resize(g.n_users, cfg.d);
  e.item_emb.resize(g.n_items, cfg.d);
  for (Eigen::Index r = 0; r < e.user_emb.rows(); ++r)
    for (Eigen::Index c = 0; c < e.user_emb.cols(); ++c) e.user_emb(r, c) = gauss(rng);
  for (Eigen::Index r = 0; r < e.item_emb.rows(); ++r)
    for (Eigen::Index c = 0; c < e.item_emb.cols(); ++c) e.item_emb(r, c) = gauss(rng);
  return e;
}

CollabEmbeddings bpr_train(const BipartiteGraph& g, const CollabConfig& cfg,
                           std::vector<double>* epoch_loss) {
  if (g.edges.empty()) throw EmptyDatasetError("bpr_train: graph has no edges");
  if (cfg.batch == 0) throw ConfigError("bpr_train: batch must be positive");
  CollabEmbeddings params = init_layer0(g, cfg);
  std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);
  std::uniform_int_distribution<ItemId> pick_item(0, g.n_items - 1);

  std::vector<std::size_t> order(g.edges.size());
  for (std::size_t e = 0; e < order.size(); ++e) order[e] = e;
  Mat gu, gi;
  for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch);
      std::vector<BprTriple> triples;
      triples.reserve(stop - start);
      for (std::size_t k = start; k < stop; ++k) {
        const auto [u, i] = g.edges[order[k]];
        if (g.deg_u[u] >= g.n_items) continue;  // no negative exists
        ItemId j = pick_item(rng);
        while (g.has_edge(u, j)) j = pick_item(rng);
        triples.push_back({u, i, j});
      }
      if (triples.empty()) continue;
      const double loss = bpr_loss(g, params, triples, cfg.reg, &gu, &gi);
      if (!std::isfinite(loss) || !gu.allFinite() || !gi.allFinite()) {
        std::ostringstream msg;
        msg << "bpr_train: non-finite loss at epoch " << epoch << " batch " << n_batches
            << " (lr=" << cfg.lr << "); lower the learning rate";
        throw NumericError(msg.str());
      }
      params.user_emb -= cfg.lr * gu;
      params.item_emb -= cfg.lr * gi;
      total += loss;
      ++n_batches;
    }
    if (epoch_loss != nullptr && n_batches > 0) epoch_loss->push_back(total / n_batches);
  }
  return propagate(g, params);
}

void save_collab(const std::filesystem::path& dir, const CollabEmbeddings& emb,
                 const CollabConfig& cfg) {
  std::filesystem::create_directories(dir);
  write_emb(dir / "user.emb", emb.user_emb);
  write_emb(dir / "item.emb", emb.item_emb);
  nlohmann::ordered_json j;
  j["d"] = cfg.d;
  j["n_layers"] = cfg.n_layers;
  j["seed"] = cfg.seed;
  j["epochs"] = cfg.epochs;
  std::ofstream(dir / "collab.json") << j.dump(2) << '\n';
}

CollabEmbeddings load_collab(const std::filesystem::path& dir) {
  CollabEmbeddings e;
  e.user_emb = read_emb(dir / "user.emb");
  e.item_emb = read_emb(dir / "item.emb");
  std::ifstream in(dir / "collab.json");
  if (!in) throw Error("missing " + (dir / "collab.json").string());
  const auto j = nlohmann::json::parse(in);
  e.n_layers = j.at("n_layers").get<std::uint32_t>();
  return e;
}

}  // namespace genrec
