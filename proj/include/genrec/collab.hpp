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

// Graph collaborative encoder: linear neighborhood propagation over the
// user-item bipartite graph with symmetric degree normalization, trained with
// BPR pairwise ranking.

#ifndef GENREC_COLLAB_HPP_
#define GENREC_COLLAB_HPP_

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "genrec/dataset.hpp"
#include "genrec/types.hpp"

namespace genrec {

struct BipartiteGraph {
  std::uint32_t n_users = 0;
  std::uint32_t n_items = 0;
  std::vector<std::pair<UserId, ItemId>> edges;  // sorted, unique
  std::vector<std::uint32_t> deg_u;
  std::vector<std::uint32_t> deg_i;
  // CSR adjacency, neighbors ascending.
  std::vector<std::size_t> user_ptr;
  std::vector<ItemId> user_adj;
  std::vector<std::size_t> item_ptr;
  std::vector<UserId> item_adj;

  bool has_edge(UserId u, ItemId i) const;
};

BipartiteGraph make_graph(std::uint32_t n_users, std::uint32_t n_items,
                          std::vector<std::pair<UserId, ItemId>> edges);

// Edges come from training prefixes only.
BipartiteGraph build_graph(const SplitDataset& split);

struct CollabEmbeddings {
  Mat user_emb;  // n_users x d
  Mat item_emb;  // n_items x d
  std::uint32_t n_layers = 0;
};

// One propagation layer: out_i = sum_{u in N(i)} in_u / sqrt(deg_i deg_u),
// and symmetrically for users. Degree-0 nodes get zero rows.
void propagate_layer(const BipartiteGraph& g, const Mat& users_in, const Mat& items_in,
                     Mat& users_out, Mat& items_out);

// Mean over layers 0..emb0.n_layers, where layer 0 is emb0 itself.
CollabEmbeddings propagate(const BipartiteGraph& g, const CollabEmbeddings& emb0);

struct CollabConfig {
  std::uint32_t d = 768;
  std::uint32_t n_layers = 3;
  double lr = 30.0;
  std::uint32_t epochs = 50;
  std::uint32_t batch = 256;
  double reg = 1e-4;
  double init_std = 0.1;
  std::uint64_t seed = 42;
};

struct BprTriple {
  UserId user;
  ItemId pos;
  ItemId neg;
};

// Mean BPR loss over `triples` plus reg * ||layer0||_F^2, scored on the
// propagated embeddings. Gradients w.r.t. the layer-0 tables are written when
// the output pointers are non-null.
double bpr_loss(const BipartiteGraph& g, const CollabEmbeddings& layer0,
                const std::vector<BprTriple>& triples, double reg, Mat* grad_users = nullptr,
                Mat* grad_items = nullptr);

CollabEmbeddings init_layer0(const BipartiteGraph& g, const CollabConfig& cfg);

// Returns final propagated embeddings; `epoch_loss` receives one mean loss per epoch.
CollabEmbeddings bpr_train(const BipartiteGraph& g, const CollabConfig& cfg,
                           std::vector<double>* epoch_loss = nullptr);

void save_collab(const std::filesystem::path& dir, const CollabEmbeddings& emb,
                 const CollabConfig& cfg);
CollabEmbeddings load_collab(const std::filesystem::path& dir);

}  // namespace genrec

#endif  // GENREC_COLLAB_HPP_
