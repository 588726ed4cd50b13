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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "genrec/decoder.hpp"
#include "test_util.hpp"

namespace genrec {
namespace {

std::vector<SemanticId> make_ids(const std::vector<std::vector<std::uint32_t>>& codes) {
  std::vector<SemanticId> out;
  for (std::size_t i = 0; i < codes.size(); ++i) out.push_back({static_cast<ItemId>(i), codes[i]});
  return out;
}

// Random distinct codes for n items.
std::vector<SemanticId> random_ids(std::size_t n, std::uint32_t M, std::uint32_t K,
                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> pick(0, K - 1);
  std::set<std::vector<std::uint32_t>> used;
  std::vector<std::vector<std::uint32_t>> codes;
  while (codes.size() < n) {
    std::vector<std::uint32_t> c(M);
    for (auto& x : c) x = pick(rng);
    if (used.insert(c).second) codes.push_back(c);
  }
  return make_ids(codes);
}

GeneratorModel random_model(const VocabSpec& v, std::uint64_t seed, std::uint32_t max_len = 40) {
  GeneratorConfig cfg;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.width = 8;
  cfg.ff_mult = 2;
  cfg.max_len = max_len;
  cfg.init_std = 0.5;
  cfg.seed = seed;
  GeneratorModel m = init_generator(v, cfg);
  m.b_out += testing::random_mat(1, v.size(), seed + 1, 1.0);
  return m;
}

TEST(Trie, ChildrenOfHandExample) {
  const CatalogTrie trie(make_ids({{1, 2, 3}, {1, 2, 4}, {2, 0, 0}}));
  EXPECT_EQ(trie.depth(), 3u);
  EXPECT_EQ(trie.leaf_count(), 3u);
  EXPECT_EQ(trie.children({}), (std::vector<std::uint32_t>{1, 2}));
  EXPECT_EQ(trie.children({1}), (std::vector<std::uint32_t>{2}));
  EXPECT_EQ(trie.children({1, 2}), (std::vector<std::uint32_t>{3, 4}));
  EXPECT_EQ(trie.children({2, 0}), (std::vector<std::uint32_t>{0}));
  EXPECT_THROW(trie.children({3}), ConfigError);
  EXPECT_THROW(trie.children({1, 2, 3}), ConfigError);
  EXPECT_EQ(trie.item_at({1, 2, 4}), 1u);
  EXPECT_TRUE(trie.contains({2, 0, 0}));
  EXPECT_FALSE(trie.contains({2, 0}));
  EXPECT_FALSE(trie.contains({2, 0, 1}));
}

TEST(Trie, LeafCountMatchesDistinctIds) {
  const auto ids = random_ids(200, 3, 8, 7);
  EXPECT_EQ(CatalogTrie(ids).leaf_count(), 200u);
}

TEST(Trie, DuplicateAndRaggedIdsAreErrors) {
  EXPECT_THROW(CatalogTrie(make_ids({{1, 2}, {1, 2}})), ConfigError);
  EXPECT_THROW(CatalogTrie(make_ids({{1, 2}, {1, 2, 3}})), ConfigError);
}

TEST(Trie, AllowedTokensUseLevelOffsets) {
  const VocabSpec v{3, 5};
  const CatalogTrie trie(make_ids({{1, 2, 3}, {1, 2, 4}, {2, 0, 0}}));
  EXPECT_EQ(allowed_tokens(trie, {}, v), (std::vector<std::uint32_t>{3, 4}));
  EXPECT_EQ(allowed_tokens(trie, {1, 2}, v), (std::vector<std::uint32_t>{2 + 10 + 3, 2 + 10 + 4}));
}

TEST(Masking, RenormalizedOverAllowedSet) {
  const RowVec logits = testing::random_mat(1, 30, 3, 4.0);
  const std::vector<std::uint32_t> allowed{2, 5, 11, 29};
  const auto lp = masked_logprobs(logits, allowed);
  double total = 0.0;
  for (double a : lp) total += std::exp(a);
  EXPECT_NEAR(total, 1.0, 1e-6);
  // Softmax of the allowed logits alone.
  double z = 0.0;
  for (auto t : allowed) z += std::exp(logits(t));
  for (std::size_t i = 0; i < allowed.size(); ++i) {
    EXPECT_NEAR(lp[i], logits(allowed[i]) - std::log(z), 1e-12);
  }
  EXPECT_THROW(masked_logprobs(logits, {}), ConfigError);
}

TEST(Masking, SingleAllowedTokenHasLogProbZero) {
  const RowVec logits = testing::random_mat(1, 10, 4, 3.0);
  EXPECT_EQ(masked_logprobs(logits, {7})[0], 0.0);
}

TEST(Beam, SingleItemCatalogScoresZero) {
  const VocabSpec v{3, 4};
  const auto m = random_model(v, 1);
  const auto ids = make_ids({{2, 1, 3}});
  const auto out = beam_search(m, build_prompt({{0, 0, 0}}, v, 40), CatalogTrie(ids), 5);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].item, 0u);
  EXPECT_EQ(out[0].score, 0.0);
}

TEST(Beam, WideBeamEqualsExhaustiveOracle) {
  const VocabSpec v{3, 4};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto m = random_model(v, seed * 10);
    const auto ids = random_ids(20, 3, 4, seed);
    const CatalogTrie trie(ids);
    const Prompt p = build_prompt({ids[3].tokens, ids[7].tokens}, v, 40);
    const auto beam = beam_search(m, p, trie, 20);
    const auto oracle = exhaustive_scores(m, p, trie, ids);
    ASSERT_EQ(beam.size(), oracle.size());
    for (std::size_t i = 0; i < beam.size(); ++i) {
      EXPECT_EQ(beam[i].item, oracle[i].item);
      EXPECT_EQ(beam[i].score, oracle[i].score);
    }
    double mass = 0.0;
    for (const auto& s : oracle) mass += std::exp(s.score);
    EXPECT_NEAR(mass, 1.0, 1e-9);
  }
}

TEST(Beam, TiesResolveByAscendingItem) {
  const VocabSpec v{2, 3};
  GeneratorModel m = random_model(v, 3);
  m.w_out.setZero();
  m.b_out.setZero();
  const auto ids = make_ids({{2, 0}, {0, 1}, {1, 2}, {0, 0}});
  const auto out = beam_search(m, build_prompt({{0, 0}}, v, 40), CatalogTrie(ids), 4);
  ASSERT_EQ(out.size(), 4u);
  // Level 1 has three branches; {0,*} then splits in two.
  EXPECT_EQ(out[0].item, 0u);
  EXPECT_EQ(out[1].item, 2u);
  EXPECT_EQ(out[2].item, 1u);
  EXPECT_EQ(out[3].item, 3u);
  EXPECT_NEAR(out[0].score, -std::log(3.0), 1e-12);
  EXPECT_NEAR(out[2].score, -std::log(6.0), 1e-12);
}

TEST(Beam, EveryDecodedIdIsInTheCatalog) {
  const VocabSpec v{3, 6};
  const auto ids = random_ids(60, 3, 6, 99);
  const CatalogTrie trie(ids);
  std::mt19937_64 rng(5);
  std::size_t decoded = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto m = random_model(v, 100 + seed);
    for (int u = 0; u < 10; ++u) {
      std::vector<std::vector<std::uint32_t>> hist;
      for (int j = 0; j < 1 + u % 4; ++j) hist.push_back(ids[rng() % ids.size()].tokens);
      const auto out = beam_search(m, build_prompt(hist, v, 40), trie, 12);
      std::set<ItemId> distinct;
      for (const auto& s : out) {
        ASSERT_TRUE(trie.contains(s.codes));
        EXPECT_EQ(ids[s.item].tokens, s.codes);
        distinct.insert(s.item);
        ++decoded;
      }
      EXPECT_EQ(distinct.size(), out.size());
      EXPECT_EQ(out.size(), 12u);
      for (std::size_t i = 1; i < out.size(); ++i) EXPECT_GE(out[i - 1].score, out[i].score);
    }
  }
  EXPECT_GE(decoded, 1000u);
}

TEST(Beam, WiderBeamNeverLowersTheBestScore) {
  const VocabSpec v{3, 6};
  const auto ids = random_ids(80, 3, 6, 12);
  const CatalogTrie trie(ids);
  std::size_t violations = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = random_model(v, 300 + seed);
    const Prompt p = build_prompt({ids[seed].tokens}, v, 40);
    double prev = -1e300;
    for (std::uint32_t b : {1u, 2u, 4u, 8u, 16u, 80u}) {
      const double best = beam_search(m, p, trie, b).front().score;
      if (best < prev) ++violations;
      prev = std::max(prev, best);
    }
    EXPECT_EQ(prev, exhaustive_scores(m, p, trie, ids).front().score);
  }
  EXPECT_EQ(violations, 0u);
}

TEST(Beam, ErrorsOnZeroWidthAndOverlongPrompt) {
  const VocabSpec v{2, 3};
  const auto m = random_model(v, 4, 5);
  const auto ids = make_ids({{0, 1}, {1, 2}});
  const CatalogTrie trie(ids);
  EXPECT_THROW(beam_search(m, build_prompt({{0, 0}}, v, 5), trie, 0), ConfigError);
  Prompt p{{1, 2, 5, 3, 6}, 5};
  EXPECT_THROW(beam_search(m, p, trie, 2), ConfigError);
}

TEST(Recommend, TopOneWithUnitBeamIsGreedy) {
  const VocabSpec v{3, 4};
  const auto m = random_model(v, 8);
  const auto ids = random_ids(30, 3, 4, 8);
  const CatalogTrie trie(ids);
  const IdTable table(ids);
  const std::vector<ItemId> hist{4, 9};
  const auto rec = recommend(m, table, trie, hist, {1, 1, false});
  ASSERT_EQ(rec.items.size(), 1u);
  // Greedy walk down the trie with the masked log-probabilities.
  std::vector<std::uint32_t> prefix;
  std::vector<std::uint32_t> tokens = build_prompt({ids[4].tokens, ids[9].tokens}, v, 38).tokens;
  for (std::uint32_t level = 0; level < 3; ++level) {
    const auto allowed = allowed_tokens(trie, prefix, v);
    const auto lp = masked_logprobs(next_token_logprobs(m, tokens), allowed);
    const auto best = std::max_element(lp.begin(), lp.end()) - lp.begin();
    prefix.push_back(trie.children(prefix)[static_cast<std::size_t>(best)]);
    tokens.push_back(allowed[static_cast<std::size_t>(best)]);
  }
  EXPECT_EQ(rec.items[0], trie.item_at(prefix));
}

TEST(Recommend, MatchesOracleTopTen) {
  const VocabSpec v{3, 8};
  const auto m = random_model(v, 21);
  const auto ids = random_ids(25, 3, 8, 21);
  const CatalogTrie trie(ids);
  const std::vector<ItemId> hist{1, 2, 3};
  const auto rec = recommend(m, IdTable(ids), trie, hist, {10, 30, true});
  const auto oracle = exhaustive_scores(
      m, build_prompt({ids[1].tokens, ids[2].tokens, ids[3].tokens}, v, 38), trie, ids);
  std::vector<ItemId> expect;
  for (const auto& s : oracle) {
    if (expect.size() < 10 && std::find(hist.begin(), hist.end(), s.item) == hist.end()) {
      expect.push_back(s.item);
    }
  }
  EXPECT_EQ(rec.items, expect);
  EXPECT_FALSE(rec.shortfall);
}

TEST(Recommend, ExcludingEverythingFlagsShortfall) {
  const VocabSpec v{2, 3};
  const auto m = random_model(v, 2);
  const auto ids = make_ids({{0, 1}, {1, 2}, {2, 0}});
  const auto rec = recommend(m, IdTable(ids), CatalogTrie(ids), {0, 1, 2}, {3, 3, true});
  EXPECT_TRUE(rec.items.empty());
  EXPECT_TRUE(rec.shortfall);
  EXPECT_THROW(recommend(m, IdTable(ids), CatalogTrie(ids), {0}, {5, 3, true}), ConfigError);
}

TEST(Recommend, JsonlRoundTrip) {
  testing::TempDir dir;
  Recommendation a{7, {3, 1, 4}, {-0.5, -1.25, -2.0}, false};
  Recommendation b{9, {2}, {-0.1}, true};
  {
    std::ofstream out(dir / "recs.jsonl");
    write_recommendation(out, a);
    write_recommendation(out, b);
  }
  std::ifstream in(dir / "recs.jsonl");
  std::string first;
  std::getline(in, first);
  EXPECT_EQ(first, R"({"user":7,"items":[3,1,4],"scores":[-0.5,-1.25,-2.0]})");
  const auto back = read_recommendations(dir / "recs.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].items, b.items);
  EXPECT_TRUE(back[1].shortfall);
  EXPECT_EQ(back[0].scores, a.scores);
  {
    std::ofstream out(dir / "bad.jsonl");
    out << "{\"user\":1}\n";
  }
  EXPECT_THROW(read_recommendations(dir / "bad.jsonl"), ParseError);
}

}  // namespace
}  // namespace genrec
