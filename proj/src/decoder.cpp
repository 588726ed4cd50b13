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

#include "genrec/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"

namespace genrec {

CatalogTrie::CatalogTrie(const std::vector<SemanticId>& ids) {
  nodes_.emplace_back();
  for (const SemanticId& s : ids) {
    if (depth_ == 0) depth_ = static_cast<std::uint32_t>(s.tokens.size());
    if (s.tokens.size() != depth_ || depth_ == 0) {
      throw ConfigError("CatalogTrie: inconsistent semantic id length for item " +
                        std::to_string(s.item));
    }
    std::uint32_t node = 0;
    bool fresh = false;
    for (std::uint32_t code : s.tokens) {
      auto it = nodes_[node].next.find(code);
      if (it == nodes_[node].next.end()) {
        const auto child = static_cast<std::uint32_t>(nodes_.size());
        nodes_[node].next.emplace(code, child);
        nodes_.emplace_back();
        node = child;
        fresh = true;
      } else {
        node = it->second;
      }
    }
    if (!fresh) {
      throw ConfigError("CatalogTrie: duplicate semantic id for item " + std::to_string(s.item));
    }
    nodes_[node].item = s.item;
    ++leaves_;
  }
}

const CatalogTrie::Node* CatalogTrie::find(const std::vector<std::uint32_t>& prefix) const {
  if (nodes_.empty() || prefix.size() > depth_) return nullptr;
  std::uint32_t node = 0;
  for (std::uint32_t code : prefix) {
    auto it = nodes_[node].next.find(code);
    if (it == nodes_[node].next.end()) return nullptr;
    node = it->second;
  }
  return &nodes_[node];
}

std::vector<std::uint32_t> CatalogTrie::children(const std::vector<std::uint32_t>& prefix) const {
  const Node* n = find(prefix);
  if (n == nullptr || prefix.size() >= depth_) {
    throw ConfigError("CatalogTrie: invalid prefix of length " + std::to_string(prefix.size()));
  }
  std::vector<std::uint32_t> out;
  out.reserve(n->next.size());
  for (const auto& [code, child] : n->next) out.push_back(code);
  return out;
}

ItemId CatalogTrie::item_at(const std::vector<std::uint32_t>& codes) const {
  const Node* n = find(codes);
  if (n == nullptr || codes.size() != depth_) throw ConfigError("CatalogTrie: not a catalog id");
  return n->item;
}

bool CatalogTrie::contains(const std::vector<std::uint32_t>& codes) const {
  return codes.size() == depth_ && depth_ > 0 && find(codes) != nullptr;
}

std::vector<std::uint32_t> allowed_tokens(const CatalogTrie& trie,
                                          const std::vector<std::uint32_t>& prefix,
                                          const VocabSpec& vocab) {
  const auto level = static_cast<std::uint32_t>(prefix.size()) + 1;
  std::vector<std::uint32_t> out;
  for (std::uint32_t code : trie.children(prefix)) out.push_back(vocab.token_id(level, code));
  return out;
}

std::vector<double> masked_logprobs(const RowVec& logits,
                                    const std::vector<std::uint32_t>& allowed) {
  if (allowed.empty()) throw ConfigError("masked_logprobs: empty allowed set");
  double mx = -std::numeric_limits<double>::infinity();
  for (std::uint32_t t : allowed) mx = std::max(mx, logits(t));
  double z = 0.0;
  for (std::uint32_t t : allowed) z += std::exp(logits(t) - mx);
  const double lse = mx + std::log(z);
  std::vector<double> out;
  out.reserve(allowed.size());
  for (std::uint32_t t : allowed) out.push_back(logits(t) - lse);
  return out;
}

namespace {

DecodeSession prompt_session(const GeneratorModel& model, const Prompt& prompt,
                             std::uint32_t depth) {
  if (prompt.tokens.empty()) throw ConfigError("decode: empty prompt");
  if (prompt.tokens.size() + depth - 1 > model.max_len) {
    throw ConfigError("decode: prompt of " + std::to_string(prompt.tokens.size()) +
                      " tokens leaves no room for " + std::to_string(depth) + " code tokens");
  }
  DecodeSession s(model);
  for (std::uint32_t t : prompt.tokens) s.push(t);
  s.seal();
  return s;
}

void sort_ranked(std::vector<ScoredItem>& items) {
  std::sort(items.begin(), items.end(), [](const ScoredItem& a, const ScoredItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item < b.item;
  });
}

}  // namespace

std::vector<ScoredItem> beam_search(const GeneratorModel& model, const Prompt& prompt,
                                    const CatalogTrie& trie, std::uint32_t beam_width) {
  if (beam_width == 0) throw ConfigError("beam_search: beam width must be at least 1");
  const std::uint32_t M = trie.depth();
  if (M == 0) return {};
  const VocabSpec& vocab = model.vocab;

  struct Hyp {
    std::vector<std::uint32_t> codes;
    double score;
    DecodeSession session;
  };
  std::vector<Hyp> beams;
  beams.push_back({{}, 0.0, prompt_session(model, prompt, M)});

  struct Cand {
    std::size_t parent;
    std::uint32_t code;
    std::uint32_t token;
    double score;
  };
  for (std::uint32_t level = 0; level < M; ++level) {
    std::vector<Cand> cands;
    for (std::size_t b = 0; b < beams.size(); ++b) {
      const auto codes = trie.children(beams[b].codes);
      const auto tokens = allowed_tokens(trie, beams[b].codes, vocab);
      const auto lps = masked_logprobs(beams[b].session.logits(), tokens);
      for (std::size_t i = 0; i < codes.size(); ++i) {
        cands.push_back({b, codes[i], tokens[i], beams[b].score + lps[i]});
      }
    }
    auto less_codes = [&](const Cand& a, const Cand& c) {
      const auto& pa = beams[a.parent].codes;
      const auto& pc = beams[c.parent].codes;
      if (pa != pc) return pa < pc;
      return a.code < c.code;
    };
    std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& c) {
      if (a.score != c.score) return a.score > c.score;
      return less_codes(a, c);
    });
    if (cands.size() > beam_width) cands.resize(beam_width);
    std::vector<Hyp> next;
    next.reserve(cands.size());
    for (const Cand& c : cands) {
      Hyp h{beams[c.parent].codes, c.score, beams[c.parent].session};
      h.codes.push_back(c.code);
      if (level + 1 < M) h.session.push(c.token);
      next.push_back(std::move(h));
    }
    beams = std::move(next);
  }

  std::vector<ScoredItem> out;
  out.reserve(beams.size());
  for (const Hyp& h : beams) out.push_back({trie.item_at(h.codes), h.codes, h.score});
  sort_ranked(out);
  return out;
}

std::vector<ScoredItem> exhaustive_scores(const GeneratorModel& model, const Prompt& prompt,
                                          const CatalogTrie& trie,
                                          const std::vector<SemanticId>& ids) {
  const std::uint32_t M = trie.depth();
  const DecodeSession root = prompt_session(model, prompt, M);
  std::vector<ScoredItem> out;
  for (const SemanticId& s : ids) {
    DecodeSession session = root;
    std::vector<std::uint32_t> prefix;
    double score = 0.0;
    for (std::uint32_t level = 0; level < M; ++level) {
      const auto codes = trie.children(prefix);
      const auto tokens = allowed_tokens(trie, prefix, model.vocab);
      const auto lps = masked_logprobs(session.logits(), tokens);
      const auto it = std::lower_bound(codes.begin(), codes.end(), s.tokens[level]);
      if (it == codes.end() || *it != s.tokens[level]) {
        throw ConfigError("exhaustive_scores: item not in trie");
      }
      const auto i = static_cast<std::size_t>(it - codes.begin());
      score = score + lps[i];
      prefix.push_back(s.tokens[level]);
      if (level + 1 < M) session.push(tokens[i]);
    }
    out.push_back({s.item, s.tokens, score});
  }
  sort_ranked(out);
  return out;
}

Recommendation recommend(const GeneratorModel& model, const IdTable& ids, const CatalogTrie& trie,
                         const std::vector<ItemId>& history, const RecommendOptions& opts) {
  if (opts.beam_width < opts.top_k) throw ConfigError("recommend: beam width smaller than top_k");
  std::vector<std::vector<std::uint32_t>> hist;
  hist.reserve(history.size());
  for (ItemId it : history) hist.push_back(ids.codes(it));
  const std::uint32_t M = trie.depth();
  if (model.max_len < M) throw ConfigError("recommend: max_len smaller than M");
  const Prompt prompt = build_prompt(hist, model.vocab, model.max_len - (M - 1));
  const auto ranked = beam_search(model, prompt, trie, opts.beam_width);
  const std::unordered_set<ItemId> seen(history.begin(), history.end());
  Recommendation rec;
  for (const ScoredItem& s : ranked) {
    if (rec.items.size() >= opts.top_k) break;
    if (opts.exclude_seen && seen.count(s.item) > 0) continue;
    rec.items.push_back(s.item);
    rec.scores.push_back(s.score);
  }
  rec.shortfall = rec.items.size() < opts.top_k;
  return rec;
}

void write_recommendation(std::ostream& out, const Recommendation& rec) {
  nlohmann::ordered_json j;
  j["user"] = rec.user;
  j["items"] = rec.items;
  j["scores"] = rec.scores;
  if (rec.shortfall) j["shortfall"] = true;
  out << j.dump() << '\n';
}

std::vector<Recommendation> read_recommendations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("read_recommendations: cannot open " + path.string());
  std::vector<Recommendation> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Recommendation r;
      r.user = j.at("user").get<UserId>();
      r.items = j.at("items").get<std::vector<ItemId>>();
      r.scores = j.at("scores").get<std::vector<double>>();
      r.shortfall = j.value("shortfall", false);
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace genrec
