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


#include "genrec/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>

#include "genrec/collab.hpp"
#include "genrec/dataset.hpp"
#include "genrec/decoder.hpp"
#include "genrec/emb_io.hpp"
#include "genrec/evaluation.hpp"
#include "genrec/fusion.hpp"
#include "genrec/generator.hpp"
#include "genrec/rqvae.hpp"

namespace genrec {

namespace fs = std::filesystem;

namespace {

struct StageSpec {
  std::string name;
  std::vector<std::string> key_prefixes;
  std::function<std::vector<std::string>(const RunConfig&)> inputs;
  std::vector<std::string> outputs;
  std::function<void(const RunConfig&, const ArtifactStore&)> body;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing " + path.string());
  return nlohmann::json::parse(in);
}

std::string absolute_path(const std::string& p) { return fs::absolute(p).lexically_normal().string(); }

FusionMode mode_of(const RunConfig& cfg) { return cfg.ablation; }

std::uint32_t max_k(const RunConfig& cfg) {
  return *std::max_element(cfg.eval_ks.begin(), cfg.eval_ks.end());
}

void stage_synth(const RunConfig& cfg, const ArtifactStore& store) {
  const SyntheticData data = generate_synthetic(cfg.synth_config());
  write_interactions(store.path("raw/interactions.tsv"), data.log);
  write_emb(store.path("raw/visual.emb"), data.catalog.visual);
  write_emb(store.path("raw/text.emb"), data.catalog.text);
  write_id_list(store.path("raw/visual_ids.txt"), data.catalog.item_names);
  write_id_list(store.path("raw/text_ids.txt"), data.catalog.item_names);
  std::ostringstream items;
  items << "item,cluster,cold\n";
  for (std::size_t i = 0; i < data.catalog.item_names.size(); ++i) {
    items << data.catalog.item_names[i] << ',' << data.item_cluster[i] << ','
          << int(data.item_cold[i]) << '\n';
  }
  write_text(store.path("raw/items.csv"), items.str());
}

struct RawPaths {
  std::string interactions, visual, visual_ids, text, text_ids;
};

RawPaths raw_paths(const RunConfig& cfg) {
  if (cfg.data_source == "synth") {
    return {"raw/interactions.tsv", "raw/visual.emb", "raw/visual_ids.txt", "raw/text.emb",
            "raw/text_ids.txt"};
  }
  return {absolute_path(cfg.interactions), absolute_path(cfg.visual), absolute_path(cfg.visual_ids),
          absolute_path(cfg.text), absolute_path(cfg.text_ids)};
}

void stage_prepare(const RunConfig& cfg, const ArtifactStore& store) {
  const RawPaths raw = raw_paths(cfg);
  InteractionLog log = load_interactions(store.path(raw.interactions));
  if (cfg.core_k > 0) log = filter_core(log, cfg.core_k);
  const ItemCatalog catalog = make_catalog(
      log.item_names, read_emb(store.path(raw.visual)), read_id_list(store.path(raw.visual_ids)),
      read_emb(store.path(raw.text)), read_id_list(store.path(raw.text_ids)));
  const SplitDataset split = leave_one_out_split(log);
  if (split.users.empty()) throw EmptyDatasetError("no user has at least 3 interactions");
  write_split(store.path("data/split.tsv"), split);
  write_id_list(store.path("data/items.txt"), log.item_names);
  write_id_list(store.path("data/users.txt"), log.user_names);
  write_emb(store.path("data/visual.emb"), catalog.visual);
  write_emb(store.path("data/text.emb"), catalog.text);
  std::ostringstream presence;
  presence << "item,has_visual,has_text\n";
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    presence << i << ',' << int(catalog.has_visual[i]) << ',' << int(catalog.has_text[i]) << '\n';
  }
  write_text(store.path("data/presence.csv"), presence.str());
  write_text(store.path("data/stats.json"), stats_to_json(compute_stats(log)) + "\n");
}

void stage_train_collab(const RunConfig& cfg, const ArtifactStore& store) {
  const SplitDataset split = read_split(store.path("data/split.tsv"));
  const BipartiteGraph g = build_graph(split);
  std::vector<double> losses;
  const CollabEmbeddings emb = bpr_train(g, cfg.collab_config(), &losses);
  save_collab(store.path("collab"), emb, cfg.collab_config());
  std::ostringstream out;
  out << "epoch,loss\n";
  for (std::size_t e = 0; e < losses.size(); ++e) out << e + 1 << ',' << losses[e] << '\n';
  write_text(store.path("collab/loss.csv"), out.str());
}

void stage_fuse(const RunConfig& cfg, const ArtifactStore& store) {
  const FusionMode mode = mode_of(cfg);
  const Mat visual = read_emb(store.path("data/visual.emb"));
  const Mat text = read_emb(store.path("data/text.emb"));
  ModalityInputs in;
  in.visual = fit_modality(visual, cfg.d).apply(visual);
  in.text = fit_modality(text, cfg.d).apply(text);
  if (mode.use_collab) {
    in.collab = load_collab(store.path("collab")).item_emb;
    if (in.collab.rows() != visual.rows() || in.collab.cols() != cfg.d) {
      throw ConfigError("collaborative embeddings have shape " + std::to_string(in.collab.rows()) +
                        "x" + std::to_string(in.collab.cols()) + ", expected " +
                        std::to_string(visual.rows()) + "x" + std::to_string(cfg.d));
    }
    normalize_mean_row_norm(in.collab);
  } else {
    in.collab = Mat::Zero(visual.rows(), cfg.d);
  }
  if (!mode.use_image) in.visual.setZero();
  if (!mode.use_text) in.text.setZero();
  write_emb(store.path("fusion/visual.emb"), in.visual);
  write_emb(store.path("fusion/text.emb"), in.text);
  write_emb(store.path("fusion/collab.emb"), in.collab);
  const FusionParams p = init_fusion(cfg.d, cfg.seed);
  save_fusion(store.path("fusion/params"), p, mode);
  write_emb(store.path("fusion/fused.emb"), fuse_catalog(in, p, mode));
}

ModalityInputs read_inputs(const ArtifactStore& store) {
  ModalityInputs in;
  in.visual = read_emb(store.path("fusion/visual.emb"));
  in.text = read_emb(store.path("fusion/text.emb"));
  in.collab = read_emb(store.path("fusion/collab.emb"));
  return in;
}

void stage_train_tokenizer(const RunConfig& cfg, const ArtifactStore& store) {
  const FusionMode mode = mode_of(cfg);
  const ModalityInputs in = read_inputs(store);
  FusionParams p = load_fusion(store.path("fusion/params"));
  std::vector<LossParts> log;
  const RqVaeConfig rcfg = cfg.rqvae_config();
  const RqVaeModel model = train_rqvae_joint(in, p, mode, rcfg, &log);
  save_rqvae(store.path("tokenizer/rqvae"), model, rcfg);
  save_fusion(store.path("tokenizer/fusion"), p, mode);
  write_emb(store.path("tokenizer/fused.emb"), fuse_catalog(in, p, mode));
  std::ostringstream out;
  out << "epoch,total,recon,quant,div\n";
  for (std::size_t e = 0; e < log.size(); ++e) {
    out << e + 1 << ',' << log[e].total << ',' << log[e].recon << ',' << log[e].quant << ','
        << log[e].div << '\n';
  }
  write_text(store.path("tokenizer/loss.csv"), out.str());
}

void stage_assign_ids(const RunConfig&, const ArtifactStore& store) {
  const Mat fused = read_emb(store.path("tokenizer/fused.emb"));
  const RqVaeModel model = load_rqvae(store.path("tokenizer/rqvae"));
  const auto ppl = code_perplexity(raw_codes(fused, model), model.M(), model.K());
  const auto ids = assign_ids(fused, model);
  write_semantic_ids(store.path("ids/semantic_ids.csv"), ids);
  nlohmann::ordered_json j;
  j["M"] = model.M();
  j["K"] = model.K();
  j["perplexity"] = ppl;
  double mean = 0.0;
  for (double v : ppl) mean += v;
  j["mean_perplexity"] = ppl.empty() ? 0.0 : mean / static_cast<double>(ppl.size());
  write_text(store.path("ids/tokenizer.json"), j.dump(2) + "\n");
}

VocabSpec vocab_of(const ArtifactStore& store) {
  const auto j = read_json(store.path("ids/tokenizer.json"));
  return VocabSpec{j.at("M").get<std::uint32_t>(), j.at("K").get<std::uint32_t>()};
}

void stage_train_generator(const RunConfig& cfg, const ArtifactStore& store) {
  const SplitDataset split = read_split(store.path("data/split.tsv"));
  const IdTable table(read_semantic_ids(store.path("ids/semantic_ids.csv")));
  const VocabSpec vocab = vocab_of(store);
  const GeneratorConfig gcfg = cfg.generator_config();
  GeneratorTrainLog log;
  const GeneratorModel model = train_generator(split, table, vocab, gcfg, &log);
  save_generator(store.path("generator"), model, {gcfg, log.best_epoch, log.best_val_loss});
  std::ostringstream out;
  out << "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < log.val_loss.size(); ++e) {
    out << e + 1 << ',' << (e < log.train_loss.size() ? log.train_loss[e] : 0.0) << ','
        << log.val_loss[e] << '\n';
  }
  write_text(store.path("generator/loss.csv"), out.str());
}

void stage_recommend(const RunConfig& cfg, const ArtifactStore& store) {
  const SplitDataset split = read_split(store.path("data/split.tsv"));
  const auto ids = read_semantic_ids(store.path("ids/semantic_ids.csv"));
  const IdTable table(ids);
  const CatalogTrie trie(ids);
  const GeneratorModel model = load_generator(store.path("generator"));
  RecommendOptions opts;
  opts.top_k = max_k(cfg);
  opts.beam_width = cfg.beam_width;
  opts.exclude_seen = cfg.exclude_seen;
  fs::create_directories(store.path("recs"));
  std::ofstream out(store.path("recs/recommendations.jsonl"), std::ios::trunc);
  for (const UserSplit& us : split.users) {
    Recommendation rec = recommend(model, table, trie, history_for(us, HistoryMode::kTest), opts);
    rec.user = us.user;
    write_recommendation(out, rec);
  }
  if (!out) throw Error("cannot write recommendations");
}

nlohmann::ordered_json slice_json(const SplitDataset& split,
                                  const std::vector<std::vector<ItemId>>& rankings,
                                  const std::vector<std::uint32_t>& ks,
                                  const ColdStartSlice* slice) {
  try {
    return eval_to_json(evaluate_rankings(split, rankings, ks, HistoryMode::kTest, slice));
  } catch (const EmptyDatasetError&) {
    return nullptr;
  }
}

void stage_evaluate(const RunConfig& cfg, const ArtifactStore& store) {
  const SplitDataset split = read_split(store.path("data/split.tsv"));
  const auto recs = read_recommendations(store.path("recs/recommendations.jsonl"));
  std::map<UserId, const Recommendation*> by_user;
  for (const auto& r : recs) by_user[r.user] = &r;
  std::vector<std::vector<ItemId>> model_rank, pop_rank;
  const Recommender pop = popularity_recommender(split, max_k(cfg));
  for (const UserSplit& us : split.users) {
    const auto it = by_user.find(us.user);
    if (it == by_user.end()) throw Error("no recommendation for user " + std::to_string(us.user));
    model_rank.push_back(it->second->items);
    pop_rank.push_back(pop(us, history_for(us, HistoryMode::kTest)));
  }
  const ColdStartSlice cold = cold_slice(split, cfg.cold_threshold);
  const auto tok = read_json(store.path("ids/tokenizer.json"));

  nlohmann::ordered_json m;
  const auto all = evaluate_rankings(split, model_rank, cfg.eval_ks, HistoryMode::kTest);
  const auto all_json = eval_to_json(all);
  m["slice"] = "all";
  m["hr"] = all_json["hr"];
  m["ndcg"] = all_json["ndcg"];
  m["n_users"] = all.n_users;
  m["n_items"] = split.n_items;
  m["cold"] = slice_json(split, model_rank, cfg.eval_ks, &cold);
  m["cold_threshold"] = cfg.cold_threshold;
  m["n_cold_items"] = cold.cold_items.size();
  nlohmann::ordered_json base;
  base["popularity"] = slice_json(split, pop_rank, cfg.eval_ks, nullptr);
  base["popularity_cold"] = slice_json(split, pop_rank, cfg.eval_ks, &cold);
  nlohmann::ordered_json rnd = nlohmann::ordered_json::object();
  for (auto k : cfg.eval_ks) rnd[std::to_string(k)] = random_hit_rate(k, split.n_items);
  base["random_hr"] = rnd;
  m["baselines"] = base;
  m["codebook_perplexity"] = tok.at("perplexity");
  m["mean_perplexity"] = tok.at("mean_perplexity");
  nlohmann::ordered_json abl;
  abl["use_collab"] = cfg.ablation.use_collab;
  abl["use_image"] = cfg.ablation.use_image;
  abl["use_text"] = cfg.ablation.use_text;
  m["ablation"] = abl;
  std::size_t shortfall = 0;
  for (const auto& r : recs) shortfall += r.shortfall ? 1 : 0;
  m["shortfall_users"] = shortfall;
  write_text(store.path(kMetricsFile), m.dump(2) + "\n");
}

const std::vector<StageSpec>& stages() {
  static const std::vector<StageSpec> all = [] {
    std::vector<StageSpec> s;
    s.push_back({"synth",
                 {"seed", "d_v", "d_t", "synth."},
                 [](const RunConfig&) { return std::vector<std::string>{}; },
                 {"raw"},
                 stage_synth});
    s.push_back({"prepare",
                 {"data."},
                 [](const RunConfig& c) {
                   const RawPaths r = raw_paths(c);
                   return std::vector<std::string>{r.interactions, r.visual, r.visual_ids, r.text,
                                                   r.text_ids};
                 },
                 {"data"},
                 stage_prepare});
    s.push_back({"train-collab",
                 {"seed", "d", "collab."},
                 [](const RunConfig&) { return std::vector<std::string>{"data/split.tsv"}; },
                 {"collab"},
                 stage_train_collab});
    s.push_back({"fuse",
                 {"seed", "d", "ablation."},
                 [](const RunConfig& c) {
                   std::vector<std::string> in{"data/visual.emb", "data/text.emb"};
                   if (c.ablation.use_collab) in.push_back("collab/item.emb");
                   return in;
                 },
                 {"fusion"},
                 stage_fuse});
    s.push_back({"train-tokenizer",
                 {"seed", "rqvae.", "ablation."},
                 [](const RunConfig&) { return std::vector<std::string>{"fusion"}; },
                 {"tokenizer"},
                 stage_train_tokenizer});
    s.push_back({"assign-ids",
                 {},
                 [](const RunConfig&) {
                   return std::vector<std::string>{"tokenizer/fused.emb", "tokenizer/rqvae"};
                 },
                 {"ids"},
                 stage_assign_ids});
    s.push_back({"train-generator",
                 {"seed", "generator."},
                 [](const RunConfig&) {
                   return std::vector<std::string>{"data/split.tsv", "ids"};
                 },
                 {"generator"},
                 stage_train_generator});
    s.push_back({"recommend",
                 {"decode.", "eval.Ks"},
                 [](const RunConfig&) {
                   return std::vector<std::string>{"data/split.tsv", "ids/semantic_ids.csv",
                                                   "generator"};
                 },
                 {"recs"},
                 stage_recommend});
    s.push_back({"evaluate",
                 {"eval.", "ablation."},
                 [](const RunConfig&) {
                   return std::vector<std::string>{"data/split.tsv", "recs", "ids/tokenizer.json"};
                 },
                 {kMetricsFile},
                 stage_evaluate});
    return s;
  }();
  return all;
}

const StageSpec& find_stage(const std::string& name) {
  for (const StageSpec& s : stages()) {
    if (s.name == name) return s;
  }
  throw ConfigError("unknown stage '" + name + "'");
}

std::string stage_config_hash(const StageSpec& spec, const RunConfig& cfg) {
  std::string text = spec.name + "\n";
  for (const std::string& key : config_keys()) {
    for (const std::string& prefix : spec.key_prefixes) {
      const bool match = prefix.back() == '.' ? key.rfind(prefix, 0) == 0 : key == prefix;
      if (match) {
        text += key + " = " + get_config_value(cfg, key) + "\n";
        break;
      }
    }
  }
  return sha256_hex(text);
}

std::string format_seconds(double s) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << s << "s";
  return out.str();
}

}  // namespace

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const StageSpec& s : stages()) n.push_back(s.name);
    return n;
  }();
  return names;
}

std::vector<std::string> pipeline_stages(const RunConfig& cfg) {
  std::vector<std::string> out;
  for (const StageSpec& s : stages()) {
    if (s.name == "synth" && cfg.data_source != "synth") continue;
    if (s.name == "train-collab" && !cfg.ablation.use_collab) continue;
    out.push_back(s.name);
  }
  return out;
}

bool run_stage(const std::string& stage, const RunConfig& cfg, const ArtifactStore& store,
               const PipelineOptions& opts) {
  const StageSpec& spec = find_stage(stage);
  const std::string hash = stage_config_hash(spec, cfg);
  std::vector<std::string> inputs;
  try {
    inputs = spec.inputs(cfg);
    if (!opts.force && store.up_to_date(stage, hash, inputs)) {
      if (opts.log != nullptr) *opts.log << "[" << stage << "] up to date\n";
      store.log_timing(stage, 0.0);
      return false;
    }
    for (const std::string& in : inputs) {
      if (!fs::exists(store.path(in))) {
        throw Error("missing input artifact " + in + " (run the upstream stage first)");
      }
    }
    fs::remove(store.manifest_path(stage));
    const auto t0 = std::chrono::steady_clock::now();
    spec.body(cfg, store);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    store.write_manifest(stage, hash, inputs, spec.outputs);
    store.log_timing(stage, secs);
    if (opts.log != nullptr) *opts.log << "[" << stage << "] done in " << format_seconds(secs) << "\n";
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
  return true;
}

void run_pipeline(const RunConfig& cfg, const ArtifactStore& store, const PipelineOptions& opts) {
  validate_config(cfg);
  write_text(store.path(kConfigFile), serialize_config(cfg));
  for (const std::string& stage : pipeline_stages(cfg)) run_stage(stage, cfg, store, opts);
}

nlohmann::json read_metrics(const fs::path& run_dir) { return read_json(run_dir / kMetricsFile); }

std::string sweep_key(const std::string& param) {
  if (param == "M") return "rqvae.M";
  if (param == "K") return "rqvae.K";
  if (param == "lambda_q" || param == "λq") return "rqvae.lambda_q";
  if (param == "lambda_d" || param == "λd") return "rqvae.lambda_d";
  for (const char* full : {"rqvae.M", "rqvae.K", "rqvae.lambda_q", "rqvae.lambda_d"}) {
    if (param == full) return param;
  }
  throw ConfigError("sweep: parameter must be one of M, K, lambda_q, lambda_d (got '" + param +
                    "')");
}

SweepResult run_sweep(const RunConfig& cfg, const std::string& param,
                      const std::vector<std::string>& values, const ArtifactStore& store,
                      const PipelineOptions& opts) {
  const std::string key = sweep_key(param);
  if (values.empty()) throw ConfigError("sweep: no values given");
  const std::string short_name = key.substr(key.find('.') + 1);
  std::vector<RunConfig> cfgs;
  for (const std::string& v : values) {
    RunConfig c = cfg;
    set_config_value(c, key, v);
    validate_config(c);
    cfgs.push_back(c);
  }
  SweepResult result;
  result.param = short_name;
  for (std::size_t i = 0; i < values.size(); ++i) {
    SweepRow row;
    row.value = values[i];
    const ArtifactStore sub(store.path("sweep/" + short_name + "=" + values[i]));
    try {
      run_pipeline(cfgs[i], sub, opts);
      const auto m = read_metrics(sub.root());
      row.hr10 = m.at("hr").at("10").get<double>();
      row.ndcg10 = m.at("ndcg").at("10").get<double>();
      row.perplexity = m.at("mean_perplexity").get<double>();
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
      if (opts.log != nullptr) *opts.log << "[sweep] " << short_name << "=" << values[i] << ": " << e.what() << "\n";
    }
    result.rows.push_back(row);
  }
  write_text(store.path("sweep_" + short_name + ".csv"), sweep_csv(result));
  write_text(store.path("sweep_" + short_name + ".json"), sweep_json(result).dump(2) + "\n");
  return result;
}

std::string sweep_csv(const SweepResult& r) {
  std::ostringstream out;
  out << "param,value,hr@10,ndcg@10,perplexity\n";
  out << std::setprecision(17);
  for (const SweepRow& row : r.rows) {
    out << r.param << ',' << row.value << ',';
    if (row.ok) {
      out << row.hr10 << ',' << row.ndcg10 << ',' << row.perplexity;
    } else {
      out << ",,";
    }
    out << '\n';
  }
  return out.str();
}

nlohmann::ordered_json sweep_json(const SweepResult& r) {
  nlohmann::ordered_json j;
  j["param"] = r.param;
  nlohmann::ordered_json values = nlohmann::ordered_json::array();
  nlohmann::ordered_json hr = nlohmann::ordered_json::array();
  nlohmann::ordered_json nd = nlohmann::ordered_json::array();
  nlohmann::ordered_json ppl = nlohmann::ordered_json::array();
  nlohmann::ordered_json errors = nlohmann::ordered_json::object();
  for (const SweepRow& row : r.rows) {
    values.push_back(row.value);
    hr.push_back(row.ok ? nlohmann::ordered_json(row.hr10) : nlohmann::ordered_json(nullptr));
    nd.push_back(row.ok ? nlohmann::ordered_json(row.ndcg10) : nlohmann::ordered_json(nullptr));
    ppl.push_back(row.ok ? nlohmann::ordered_json(row.perplexity) : nlohmann::ordered_json(nullptr));
    if (!row.ok) errors[row.value] = row.error;
  }
  j["values"] = values;
  j["hr@10"] = hr;
  j["ndcg@10"] = nd;
  j["perplexity"] = ppl;
  j["errors"] = errors;
  return j;
}

Report build_report(const std::vector<fs::path>& run_dirs) {
  Report rep;
  std::optional<std::set<std::uint32_t>> common;
  std::set<std::set<std::uint32_t>> distinct;
  for (const fs::path& dir : run_dirs) {
    ReportRow row;
    row.run = dir.string();
    try {
      const auto m = read_metrics(dir);
      for (const auto& [k, v] : m.at("hr").items()) row.hr[std::stoul(k)] = v.get<double>();
      for (const auto& [k, v] : m.at("ndcg").items()) row.ndcg[std::stoul(k)] = v.get<double>();
      row.present = true;
    } catch (const std::exception&) {
      rep.warnings.push_back("no metrics in " + dir.string() + "; row marked absent");
    }
    if (row.present) {
      std::set<std::uint32_t> ks;
      for (const auto& [k, v] : row.hr) ks.insert(k);
      distinct.insert(ks);
      if (!common) {
        common = ks;
      } else {
        std::set<std::uint32_t> both;
        std::set_intersection(common->begin(), common->end(), ks.begin(), ks.end(),
                              std::inserter(both, both.begin()));
        common = both;
      }
    }
    rep.rows.push_back(std::move(row));
  }
  if (common) rep.ks.assign(common->begin(), common->end());
  if (distinct.size() > 1) {
    std::string ks;
    for (auto k : rep.ks) ks += (ks.empty() ? "" : ",") + std::to_string(k);
    rep.warnings.push_back("runs report different cutoffs; using the intersection {" + ks + "}");
  }
  return rep;
}

std::string report_table(const Report& r) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> head{"run"};
  for (auto k : r.ks) head.push_back("hr@" + std::to_string(k));
  for (auto k : r.ks) head.push_back("ndcg@" + std::to_string(k));
  const bool deltas = r.rows.size() > 1 && r.rows.front().present;
  if (deltas) {
    for (auto k : r.ks) head.push_back("Δhr@" + std::to_string(k));
    for (auto k : r.ks) head.push_back("Δndcg@" + std::to_string(k));
  }
  cells.push_back(head);
  auto fmt = [](double v, bool sign) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(4) << (sign && v >= 0 ? "+" : "") << v;
    return o.str();
  };
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const ReportRow& row = r.rows[i];
    std::vector<std::string> line{row.run};
    const std::size_t n_metric = r.ks.size() * (deltas ? 4 : 2);
    if (!row.present) {
      line.push_back("absent");
      line.resize(1 + n_metric, "");
    } else {
      for (auto k : r.ks) line.push_back(fmt(row.hr.at(k), false));
      for (auto k : r.ks) line.push_back(fmt(row.ndcg.at(k), false));
      if (deltas) {
        const ReportRow& base = r.rows.front();
        for (auto k : r.ks) line.push_back(i == 0 ? "-" : fmt(row.hr.at(k) - base.hr.at(k), true));
        for (auto k : r.ks) line.push_back(i == 0 ? "-" : fmt(row.ndcg.at(k) - base.ndcg.at(k), true));
      }
    }
    cells.push_back(line);
  }
  std::vector<std::size_t> width(head.size(), 0);
  auto display_len = [](const std::string& s) {
    std::size_t n = 0;
    for (unsigned char c : s) n += (c & 0xC0) != 0x80 ? 1 : 0;
    return n;
  };
  for (const auto& line : cells)
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], display_len(line[c]));
  std::ostringstream out;
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      out << line[c];
      if (c + 1 < line.size()) out << std::string(width[c] - display_len(line[c]) + 2, ' ');
    }
    out << '\n';
  }
  return out.str();
}

nlohmann::ordered_json report_json(const Report& r) {
  nlohmann::ordered_json j;
  j["ks"] = r.ks;
  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  const ReportRow* base = !r.rows.empty() && r.rows.front().present ? &r.rows.front() : nullptr;
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const ReportRow& row = r.rows[i];
    nlohmann::ordered_json e;
    e["run"] = row.run;
    e["present"] = row.present;
    if (row.present) {
      nlohmann::ordered_json hr = nlohmann::ordered_json::object(), nd = nlohmann::ordered_json::object();
      for (auto k : r.ks) hr[std::to_string(k)] = row.hr.at(k);
      for (auto k : r.ks) nd[std::to_string(k)] = row.ndcg.at(k);
      e["hr"] = hr;
      e["ndcg"] = nd;
      if (i > 0 && base != nullptr) {
        nlohmann::ordered_json dh = nlohmann::ordered_json::object(), dn = nlohmann::ordered_json::object();
        for (auto k : r.ks) dh[std::to_string(k)] = row.hr.at(k) - base->hr.at(k);
        for (auto k : r.ks) dn[std::to_string(k)] = row.ndcg.at(k) - base->ndcg.at(k);
        e["delta_hr"] = dh;
        e["delta_ndcg"] = dn;
      }
    }
    runs.push_back(e);
  }
  j["runs"] = runs;
  j["warnings"] = r.warnings;
  return j;
}

}  // namespace genrec
