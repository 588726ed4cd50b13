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


#include "genrec/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace genrec {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
  throw ConfigError("config: " + key + " = '" + value + "' is not " + what);
}

std::string to_text(std::uint64_t v) { return std::to_string(v); }
std::string to_text(std::uint32_t v) { return std::to_string(v); }
std::string to_text(bool v) { return v ? "true" : "false"; }
std::string to_text(const std::string& v) { return v; }
// Shortest round-trip text, preferring plain decimals over exponents.
std::string to_text(double v) {
  char buf[400];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed);
  if (res.ec == std::errc() && res.ptr - buf <= 12) return std::string(buf, res.ptr);
  res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}
std::string to_text(const std::vector<std::uint32_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    bad_value(key, s, "a non-negative integer");
  }
  return v;
}

void from_text(const std::string& key, const std::string& s, std::uint64_t& out) {
  out = parse_u64(key, s);
}
void from_text(const std::string& key, const std::string& s, std::uint32_t& out) {
  const auto v = parse_u64(key, s);
  if (v > std::numeric_limits<std::uint32_t>::max()) bad_value(key, s, "a 32-bit integer");
  out = static_cast<std::uint32_t>(v);
}
void from_text(const std::string& key, const std::string& s, bool& out) {
  if (s == "true" || s == "1") {
    out = true;
  } else if (s == "false" || s == "0") {
    out = false;
  } else {
    bad_value(key, s, "a boolean");
  }
}
void from_text(const std::string&, const std::string& s, std::string& out) { out = s; }
void from_text(const std::string& key, const std::string& s, double& out) {
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) bad_value(key, s, "a number");
}
void from_text(const std::string& key, const std::string& s, std::vector<std::uint32_t>& out) {
  out.clear();
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    std::uint32_t v = 0;
    from_text(key, trim(part), v);
    out.push_back(v);
  }
  if (out.empty()) bad_value(key, s, "a comma-separated list");
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename Access>
Field field(std::string key, Access access) {
  Field f;
  f.key = key;
  f.get = [access](const RunConfig& c) { return to_text(access(const_cast<RunConfig&>(c))); };
  f.set = [access, key](RunConfig& c, const std::string& s) { from_text(key, s, access(c)); };
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    std::vector<Field> f;
    f.push_back(field("seed", [](RunConfig& c) -> auto& { return c.seed; }));
    f.push_back(field("d", [](RunConfig& c) -> auto& { return c.d; }));
    f.push_back(field("d_v", [](RunConfig& c) -> auto& { return c.synth.d_v; }));
    f.push_back(field("d_t", [](RunConfig& c) -> auto& { return c.synth.d_t; }));
    f.push_back(field("data.source", [](RunConfig& c) -> auto& { return c.data_source; }));
    f.push_back(field("data.interactions", [](RunConfig& c) -> auto& { return c.interactions; }));
    f.push_back(field("data.visual", [](RunConfig& c) -> auto& { return c.visual; }));
    f.push_back(field("data.visual_ids", [](RunConfig& c) -> auto& { return c.visual_ids; }));
    f.push_back(field("data.text", [](RunConfig& c) -> auto& { return c.text; }));
    f.push_back(field("data.text_ids", [](RunConfig& c) -> auto& { return c.text_ids; }));
    f.push_back(field("data.core_k", [](RunConfig& c) -> auto& { return c.core_k; }));
    f.push_back(field("synth.n_users", [](RunConfig& c) -> auto& { return c.synth.n_users; }));
    f.push_back(field("synth.n_items", [](RunConfig& c) -> auto& { return c.synth.n_items; }));
    f.push_back(field("synth.n_clusters", [](RunConfig& c) -> auto& { return c.synth.n_clusters; }));
    f.push_back(field("synth.p_in", [](RunConfig& c) -> auto& { return c.synth.p_in; }));
    f.push_back(field("synth.center_scale", [](RunConfig& c) -> auto& { return c.synth.center_scale; }));
    f.push_back(field("synth.noise_scale", [](RunConfig& c) -> auto& { return c.synth.noise_scale; }));
    f.push_back(field("synth.min_len", [](RunConfig& c) -> auto& { return c.synth.min_len; }));
    f.push_back(field("synth.max_len", [](RunConfig& c) -> auto& { return c.synth.max_len; }));
    f.push_back(field("synth.cold_fraction", [](RunConfig& c) -> auto& { return c.synth.cold_fraction; }));
    f.push_back(field("synth.cold_weight", [](RunConfig& c) -> auto& { return c.synth.cold_weight; }));
    f.push_back(field("synth.split_modalities", [](RunConfig& c) -> auto& { return c.synth.split_modalities; }));
    f.push_back(field("synth.walk_span", [](RunConfig& c) -> auto& { return c.synth.walk_span; }));
    f.push_back(field("synth.cold_tail", [](RunConfig& c) -> auto& { return c.synth.cold_tail; }));
    f.push_back(field("collab.n_layers", [](RunConfig& c) -> auto& { return c.collab_layers; }));
    f.push_back(field("collab.lr", [](RunConfig& c) -> auto& { return c.collab_lr; }));
    f.push_back(field("collab.epochs", [](RunConfig& c) -> auto& { return c.collab_epochs; }));
    f.push_back(field("collab.batch", [](RunConfig& c) -> auto& { return c.collab_batch; }));
    f.push_back(field("collab.reg", [](RunConfig& c) -> auto& { return c.collab_reg; }));
    f.push_back(field("collab.init_std", [](RunConfig& c) -> auto& { return c.collab_init_std; }));
    f.push_back(field("rqvae.M", [](RunConfig& c) -> auto& { return c.rqvae.M; }));
    f.push_back(field("rqvae.K", [](RunConfig& c) -> auto& { return c.rqvae.K; }));
    f.push_back(field("rqvae.h", [](RunConfig& c) -> auto& { return c.rqvae.h; }));
    f.push_back(field("rqvae.hidden", [](RunConfig& c) -> auto& { return c.rqvae.hidden; }));
    f.push_back(field("rqvae.lambda_q", [](RunConfig& c) -> auto& { return c.rqvae.lambda_q; }));
    f.push_back(field("rqvae.lambda_d", [](RunConfig& c) -> auto& { return c.rqvae.lambda_d; }));
    f.push_back(field("rqvae.beta", [](RunConfig& c) -> auto& { return c.rqvae.beta; }));
    f.push_back(field("rqvae.tau", [](RunConfig& c) -> auto& { return c.rqvae.tau; }));
    f.push_back(field("rqvae.lr", [](RunConfig& c) -> auto& { return c.rqvae.lr; }));
    f.push_back(field("rqvae.epochs", [](RunConfig& c) -> auto& { return c.rqvae.epochs; }));
    f.push_back(field("rqvae.batch", [](RunConfig& c) -> auto& { return c.rqvae.batch; }));
    f.push_back(field("rqvae.kmeans_iters", [](RunConfig& c) -> auto& { return c.rqvae.kmeans_iters; }));
    f.push_back(field("rqvae.reseed_dead", [](RunConfig& c) -> auto& { return c.rqvae.reseed_dead; }));
    f.push_back(field("generator.layers", [](RunConfig& c) -> auto& { return c.generator.n_layers; }));
    f.push_back(field("generator.heads", [](RunConfig& c) -> auto& { return c.generator.n_heads; }));
    f.push_back(field("generator.width", [](RunConfig& c) -> auto& { return c.generator.width; }));
    f.push_back(field("generator.ff_mult", [](RunConfig& c) -> auto& { return c.generator.ff_mult; }));
    f.push_back(field("generator.lr", [](RunConfig& c) -> auto& { return c.generator.lr; }));
    f.push_back(field("generator.epochs", [](RunConfig& c) -> auto& { return c.generator.epochs; }));
    f.push_back(field("generator.batch", [](RunConfig& c) -> auto& { return c.generator.batch; }));
    f.push_back(field("generator.max_len", [](RunConfig& c) -> auto& { return c.generator.max_len; }));
    f.push_back(field("generator.init_std", [](RunConfig& c) -> auto& { return c.generator.init_std; }));
    f.push_back(field("decode.B", [](RunConfig& c) -> auto& { return c.beam_width; }));
    f.push_back(field("decode.exclude_seen", [](RunConfig& c) -> auto& { return c.exclude_seen; }));
    f.push_back(field("eval.Ks", [](RunConfig& c) -> auto& { return c.eval_ks; }));
    f.push_back(field("eval.cold_threshold", [](RunConfig& c) -> auto& { return c.cold_threshold; }));
    f.push_back(field("ablation.use_collab", [](RunConfig& c) -> auto& { return c.ablation.use_collab; }));
    f.push_back(field("ablation.use_image", [](RunConfig& c) -> auto& { return c.ablation.use_image; }));
    f.push_back(field("ablation.use_text", [](RunConfig& c) -> auto& { return c.ablation.use_text; }));
    return f;
  }();
  return all;
}

const Field& find_field(const std::string& key) {
  for (const Field& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("config: unknown key '" + key + "'");
}

}  // namespace

CollabConfig RunConfig::collab_config() const {
  CollabConfig c;
  c.d = d;
  c.n_layers = collab_layers;
  c.lr = collab_lr;
  c.epochs = collab_epochs;
  c.batch = collab_batch;
  c.reg = collab_reg;
  c.init_std = collab_init_std;
  c.seed = seed;
  return c;
}

RqVaeConfig RunConfig::rqvae_config() const {
  RqVaeConfig c = rqvae;
  c.seed = seed;
  return c;
}

GeneratorConfig RunConfig::generator_config() const {
  GeneratorConfig c = generator;
  c.seed = seed;
  return c;
}

SynthConfig RunConfig::synth_config() const {
  SynthConfig c = synth;
  c.seed = seed;
  return c;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.push_back(f.key);
  return out;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  find_field(key).set(cfg, value);
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) {
  return find_field(key).get(cfg);
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const Field& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    set_config_value(cfg, trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }
}

void validate_config(const RunConfig& cfg) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config: " + msg);
  };
  require(cfg.data_source == "synth" || cfg.data_source == "files",
          "data.source must be 'synth' or 'files'");
  if (cfg.data_source == "files") {
    require(!cfg.interactions.empty(), "data.interactions is required for data.source = files");
    require(!cfg.visual.empty() && !cfg.visual_ids.empty(), "data.visual and data.visual_ids are required");
    require(!cfg.text.empty() && !cfg.text_ids.empty(), "data.text and data.text_ids are required");
  }
  require(cfg.d > 0, "d must be positive");
  require(cfg.rqvae.M > 0, "rqvae.M must be positive");
  require(cfg.rqvae.K > 1, "rqvae.K must be at least 2");
  require(cfg.rqvae.h > 0 && cfg.rqvae.hidden > 0, "rqvae.h and rqvae.hidden must be positive");
  require(cfg.rqvae.lambda_q >= 0 && cfg.rqvae.lambda_d >= 0, "loss weights must be non-negative");
  require(cfg.rqvae.batch > 0 && cfg.collab_batch > 0 && cfg.generator.batch > 0,
          "batch sizes must be positive");
  require(cfg.generator.n_heads > 0 && cfg.generator.width % cfg.generator.n_heads == 0,
          "generator.width must be a multiple of generator.heads");
  require(cfg.generator.max_len == 0 || cfg.generator.max_len >= 2 * cfg.rqvae.M,
          "generator.max_len must hold at least one item and a target");
  require(!cfg.eval_ks.empty(), "eval.Ks must not be empty");
  const auto kmax = *std::max_element(cfg.eval_ks.begin(), cfg.eval_ks.end());
  require(std::find(cfg.eval_ks.begin(), cfg.eval_ks.end(), 0u) == cfg.eval_ks.end(),
          "eval.Ks entries must be positive");
  require(cfg.beam_width >= kmax, "decode.B must be at least the largest eval.Ks entry");
  require(cfg.ablation.use_collab || cfg.ablation.use_image || cfg.ablation.use_text,
          "at least one of ablation.use_collab/use_image/use_text must be true");
}

}  // namespace genrec
