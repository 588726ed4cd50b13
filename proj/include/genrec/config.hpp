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

// Run configuration: a flat `key = value` text format with dotted sections.

#ifndef GENREC_CONFIG_HPP_
#define GENREC_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "genrec/collab.hpp"
#include "genrec/dataset.hpp"
#include "genrec/decoder.hpp"
#include "genrec/fusion.hpp"
#include "genrec/generator.hpp"
#include "genrec/rqvae.hpp"

namespace genrec {

struct RunConfig {
  std::uint64_t seed = 42;
  std::uint32_t d = 768;

  // "synth" generates data in the run directory; "files" reads the paths below.
  std::string data_source = "synth";
  std::string interactions;
  std::string visual;
  std::string visual_ids;
  std::string text;
  std::string text_ids;
  std::uint32_t core_k = 5;  // 0 disables k-core filtering

  SynthConfig synth;

  std::uint32_t collab_layers = 3;
  double collab_lr = 30.0;
  std::uint32_t collab_epochs = 50;
  std::uint32_t collab_batch = 256;
  double collab_reg = 1e-4;
  double collab_init_std = 0.1;

  RqVaeConfig rqvae;
  GeneratorConfig generator;

  std::uint32_t beam_width = 30;
  bool exclude_seen = true;

  std::vector<std::uint32_t> eval_ks{10, 20};
  std::uint32_t cold_threshold = 5;

  FusionMode ablation;

  CollabConfig collab_config() const;
  RqVaeConfig rqvae_config() const;
  GeneratorConfig generator_config() const;
  SynthConfig synth_config() const;
};

// Every key in serialization order.
std::vector<std::string> config_keys();

// Sets one key from its text form. Throws ConfigError on an unknown key or
// an unparsable value.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);

// Lines of `key = value`; '#' starts a comment.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
std::string serialize_config(const RunConfig& cfg);

// Applies "key=value" overrides in order.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides);

// Range and consistency checks; throws ConfigError.
void validate_config(const RunConfig& cfg);

}  // namespace genrec

#endif  // GENREC_CONFIG_HPP_
