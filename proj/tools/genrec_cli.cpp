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


// Command-line driver for the pipeline stages.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 stage failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "genrec/artifacts.hpp"
#include "genrec/config.hpp"
#include "genrec/pipeline.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string run_dir;
  bool force = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "Config file of key = value lines");
  cmd->add_option("-s,--set", c.overrides, "Override a config key (key=value); repeatable");
  cmd->add_option("-r,--run-dir", c.run_dir, "Run directory (default: $CEMG_RUN_DIR or runs/default)");
  cmd->add_flag("-f,--force", c.force, "Re-run stages even when their inputs are unchanged");
  cmd->add_flag("-q,--quiet", c.quiet, "Suppress progress output");
}

// Explicit file, else the run directory's snapshot, else defaults; then overrides.
genrec::RunConfig resolve_config(const Common& c, const std::filesystem::path& run_dir) {
  genrec::RunConfig cfg;
  if (!c.config.empty()) {
    cfg = genrec::load_config(c.config);
  } else if (std::filesystem::exists(run_dir / genrec::kConfigFile)) {
    cfg = genrec::load_config(run_dir / genrec::kConfigFile);
  }
  genrec::apply_overrides(cfg, c.overrides);
  genrec::validate_config(cfg);
  return cfg;
}

genrec::PipelineOptions options(const Common& c) {
  genrec::PipelineOptions o;
  o.force = c.force;
  o.log = c.quiet ? nullptr : &std::cerr;
  return o;
}

std::vector<std::string> split_values(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const std::string& r : raw) {
    std::stringstream ss(r);
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (!part.empty()) out.push_back(part);
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generative recommendation with collaborative multimodal semantic ids"};
  app.require_subcommand(1);

  Common common;
  std::vector<std::pair<std::string, CLI::App*>> stage_cmds;
  const std::vector<std::pair<std::string, std::string>> stage_help{
      {"synth", "Generate a synthetic interaction log and item features"},
      {"prepare", "Filter, split and align the interaction log and item features"},
      {"train-collab", "Train collaborative item embeddings on the interaction graph"},
      {"fuse", "Reduce modality features and build the fusion inputs"},
      {"train-tokenizer", "Train the residual quantizer jointly with the fusion attention"},
      {"assign-ids", "Assign a unique semantic id to every item"},
      {"train-generator", "Train the sequence model on semantic-id histories"},
      {"recommend", "Decode top-K recommendations for every user"},
      {"evaluate", "Score recommendations and write metrics.json"}};
  for (const auto& [name, help] : stage_help) {
    CLI::App* cmd = app.add_subcommand(name, help);
    add_common(cmd, common);
    stage_cmds.emplace_back(name, cmd);
  }

  CLI::App* pipeline = app.add_subcommand("pipeline", "Run every stage in order");
  add_common(pipeline, common);

  CLI::App* sweep = app.add_subcommand("sweep", "Run the pipeline once per parameter value");
  add_common(sweep, common);
  std::string sweep_param;
  std::vector<std::string> sweep_values;
  sweep->add_option("-p,--param", sweep_param, "One of M, K, lambda_q, lambda_d")->required();
  sweep->add_option("-v,--values", sweep_values, "Values, comma- or space-separated");

  CLI::App* show = app.add_subcommand("config", "Print the effective configuration");
  add_common(show, common);

  CLI::App* report = app.add_subcommand("report", "Compare metrics across run directories");
  std::vector<std::string> report_dirs;
  std::string report_out;
  report->add_option("runs", report_dirs, "Run directories; the first is the baseline")->required();
  report->add_option("-o,--json", report_out, "Write the comparison JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (report->parsed()) {
      std::vector<std::filesystem::path> dirs(report_dirs.begin(), report_dirs.end());
      const genrec::Report rep = genrec::build_report(dirs);
      for (const std::string& w : rep.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << genrec::report_table(rep);
      if (!report_out.empty()) {
        std::ofstream out(report_out, std::ios::trunc);
        out << genrec::report_json(rep).dump(2) << '\n';
      }
      return 0;
    }

    const std::filesystem::path run_dir = genrec::resolve_run_dir(common.run_dir);
    genrec::RunConfig cfg;
    try {
      cfg = resolve_config(common, run_dir);
    } catch (const genrec::ConfigError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitConfig;
    }
    if (show->parsed()) {
      std::cout << genrec::serialize_config(cfg);
      return 0;
    }
    const genrec::ArtifactStore store(run_dir);

    if (pipeline->parsed()) {
      genrec::run_pipeline(cfg, store, options(common));
      std::cout << (run_dir / genrec::kMetricsFile).string() << '\n';
      return 0;
    }
    if (sweep->parsed()) {
      const auto values = split_values(sweep_values);
      genrec::SweepResult r;
      try {
        genrec::sweep_key(sweep_param);
        if (values.empty()) throw genrec::ConfigError("sweep: no values given");
        r = genrec::run_sweep(cfg, sweep_param, values, store, options(common));
      } catch (const genrec::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
      }
      std::cout << genrec::sweep_csv(r);
      for (const auto& row : r.rows) {
        if (!row.ok) return kExitStage;
      }
      return 0;
    }
    for (const auto& [name, cmd] : stage_cmds) {
      if (!cmd->parsed()) continue;
      if (!std::filesystem::exists(store.path(genrec::kConfigFile))) {
        std::ofstream(store.path(genrec::kConfigFile)) << genrec::serialize_config(cfg);
      }
      genrec::run_stage(name, cfg, store, options(common));
      return 0;
    }
  } catch (const genrec::StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  } catch (const genrec::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  }
  return 0;
}
