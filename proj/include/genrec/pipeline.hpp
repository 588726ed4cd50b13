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

// Pipeline stages over a run directory, parameter sweeps and run reports.

#ifndef GENREC_PIPELINE_HPP_
#define GENREC_PIPELINE_HPP_

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "genrec/artifacts.hpp"
#include "genrec/config.hpp"
#include "json.hpp"

namespace genrec {

// A stage that failed; the message names the stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage " + stage + " failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct PipelineOptions {
  bool force = false;
  std::ostream* log = nullptr;  // progress lines; null for silence
};

// Stage names accepted by run_stage, in pipeline order.
const std::vector<std::string>& stage_names();

// Stages run by run_pipeline for this configuration.
std::vector<std::string> pipeline_stages(const RunConfig& cfg);

// Runs one stage unless its manifest shows identical inputs and config.
// Returns false when the stage was skipped. Throws StageError.
bool run_stage(const std::string& stage, const RunConfig& cfg, const ArtifactStore& store,
               const PipelineOptions& opts = {});

// Validates the config, snapshots it to config.txt and runs every stage.
void run_pipeline(const RunConfig& cfg, const ArtifactStore& store,
                  const PipelineOptions& opts = {});

// Relative paths of the main artifacts.
inline constexpr const char* kMetricsFile = "metrics.json";
inline constexpr const char* kConfigFile = "config.txt";

nlohmann::json read_metrics(const std::filesystem::path& run_dir);

struct SweepRow {
  std::string value;
  bool ok = false;
  double hr10 = 0.0;
  double ndcg10 = 0.0;
  double perplexity = 0.0;
  std::string error;
};

struct SweepResult {
  std::string param;
  std::vector<SweepRow> rows;
};

// Maps M, K, lambda_q and lambda_d (or a full config key) to a config key;
// throws ConfigError for anything else.
std::string sweep_key(const std::string& param);

// Runs the pipeline once per value under <root>/sweep/<param>=<value> and
// writes sweep_<param>.csv and sweep_<param>.json to the root. A failing
// value is recorded and the sweep continues.
SweepResult run_sweep(const RunConfig& cfg, const std::string& param,
                      const std::vector<std::string>& values, const ArtifactStore& store,
                      const PipelineOptions& opts = {});

std::string sweep_csv(const SweepResult& r);
nlohmann::ordered_json sweep_json(const SweepResult& r);

struct ReportRow {
  std::string run;
  bool present = false;
  std::map<std::uint32_t, double> hr;
  std::map<std::uint32_t, double> ndcg;
};

struct Report {
  std::vector<std::uint32_t> ks;  // cutoffs present in every run
  std::vector<ReportRow> rows;
  std::vector<std::string> warnings;
};

Report build_report(const std::vector<std::filesystem::path>& run_dirs);
std::string report_table(const Report& r);
// Metrics per run plus deltas against the first run.
nlohmann::ordered_json report_json(const Report& r);

}  // namespace genrec

#endif  // GENREC_PIPELINE_HPP_
