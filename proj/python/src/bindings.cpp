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


#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "genrec/config.hpp"
#include "genrec/dataset.hpp"
#include "genrec/emb_io.hpp"
#include "genrec/evaluation.hpp"
#include "genrec/pipeline.hpp"

namespace py = pybind11;

namespace {

genrec::RunConfig config_from(const std::string& text, const std::vector<std::string>& overrides) {
  genrec::RunConfig cfg = genrec::parse_config(text);
  genrec::apply_overrides(cfg, overrides);
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_genrec, m) {
  m.doc() = "Bindings for the genrec pipeline and utilities";

  auto base = py::register_exception<genrec::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<genrec::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<genrec::ParseError>(m, "ParseError", base.ptr());
  py::register_exception<genrec::EmptyDatasetError>(m, "EmptyDatasetError", base.ptr());
  py::register_exception<genrec::NumericError>(m, "NumericError", base.ptr());
  py::register_exception<genrec::StageError>(m, "StageError", base.ptr());

  m.def("default_config", [] { return genrec::serialize_config(genrec::RunConfig{}); },
        "Default configuration as key = value text.");
  m.def(
      "normalize_config",
      [](const std::string& text, const std::vector<std::string>& overrides) {
        const auto cfg = config_from(text, overrides);
        genrec::validate_config(cfg);
        return genrec::serialize_config(cfg);
      },
      py::arg("text") = "", py::arg("overrides") = std::vector<std::string>{},
      "Parses, applies key=value overrides, validates and re-serializes a configuration.");
  m.def("config_keys", &genrec::config_keys);

  m.def(
      "run_pipeline",
      [](const std::string& text, const std::filesystem::path& run_dir,
         const std::vector<std::string>& overrides, bool force) {
        const auto cfg = config_from(text, overrides);
        genrec::PipelineOptions opts;
        opts.force = force;
        {
          py::gil_scoped_release release;
          genrec::run_pipeline(cfg, genrec::ArtifactStore(run_dir), opts);
        }
        return genrec::read_metrics(run_dir).dump();
      },
      py::arg("config") = "", py::arg("run_dir"), py::arg("overrides") = std::vector<std::string>{},
      py::arg("force") = false, "Runs every stage and returns metrics.json as text.");
  m.def(
      "run_stage",
      [](const std::string& stage, const std::string& text, const std::filesystem::path& run_dir,
         const std::vector<std::string>& overrides, bool force) {
        const auto cfg = config_from(text, overrides);
        genrec::PipelineOptions opts;
        opts.force = force;
        py::gil_scoped_release release;
        return genrec::run_stage(stage, cfg, genrec::ArtifactStore(run_dir), opts);
      },
      py::arg("stage"), py::arg("config") = "", py::arg("run_dir"),
      py::arg("overrides") = std::vector<std::string>{}, py::arg("force") = false,
      "Runs one stage; returns False when it was up to date.");
  m.def("stage_names", &genrec::stage_names);

  m.def(
      "read_emb", [](const std::filesystem::path& p) { return genrec::read_emb(p); },
      "Reads an EMB matrix as a float64 array.");
  m.def(
      "write_emb",
      [](const std::filesystem::path& p, const genrec::Mat& mat) { genrec::write_emb(p, mat); },
      "Writes a 2-D array as an EMB matrix (stored as float32).");

  m.def("hit_rate", &genrec::hit_rate, py::arg("ranked"), py::arg("target"), py::arg("k"));
  m.def("ndcg", &genrec::ndcg, py::arg("ranked"), py::arg("target"), py::arg("k"));
  m.def("sha256_hex", [](const py::bytes& b) { return genrec::sha256_hex(std::string(b)); });
  m.def(
      "dataset_stats",
      [](std::uint64_t users, std::uint64_t items, std::uint64_t interactions) {
        return genrec::stats_to_json(genrec::compute_stats(users, items, interactions));
      },
      "Stats JSON for the given counts.");
}
