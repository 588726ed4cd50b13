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

// Run directory layout and per-stage manifests of content hashes.

#ifndef GENREC_ARTIFACTS_HPP_
#define GENREC_ARTIFACTS_HPP_

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace genrec {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

struct StageManifest {
  std::string stage;
  std::string config_hash;
  std::map<std::string, std::string> inputs;   // run-relative path -> sha256
  std::map<std::string, std::string> outputs;  // run-relative path -> sha256
};

class ArtifactStore {
 public:
  explicit ArtifactStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path path(const std::string& rel) const { return root_ / rel; }
  std::filesystem::path manifest_path(const std::string& stage) const;

  // Hashes of the given run-relative files; directories expand to every file
  // below them. Throws Error naming a missing file.
  std::map<std::string, std::string> hash_files(const std::vector<std::string>& rel) const;

  // True when the stage's manifest records the same config hash and input
  // hashes, and every recorded output still exists with its recorded hash.
  bool up_to_date(const std::string& stage, const std::string& config_hash,
                  const std::vector<std::string>& inputs) const;

  void write_manifest(const std::string& stage, const std::string& config_hash,
                      const std::vector<std::string>& inputs,
                      const std::vector<std::string>& outputs) const;
  StageManifest read_manifest(const std::string& stage) const;

  // Appends "<stage>\t<seconds>" to timing.log.
  void log_timing(const std::string& stage, double seconds) const;

 private:
  std::filesystem::path root_;
};

// Resolves the run directory: explicit flag, else CEMG_RUN_DIR, else "runs/default".
std::filesystem::path resolve_run_dir(const std::string& flag);

}  // namespace genrec

#endif  // GENREC_ARTIFACTS_HPP_
