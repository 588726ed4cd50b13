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


#include "genrec/artifacts.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>

#include "genrec/types.hpp"
#include "json.hpp"

namespace genrec {

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw Error("sha256: digest initialization failed");
    }
  }
  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw Error("sha256: update failed");
  }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), md.data(), &len) != 1) throw Error("sha256: final failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out += kHex[md[i] >> 4];
      out += kHex[md[i] & 15];
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, void (*)(EVP_MD_CTX*)> ctx_;
};

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing artifact " + path.string());
  Sha256 h;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

ArtifactStore::ArtifactStore(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_);
}

std::filesystem::path ArtifactStore::manifest_path(const std::string& stage) const {
  return root_ / "manifests" / (stage + ".json");
}

std::map<std::string, std::string> ArtifactStore::hash_files(
    const std::vector<std::string>& rel) const {
  std::map<std::string, std::string> out;
  for (const std::string& r : rel) {
    const auto p = path(r);
    if (std::filesystem::is_directory(p)) {
      for (const auto& e : std::filesystem::recursive_directory_iterator(p)) {
        if (!e.is_regular_file()) continue;
        const auto sub = (std::filesystem::path(r) / e.path().lexically_relative(p)).generic_string();
        out[sub] = sha256_file(e.path());
      }
    } else {
      out[r] = sha256_file(p);
    }
  }
  return out;
}

bool ArtifactStore::up_to_date(const std::string& stage, const std::string& config_hash,
                               const std::vector<std::string>& inputs) const {
  if (!std::filesystem::exists(manifest_path(stage))) return false;
  StageManifest m;
  try {
    m = read_manifest(stage);
  } catch (const std::exception&) {
    return false;
  }
  if (m.config_hash != config_hash) return false;
  for (const std::string& r : inputs) {
    if (!std::filesystem::exists(path(r))) return false;
  }
  if (hash_files(inputs) != m.inputs) return false;
  for (const auto& [rel, hash] : m.outputs) {
    if (!std::filesystem::exists(path(rel)) || sha256_file(path(rel)) != hash) return false;
  }
  return true;
}

void ArtifactStore::write_manifest(const std::string& stage, const std::string& config_hash,
                                   const std::vector<std::string>& inputs,
                                   const std::vector<std::string>& outputs) const {
  nlohmann::ordered_json j;
  j["stage"] = stage;
  j["config_hash"] = config_hash;
  j["inputs"] = hash_files(inputs);
  j["outputs"] = hash_files(outputs);
  std::filesystem::create_directories(manifest_path(stage).parent_path());
  std::ofstream out(manifest_path(stage), std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw Error("cannot write manifest for stage " + stage);
}

StageManifest ArtifactStore::read_manifest(const std::string& stage) const {
  std::ifstream in(manifest_path(stage));
  if (!in) throw Error("no manifest for stage " + stage);
  const auto j = nlohmann::json::parse(in);
  StageManifest m;
  m.stage = j.at("stage").get<std::string>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
  m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
  return m;
}

void ArtifactStore::log_timing(const std::string& stage, double seconds) const {
  std::ofstream out(root_ / "timing.log", std::ios::app);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", seconds);
  out << stage << '\t' << buf << '\n';
}

std::filesystem::path resolve_run_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("CEMG_RUN_DIR"); env != nullptr && *env != '\0') return env;
  return "runs/default";
}

}  // namespace genrec
