#pragma once

// Output directory handling: artifacts are staged as "<name>.partial" and
// renamed on commit; the manifest lists committed files with SHA-256 hashes.

#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "lichnerowicz/harness/field_io.hpp"

namespace lich::harness {

inline std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

struct ManifestEntry {
  std::string file;
  std::uint64_t bytes = 0;
  std::string sha256;
};

class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
  }

  const std::filesystem::path& directory() const { return dir_; }

  /// Writes "<name>.partial"; the final name appears only on commit().
  void stage(const std::string& name, const std::string& data) {
    if (staged_.count(name)) throw IoError("artifact staged twice: " + name);
    write_file(dir_ / (name + ".partial"), data);
    staged_[name] = sha256_hex(data);
    sizes_[name] = data.size();
  }

  std::vector<ManifestEntry> commit() {
    std::vector<ManifestEntry> manifest;
    for (const auto& [name, hash] : staged_) {
      std::error_code ec;
      std::filesystem::rename(dir_ / (name + ".partial"), dir_ / name, ec);
      if (ec) throw IoError("cannot finalize " + name + ": " + ec.message());
      manifest.push_back({name, sizes_[name], hash});
    }
    staged_.clear();
    return manifest;
  }

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::string> staged_;
  std::map<std::string, std::uint64_t> sizes_;
};

inline nlohmann::json manifest_json(const std::vector<ManifestEntry>& m) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : m) j.push_back({{"file", e.file}, {"bytes", e.bytes}, {"sha256", e.sha256}});
  return j;
}

/// Re-hashes every manifest entry of <dir>/report.json; returns one message
/// per missing or mismatching file (empty when the directory verifies).
inline std::vector<std::string> verify_manifest(const std::filesystem::path& dir) {
  const auto report = nlohmann::json::parse(read_file(dir / "report.json"), nullptr, false);
  if (report.is_discarded() || !report.contains("manifest") || !report["manifest"].is_array())
    return {"report.json: no manifest"};
  std::vector<std::string> problems;
  for (const auto& e : report["manifest"]) {
    const std::string name = e.value("file", "");
    const auto path = dir / name;
    if (name.empty() || !std::filesystem::exists(path)) {
      problems.push_back(name + ": missing");
      continue;
    }
    const std::string data = read_file(path);
    if (sha256_hex(data) != e.value("sha256", ""))
      problems.push_back(name + ": hash mismatch");
    else if (data.size() != e.value("bytes", std::uint64_t{0}))
      problems.push_back(name + ": size mismatch");
  }
  return problems;
}

}  // namespace lich::harness
