#include "unipaint/service/artifact_store.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <memory>

#include "unipaint/error.hpp"
#include "unipaint/image_io.hpp"

namespace unipaint::service {

namespace fs = std::filesystem;

namespace {

void require_safe_name(const std::string& name, const char* what) {
  const bool ok = !name.empty() && name.size() <= 128 &&
                  std::all_of(name.begin(), name.end(), [](char c) {
                    return std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_';
                  }) &&
                  name.front() != '.';
  if (!ok) throw Error(ErrorKind::InvalidInput, std::string("invalid ") + what + " '" + name + "'");
}

}  // namespace

std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::Io, "SHA-256 failed");
  }
  std::string hex;
  hex.reserve(len * 2);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

ArtifactStore::ArtifactStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_ / "artifacts");
  fs::create_directories(root_ / "index");
}

std::string ArtifactStore::put(const std::vector<std::uint8_t>& bytes, const std::string& ext) {
  require_safe_name(ext, "extension");
  const std::string name = sha256_hex(bytes) + "." + ext;
  const fs::path path = root_ / "artifacts" / name;
  if (!fs::exists(path)) write_file_atomic(path.string(), bytes);
  return name;
}

std::vector<std::uint8_t> ArtifactStore::get(const std::string& name) const {
  require_safe_name(name, "artifact name");
  const fs::path path = root_ / "artifacts" / name;
  if (!fs::exists(path)) throw Error(ErrorKind::NotFound, "artifact " + name + " not found");
  return read_file(path.string());
}

bool ArtifactStore::contains(const std::string& name) const {
  require_safe_name(name, "artifact name");
  return fs::exists(root_ / "artifacts" / name);
}

fs::path ArtifactStore::path_of(const std::string& name) const {
  require_safe_name(name, "artifact name");
  return root_ / "artifacts" / name;
}

void ArtifactStore::write_index(const std::string& kind, const std::string& id, const std::string& json_text) {
  require_safe_name(kind, "index kind");
  require_safe_name(id, "index id");
  const fs::path dir = root_ / "index" / kind;
  fs::create_directories(dir);
  write_file_atomic((dir / (id + ".json")).string(), json_text);
}

std::optional<std::string> ArtifactStore::read_index(const std::string& kind, const std::string& id) const {
  require_safe_name(kind, "index kind");
  require_safe_name(id, "index id");
  const fs::path path = root_ / "index" / kind / (id + ".json");
  if (!fs::exists(path)) return std::nullopt;
  const auto bytes = read_file(path.string());
  return std::string(bytes.begin(), bytes.end());
}

std::vector<std::string> ArtifactStore::list_index(const std::string& kind) const {
  require_safe_name(kind, "index kind");
  std::vector<std::string> ids;
  const fs::path dir = root_ / "index" / kind;
  if (!fs::exists(dir)) return ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") ids.push_back(entry.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace unipaint::service
