#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace unipaint::service {

std::string sha256_hex(const std::vector<std::uint8_t>& bytes);

/// Content-addressed blobs under <root>/artifacts/<sha256>.<ext> plus small
/// JSON index documents under <root>/index/<kind>/<id>.json. Every write goes
/// through a temporary file and a rename.
class ArtifactStore {
 public:
  explicit ArtifactStore(std::filesystem::path root);

  /// Returns the artifact name ("<sha256>.<ext>"); storing equal bytes twice
  /// is a no-op.
  std::string put(const std::vector<std::uint8_t>& bytes, const std::string& ext);
  std::vector<std::uint8_t> get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::filesystem::path path_of(const std::string& name) const;

  void write_index(const std::string& kind, const std::string& id, const std::string& json_text);
  std::optional<std::string> read_index(const std::string& kind, const std::string& id) const;
  std::vector<std::string> list_index(const std::string& kind) const;

  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
};

}  // namespace unipaint::service
