#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace carpet {

struct ArchiveTensor {
  std::string key;
  std::string layer;
  std::vector<int> shape;
  std::vector<float> values;

  std::size_t element_count() const;
};

/// Serialized weights: a JSON manifest (key, layer, shape, offset per tensor,
/// plus free-form metadata) next to a raw little-endian float32 blob.
class TensorArchive {
 public:
  static TensorArchive load(const std::filesystem::path& manifest_path);

  /// Writes `<manifest_path>` and the blob named after its stem (`.bin`).
  void save(const std::filesystem::path& manifest_path) const;

  void add(ArchiveTensor tensor);
  const ArchiveTensor* find(std::string_view key) const;
  std::vector<const ArchiveTensor*> for_layer(std::string_view layer) const;
  const std::vector<ArchiveTensor>& tensors() const { return tensors_; }

  nlohmann::json& metadata() { return metadata_; }
  const nlohmann::json& metadata() const { return metadata_; }

 private:
  std::vector<ArchiveTensor> tensors_;
  nlohmann::json metadata_ = nlohmann::json::object();
};

}  // namespace carpet
