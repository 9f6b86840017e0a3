#include "carpet/weights.hpp"

#include <cstring>
#include <fstream>
#include <numeric>

#include "carpet/error.hpp"
#include "carpet/image_io.hpp"

namespace carpet {

namespace {
constexpr const char* kFormat = "carpet-tensors-v1";
}

std::size_t ArchiveTensor::element_count() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

TensorArchive TensorArchive::load(const std::filesystem::path& manifest_path) {
  const auto manifest_bytes = read_file(manifest_path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(manifest_bytes.begin(), manifest_bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::WeightsNotLoaded, "manifest " + manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != kFormat) {
    throw Error(ErrorCode::WeightsNotLoaded, "unknown archive format in " + manifest_path.string());
  }
  const auto blob_path = manifest_path.parent_path() / manifest.at("data").get<std::string>();
  const auto blob = read_file(blob_path);
  if (blob.size() % sizeof(float) != 0) {
    throw Error(ErrorCode::WeightsNotLoaded, "blob size is not a multiple of 4: " + blob_path.string());
  }
  const std::size_t total = blob.size() / sizeof(float);

  TensorArchive archive;
  archive.metadata_ = manifest.value("metadata", nlohmann::json::object());
  for (const auto& entry : manifest.at("tensors")) {
    ArchiveTensor t;
    t.key = entry.at("key").get<std::string>();
    t.layer = entry.value("layer", "");
    t.shape = entry.at("shape").get<std::vector<int>>();
    const auto offset = entry.at("offset").get<std::size_t>();
    const auto count = t.element_count();
    if (offset + count > total) {
      throw Error(ErrorCode::WeightsNotLoaded, "tensor " + t.key + " runs past end of blob");
    }
    t.values.resize(count);
    std::memcpy(t.values.data(), blob.data() + offset * sizeof(float), count * sizeof(float));
    archive.tensors_.push_back(std::move(t));
  }
  return archive;
}

void TensorArchive::save(const std::filesystem::path& manifest_path) const {
  auto blob_name = manifest_path.stem().string() + ".bin";
  nlohmann::json manifest;
  manifest["format"] = kFormat;
  manifest["dtype"] = "float32-le";
  manifest["data"] = blob_name;
  manifest["metadata"] = metadata_;
  manifest["tensors"] = nlohmann::json::array();
  std::vector<std::uint8_t> blob;
  std::size_t offset = 0;
  for (const auto& t : tensors_) {
    manifest["tensors"].push_back({{"key", t.key}, {"layer", t.layer}, {"shape", t.shape}, {"offset", offset}});
    const auto* raw = reinterpret_cast<const std::uint8_t*>(t.values.data());
    blob.insert(blob.end(), raw, raw + t.values.size() * sizeof(float));
    offset += t.values.size();
  }
  write_file_atomic(manifest_path.parent_path() / blob_name, blob);
  const auto text = manifest.dump(2);
  write_file_atomic(manifest_path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void TensorArchive::add(ArchiveTensor tensor) {
  if (tensor.values.size() != tensor.element_count()) {
    throw Error(ErrorCode::ShapeMismatch, "tensor " + tensor.key + " value count does not match shape");
  }
  tensors_.push_back(std::move(tensor));
}

const ArchiveTensor* TensorArchive::find(std::string_view key) const {
  for (const auto& t : tensors_) {
    if (t.key == key) return &t;
  }
  return nullptr;
}

std::vector<const ArchiveTensor*> TensorArchive::for_layer(std::string_view layer) const {
  std::vector<const ArchiveTensor*> out;
  for (const auto& t : tensors_) {
    if (t.layer == layer) out.push_back(&t);
  }
  return out;
}

}  // namespace carpet
