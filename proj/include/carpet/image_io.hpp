#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "carpet/image.hpp"

namespace carpet {

enum class MediaType { Png, Jpeg };

std::string_view mime_type(MediaType type);

/// Identifies PNG/JPEG by magic bytes; nullopt for anything else.
std::optional<MediaType> sniff_media_type(std::span<const std::uint8_t> bytes);

/// Decodes 8-bit PNG or JPEG bytes into an RGB image scaled by 1/255.
/// Grayscale sources are replicated to three channels; alpha is discarded.
ImageTensor decode_image(std::span<const std::uint8_t> bytes);

ImageTensor load_image(const std::filesystem::path& path);

/// 8-bit RGB PNG, values rounded to the nearest level.
std::vector<std::uint8_t> encode_png(const ImageTensor& img);

/// Writes via a temporary sibling file and rename, so readers never see a
/// partially written PNG.
void save_png(const ImageTensor& img, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace carpet
