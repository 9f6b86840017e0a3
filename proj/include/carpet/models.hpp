#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "carpet/decoder.hpp"
#include "carpet/embedder.hpp"
#include "carpet/encoder.hpp"

namespace carpet {

struct ModelOptions {
  /// Directory holding encoder.json / decoder.json archives. When empty or
  /// missing the synthetic encoder and the inversion decoder are used.
  std::filesystem::path model_dir;
  EncoderArchitecture architecture = EncoderArchitecture::Vgg16;
  std::uint64_t encoder_seed = kSyntheticEncoderSeed;
  int width_divisor = 1;
  InversionSettings inversion;
};

/// Everything the transfer methods read. Immutable and shareable across jobs.
struct ModelBundle {
  std::shared_ptr<const Encoder<float>> encoder;
  std::shared_ptr<const Decoder<float>> decoder;
  std::shared_ptr<const Embedder<float>> embedder;
  std::string encoder_source;  // "archive:<path>" or "synthetic"
  std::string decoder_source;  // "archive:<path>" or "inversion"
  std::string embedder_source;
};

ModelBundle load_models(const ModelOptions& options);

/// MODEL_DIR from the environment, if set.
std::optional<std::filesystem::path> model_dir_from_env();

}  // namespace carpet
