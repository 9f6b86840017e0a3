#include "carpet/models.hpp"

#include <cstdlib>

namespace carpet {

std::string_view to_string(EncoderArchitecture arch) {
  return arch == EncoderArchitecture::Vgg19 ? "vgg19" : "vgg16";
}

EncoderArchitecture parse_architecture(std::string_view name) {
  if (name == "vgg16") return EncoderArchitecture::Vgg16;
  if (name == "vgg19") return EncoderArchitecture::Vgg19;
  throw Error(ErrorCode::InvalidConfig, "unknown encoder architecture " + std::string(name));
}

nn::Conv2d<float> conv_from_archive(const TensorArchive& archive, const std::string& layer, int stride, int pad) {
  const ArchiveTensor* weight = nullptr;
  const ArchiveTensor* bias = nullptr;
  for (const auto* t : archive.for_layer(layer)) {
    if (t->shape.size() == 4) weight = t;
    if (t->shape.size() == 1) bias = t;
  }
  if (!weight || !bias) throw Error(ErrorCode::WeightsNotLoaded, "archive lacks weight or bias for " + layer);
  const auto& s = weight->shape;
  if (s[2] != s[3] || bias->shape[0] != s[0]) throw Error(ErrorCode::WeightsNotLoaded, "bad tensor shapes for " + layer);
  nn::Conv2d<float> conv(s[1], s[0], s[2], stride, pad);
  conv.weight = Eigen::Map<const MatrixX<float>>(weight->values.data(), s[0], static_cast<Eigen::Index>(s[1]) * s[2] * s[3]);
  conv.bias = Eigen::Map<const VectorX<float>>(bias->values.data(), s[0]);
  return conv;
}

namespace detail {

EncoderLayout vgg_layout(EncoderArchitecture arch, int width_divisor) {
  if (width_divisor < 1) throw Error(ErrorCode::InvalidConfig, "width_divisor must be >= 1");
  const int blocks[5] = {64, 128, 256, 512, 512};
  const int depth16[5] = {2, 2, 3, 3, 3};
  const int depth19[5] = {2, 2, 4, 4, 4};
  const int* depth = arch == EncoderArchitecture::Vgg19 ? depth19 : depth16;
  EncoderLayout layout;
  int in = 3;
  for (int b = 0; b < 5; ++b) {
    const int width = std::max(1, blocks[b] / width_divisor);
    // The deepest tap is relu5_1, so block 5 stops after its first conv.
    const int convs = b == 4 ? 1 : depth[b];
    for (int i = 1; i <= convs; ++i) {
      const std::string suffix = std::to_string(b + 1) + "_" + std::to_string(i);
      layout.ops.push_back({OpKind::Conv, "conv" + suffix, static_cast<int>(layout.conv_channels.size())});
      layout.conv_channels.emplace_back(in, width);
      layout.ops.push_back({OpKind::Relu, "relu" + suffix});
      in = width;
    }
    if (b < 4) layout.ops.push_back({OpKind::Pool, "pool" + std::to_string(b + 1)});
  }
  return layout;
}

}  // namespace detail

std::optional<std::filesystem::path> model_dir_from_env() {
  const char* dir = std::getenv("MODEL_DIR");
  if (!dir || !*dir) return std::nullopt;
  return std::filesystem::path(dir);
}

ModelBundle load_models(const ModelOptions& options) {
  ModelBundle bundle;
  const auto dir = options.model_dir;
  const bool have_dir = !dir.empty();
  if (have_dir && !std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::WeightsNotLoaded, "model directory " + dir.string() + " does not exist");
  }
  std::shared_ptr<const Encoder<float>> encoder;
  if (have_dir && std::filesystem::exists(dir / "encoder.json")) {
    encoder = std::make_shared<const Encoder<float>>(Encoder<float>::from_archive(TensorArchive::load(dir / "encoder.json")));
    bundle.encoder_source = "archive:" + (dir / "encoder.json").string();
  } else {
    encoder = std::make_shared<const Encoder<float>>(
        Encoder<float>::synthetic(options.architecture, options.encoder_seed, options.width_divisor));
    bundle.encoder_source = "synthetic";
  }
  bundle.encoder = encoder;
  if (have_dir && std::filesystem::exists(dir / "decoder.json")) {
    bundle.decoder = std::make_shared<const NetworkDecoder<float>>(
        NetworkDecoder<float>::from_archive(TensorArchive::load(dir / "decoder.json")));
    bundle.decoder_source = "archive:" + (dir / "decoder.json").string();
  } else {
    bundle.decoder = std::make_shared<const InversionDecoder<float>>(encoder, options.inversion);
    bundle.decoder_source = "inversion";
  }
  bundle.embedder = std::make_shared<const StubEmbedder<float>>();
  bundle.embedder_source = "stub";
  return bundle;
}

}  // namespace carpet
