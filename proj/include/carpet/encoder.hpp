#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "carpet/image.hpp"
#include "carpet/nn.hpp"
#include "carpet/weights.hpp"

namespace carpet {

/// Activations of one encoder tap.
template <typename Scalar>
struct FeatureMap {
  Tensor3<Scalar> values;
  std::string layer;

  int channels() const { return values.channels(); }
  int height() const { return values.height; }
  int width() const { return values.width; }
};

template <typename Scalar>
using FeatureSet = std::map<std::string, FeatureMap<Scalar>>;

enum class EncoderArchitecture { Vgg16, Vgg19 };

std::string_view to_string(EncoderArchitecture arch);
EncoderArchitecture parse_architecture(std::string_view name);

/// Seed used for synthetic encoder weights when no archive is configured.
inline constexpr std::uint64_t kSyntheticEncoderSeed = 0x5eedc0de2023ULL;

/// Builds a Conv2d from the archive tensors tagged with `layer` (one 4-D
/// weight, one 1-D bias).
nn::Conv2d<float> conv_from_archive(const TensorArchive& archive, const std::string& layer, int stride, int pad);

namespace detail {

enum class OpKind { Conv, Relu, Pool };

struct EncoderOp {
  OpKind kind;
  std::string name;
  int conv = -1;  // index into the conv list for Conv ops
};

struct EncoderLayout {
  std::vector<EncoderOp> ops;
  std::vector<std::pair<int, int>> conv_channels;  // (in, out)
};

EncoderLayout vgg_layout(EncoderArchitecture arch, int width_divisor);

}  // namespace detail

/// VGG-style convolutional encoder with named taps relu1_1 ... relu5_1 and
/// conv4_1. Input normalization happens inside, so callers pass [0,1] pixels.
/// Read-only after construction; safe to share across threads.
template <typename Scalar>
class Encoder {
 public:
  /// Forward activations kept for a backward pass.
  struct Tape {
    Tensor3<Scalar> input;                  // normalized pixels
    std::vector<Tensor3<Scalar>> outputs;   // one per executed op
    std::map<int, std::vector<int>> pool_argmax;

    int executed() const { return static_cast<int>(outputs.size()); }
  };

  Encoder() = default;

  static const std::vector<std::string>& tap_layers() {
    static const std::vector<std::string> taps = {"relu1_1", "relu2_1", "relu3_1", "relu4_1", "relu5_1", "conv4_1"};
    return taps;
  }

  static bool is_tap(std::string_view layer) {
    const auto& taps = tap_layers();
    return std::find(taps.begin(), taps.end(), layer) != taps.end();
  }

  /// Deterministic He-initialized weights. `width_divisor` shrinks every
  /// channel count, which tests use to keep runs cheap.
  static Encoder synthetic(EncoderArchitecture arch, std::uint64_t seed = kSyntheticEncoderSeed,
                           int width_divisor = 1) {
    Encoder e;
    e.arch_ = arch;
    e.layout_ = detail::vgg_layout(arch, width_divisor);
    std::mt19937_64 rng(seed);
    for (const auto& [in, out] : e.layout_.conv_channels) {
      nn::Conv2d<double> conv(in, out, 3, 1, 1);
      conv.init_he(rng);
      e.convs_.push_back(conv.template cast<Scalar>());
    }
    e.loaded_ = true;
    return e;
  }

  /// Loads the convolutions named conv{b}_{i} up to the deepest tap. The
  /// manifest metadata may carry "architecture", "input_mean", "input_std".
  static Encoder from_archive(const TensorArchive& archive) {
    Encoder e;
    const auto& meta = archive.metadata();
    e.arch_ = parse_architecture(meta.value("architecture", std::string("vgg16")));
    e.layout_ = detail::vgg_layout(e.arch_, 1);
    for (const auto& op : e.layout_.ops) {
      if (op.kind != detail::OpKind::Conv) continue;
      auto conv = conv_from_archive(archive, op.name, 1, 1);
      const auto [in, out] = e.layout_.conv_channels[static_cast<std::size_t>(op.conv)];
      if (conv.in_channels() != in || conv.out_channels() != out) {
        throw Error(ErrorCode::WeightsNotLoaded, "layer " + op.name + " has unexpected shape");
      }
      e.convs_.push_back(conv.template cast<Scalar>());
    }
    if (meta.contains("input_mean")) e.mean_ = meta["input_mean"].get<std::array<double, 3>>();
    if (meta.contains("input_std")) e.std_ = meta["input_std"].get<std::array<double, 3>>();
    e.loaded_ = true;
    return e;
  }

  /// Inverse of from_archive (full-width layouts only). Keys are
  /// "<conv name>.weight" (out, in, 3, 3) and "<conv name>.bias".
  TensorArchive to_archive() const {
    require_loaded();
    TensorArchive archive;
    archive.metadata()["architecture"] = std::string(to_string(arch_));
    archive.metadata()["input_mean"] = mean_;
    archive.metadata()["input_std"] = std_;
    for (const auto& op : layout_.ops) {
      if (op.kind != detail::OpKind::Conv) continue;
      const auto& conv = convs_[static_cast<std::size_t>(op.conv)];
      const MatrixX<float> w = conv.weight.template cast<float>();
      const VectorX<float> b = conv.bias.template cast<float>();
      archive.add({op.name + ".weight", op.name, {conv.out_channels(), conv.in_channels(), conv.kernel(), conv.kernel()},
                   std::vector<float>(w.data(), w.data() + w.size())});
      archive.add({op.name + ".bias", op.name, {conv.out_channels()}, std::vector<float>(b.data(), b.data() + b.size())});
    }
    return archive;
  }

  bool loaded() const { return loaded_; }
  EncoderArchitecture architecture() const { return arch_; }

  /// Spatial reduction of a tap relative to the input (1, 2, 4, 8, 16).
  int downsample_factor(std::string_view layer) const {
    const int idx = op_index(layer);
    int factor = 1;
    for (int i = 0; i < idx; ++i) {
      if (layout_.ops[static_cast<std::size_t>(i)].kind == detail::OpKind::Pool) factor *= 2;
    }
    return factor;
  }

  int channels(std::string_view layer) const {
    const int idx = op_index(layer);
    for (int i = idx; i >= 0; --i) {
      const auto& op = layout_.ops[static_cast<std::size_t>(i)];
      if (op.kind == detail::OpKind::Conv) return layout_.conv_channels[static_cast<std::size_t>(op.conv)].second;
    }
    return 3;
  }

  /// Runs the encoder up to the deepest of `layers`, recording activations.
  Tape forward(const Tensor3<Scalar>& pixels, const std::vector<std::string>& layers) const {
    require_loaded();
    if (pixels.channels() != 3) throw Error(ErrorCode::ShapeMismatch, "encoder expects RGB input");
    int last = -1;
    for (const auto& l : layers) last = std::max(last, op_index(l));
    Tape tape;
    tape.input = pixels;
    for (int c = 0; c < 3; ++c) {
      tape.input.data.row(c) = (pixels.data.row(c).array() - static_cast<Scalar>(mean_[c])) /
                               static_cast<Scalar>(std_[c]);
    }
    tape.outputs.reserve(static_cast<std::size_t>(last + 1));
    for (int i = 0; i <= last; ++i) {
      const auto& op = layout_.ops[static_cast<std::size_t>(i)];
      const Tensor3<Scalar>& in = i == 0 ? tape.input : tape.outputs.back();
      switch (op.kind) {
        case detail::OpKind::Conv:
          tape.outputs.push_back(convs_[static_cast<std::size_t>(op.conv)].forward(in));
          break;
        case detail::OpKind::Relu:
          tape.outputs.push_back(nn::relu(in));
          break;
        case detail::OpKind::Pool: {
          auto pooled = nn::max_pool2(in);
          if (pooled.output.height < 1 || pooled.output.width < 1) {
            throw Error(ErrorCode::InvalidDimensions, "input too small for layer " + op.name);
          }
          tape.pool_argmax.emplace(i, std::move(pooled.argmax));
          tape.outputs.push_back(std::move(pooled.output));
          break;
        }
      }
    }
    return tape;
  }

  const Tensor3<Scalar>& activation(const Tape& tape, std::string_view layer) const {
    const int idx = op_index(layer);
    if (idx >= tape.executed()) throw Error(ErrorCode::UnknownLayer, std::string(layer) + " was not computed");
    return tape.outputs[static_cast<std::size_t>(idx)];
  }

  /// Gradient of a scalar loss w.r.t. the [0,1] pixels, given the loss
  /// gradient at each tapped layer.
  Tensor3<Scalar> backward(const Tape& tape, const std::map<std::string, Tensor3<Scalar>>& layer_grads) const {
    require_loaded();
    std::map<int, const Tensor3<Scalar>*> at_op;
    int start = -1;
    for (const auto& [layer, g] : layer_grads) {
      const int idx = op_index(layer);
      if (idx >= tape.executed()) throw Error(ErrorCode::UnknownLayer, layer + " not in tape");
      if (!g.same_shape(tape.outputs[static_cast<std::size_t>(idx)])) {
        throw Error(ErrorCode::ShapeMismatch, "gradient for " + layer + " has wrong shape");
      }
      at_op[idx] = &g;
      start = std::max(start, idx);
    }
    if (start < 0) return Tensor3<Scalar>(3, tape.input.height, tape.input.width);

    Tensor3<Scalar> grad = *at_op[start];
    for (int i = start; i >= 0; --i) {
      if (i != start) {
        if (auto it = at_op.find(i); it != at_op.end()) grad.data += it->second->data;
      }
      const auto& op = layout_.ops[static_cast<std::size_t>(i)];
      const Tensor3<Scalar>& in = i == 0 ? tape.input : tape.outputs[static_cast<std::size_t>(i - 1)];
      switch (op.kind) {
        case detail::OpKind::Conv:
          grad = convs_[static_cast<std::size_t>(op.conv)].backward(in, grad, nullptr);
          break;
        case detail::OpKind::Relu:
          grad = nn::relu_backward(tape.outputs[static_cast<std::size_t>(i)], std::move(grad));
          break;
        case detail::OpKind::Pool:
          grad = nn::max_pool2_backward(tape.pool_argmax.at(i), grad, in.height, in.width);
          break;
      }
    }
    for (int c = 0; c < 3; ++c) grad.data.row(c) /= static_cast<Scalar>(std_[c]);
    return grad;
  }

  /// Features at each requested tap. Throws UnknownLayer for undeclared taps.
  FeatureSet<Scalar> encode(const Image<Scalar>& img, const std::vector<std::string>& layers) const {
    return encode_pixels(img.tensor(), layers);
  }

  FeatureSet<Scalar> encode_pixels(const Tensor3<Scalar>& pixels, const std::vector<std::string>& layers) const {
    const auto tape = forward(pixels, layers);
    FeatureSet<Scalar> out;
    for (const auto& l : layers) out[l] = FeatureMap<Scalar>{activation(tape, l), l};
    return out;
  }

  template <typename Other>
  Encoder<Other> cast() const {
    Encoder<Other> e;
    e.arch_ = arch_;
    e.layout_ = layout_;
    e.mean_ = mean_;
    e.std_ = std_;
    e.loaded_ = loaded_;
    for (const auto& c : convs_) e.convs_.push_back(c.template cast<Other>());
    return e;
  }

 private:
  template <typename>
  friend class Encoder;

  void require_loaded() const {
    if (!loaded_) throw Error(ErrorCode::WeightsNotLoaded, "encoder has no weights");
  }

  int op_index(std::string_view layer) const {
    if (!is_tap(layer)) throw Error(ErrorCode::UnknownLayer, std::string(layer));
    require_loaded();
    for (std::size_t i = 0; i < layout_.ops.size(); ++i) {
      if (layout_.ops[i].name == layer) return static_cast<int>(i);
    }
    throw Error(ErrorCode::UnknownLayer, std::string(layer));
  }

  EncoderArchitecture arch_ = EncoderArchitecture::Vgg16;
  detail::EncoderLayout layout_;
  std::vector<nn::Conv2d<Scalar>> convs_;
  std::array<double, 3> mean_ = {0.485, 0.456, 0.406};
  std::array<double, 3> std_ = {0.229, 0.224, 0.225};
  bool loaded_ = false;
};

}  // namespace carpet
