#pragma once

#include <memory>
#include <string>

#include "carpet/encoder.hpp"
#include "carpet/progress.hpp"

namespace carpet {

/// Maps features at one encoder tap back to pixels.
template <typename Scalar>
class Decoder {
 public:
  virtual ~Decoder() = default;
  virtual const std::string& layer() const = 0;
  virtual Image<Scalar> decode(const FeatureMap<Scalar>& feat, const IterationObserver* observer = nullptr) const = 0;
  /// Relative cost used for progress accounting.
  virtual int work_units() const { return 1; }

 protected:
  void require_layer(const FeatureMap<Scalar>& feat) const {
    if (feat.layer != layer()) {
      throw Error(ErrorCode::WrongLayer, "decoder expects " + layer() + ", got " + feat.layer);
    }
  }
};

struct InversionSettings {
  std::string layer = "conv4_1";
  int iterations = 150;
  double step_size = 0.05;
};

/// Inverts features by optimizing pixels so the encoder reproduces them
/// (least squares at the tap), starting from mid-gray. Deterministic.
template <typename Scalar>
class InversionDecoder final : public Decoder<Scalar> {
 public:
  InversionDecoder(std::shared_ptr<const Encoder<Scalar>> encoder, InversionSettings settings = {})
      : encoder_(std::move(encoder)), settings_(std::move(settings)) {
    if (!encoder_ || !encoder_->loaded()) throw Error(ErrorCode::WeightsNotLoaded, "inversion needs an encoder");
    if (!Encoder<Scalar>::is_tap(settings_.layer)) throw Error(ErrorCode::UnknownLayer, settings_.layer);
  }

  const std::string& layer() const override { return settings_.layer; }
  int work_units() const override { return std::max(1, settings_.iterations); }
  const InversionSettings& settings() const { return settings_; }

  Image<Scalar> decode(const FeatureMap<Scalar>& feat, const IterationObserver* observer = nullptr) const override {
    this->require_layer(feat);
    const int factor = encoder_->downsample_factor(settings_.layer);
    const int h = feat.height() * factor;
    const int w = feat.width() * factor;
    if (feat.channels() != encoder_->channels(settings_.layer)) {
      throw Error(ErrorCode::ShapeMismatch, "feature channels do not match the encoder");
    }
    Tensor3<Scalar> x = Tensor3<Scalar>::constant(3, h, w, Scalar(0.5));
    Tensor3<Scalar> grad;
    nn::Adam<Scalar> adam(settings_.step_size);
    const std::vector<std::string> layers = {settings_.layer};
    const Scalar scale = Scalar(1) / static_cast<Scalar>(feat.values.data.size());
    for (int it = 0; it < settings_.iterations; ++it) {
      const auto tape = encoder_->forward(x, layers);
      Tensor3<Scalar> diff = encoder_->activation(tape, settings_.layer);
      diff.data -= feat.values.data;
      const double loss = 0.5 * static_cast<double>(scale) * static_cast<double>(diff.data.squaredNorm());
      diff.data *= scale;
      grad = encoder_->backward(tape, {{settings_.layer, diff}});
      adam.step({{x.data.data(), grad.data.data(), x.data.size()}});
      x.data = x.data.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
      notify(observer, {"decode", it, settings_.iterations, loss, nullptr});
    }
    return Image<Scalar>::clamped(std::move(x));
  }

 private:
  std::shared_ptr<const Encoder<Scalar>> encoder_;
  InversionSettings settings_;
};

/// Feed-forward decoder read from an archive whose metadata lists
/// "layer" (the tap it inverts) and "ops": [{"op": "conv", "layer": name,
/// "stride": s, "pad": p} | {"op": "relu"} | {"op": "upsample"}].
template <typename Scalar>
class NetworkDecoder final : public Decoder<Scalar> {
 public:
  static NetworkDecoder from_archive(const TensorArchive& archive) {
    NetworkDecoder d;
    const auto& meta = archive.metadata();
    d.layer_ = meta.value("layer", std::string("conv4_1"));
    if (!meta.contains("ops")) throw Error(ErrorCode::WeightsNotLoaded, "decoder manifest lacks ops");
    for (const auto& op : meta.at("ops")) {
      const auto kind = op.at("op").get<std::string>();
      Step step;
      if (kind == "conv") {
        step.kind = StepKind::Conv;
        step.conv = conv_from_archive(archive, op.at("layer").get<std::string>(), op.value("stride", 1),
                                      op.value("pad", 1))
                        .template cast<Scalar>();
      } else if (kind == "relu") {
        step.kind = StepKind::Relu;
      } else if (kind == "upsample") {
        step.kind = StepKind::Upsample;
      } else {
        throw Error(ErrorCode::WeightsNotLoaded, "unknown decoder op " + kind);
      }
      d.steps_.push_back(std::move(step));
    }
    return d;
  }

  const std::string& layer() const override { return layer_; }

  Image<Scalar> decode(const FeatureMap<Scalar>& feat, const IterationObserver* = nullptr) const override {
    this->require_layer(feat);
    Tensor3<Scalar> x = feat.values;
    for (const auto& step : steps_) {
      switch (step.kind) {
        case StepKind::Conv: x = step.conv.forward(x); break;
        case StepKind::Relu: x = nn::relu(std::move(x)); break;
        case StepKind::Upsample: x = nn::upsample_nearest(x, x.height * 2, x.width * 2); break;
      }
    }
    if (x.channels() != 3) throw Error(ErrorCode::ShapeMismatch, "decoder does not end in 3 channels");
    x.data = x.data.unaryExpr([](Scalar v) { return std::isfinite(v) ? v : Scalar(0); });
    return Image<Scalar>::clamped(std::move(x));
  }

 private:
  enum class StepKind { Conv, Relu, Upsample };
  struct Step {
    StepKind kind = StepKind::Relu;
    nn::Conv2d<Scalar> conv;
  };

  std::string layer_;
  std::vector<Step> steps_;
};

}  // namespace carpet
