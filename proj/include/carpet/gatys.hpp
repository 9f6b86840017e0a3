#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "carpet/encoder.hpp"
#include "carpet/image_optimizer.hpp"

namespace carpet {

/// Raw channel inner products of one feature map (C x C). Normalization is
/// applied by the losses, not here.
template <typename Scalar>
struct GramMatrix {
  MatrixX<Scalar> data;
  std::string layer;
};

/// G = F F^T via a symmetric rank update; the upper triangle is mirrored from
/// the lower one so G equals its transpose bit for bit.
template <typename Scalar>
MatrixX<Scalar> gram_of(const MatrixX<Scalar>& features) {
  MatrixX<Scalar> g = MatrixX<Scalar>::Zero(features.rows(), features.rows());
  g.template selfadjointView<Eigen::Lower>().rankUpdate(features);
  g.template triangularView<Eigen::StrictlyUpper>() = g.transpose();
  return g;
}

template <typename Scalar>
GramMatrix<Scalar> gram_matrix(const FeatureMap<Scalar>& feat) {
  return {gram_of(feat.values.data), feat.layer};
}

namespace detail {

template <typename Scalar>
void require_same_shape(const FeatureMap<Scalar>& a, const FeatureMap<Scalar>& b) {
  if (a.layer != b.layer || !a.values.same_shape(b.values)) {
    throw Error(ErrorCode::ShapeMismatch, "feature maps differ (" + a.layer + " vs " + b.layer + ")");
  }
}

template <typename Map>
void require_same_layers(const Map& a, const Map& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::LayerSetMismatch, "different number of layers");
  for (const auto& [layer, _] : a) {
    if (!b.count(layer)) throw Error(ErrorCode::LayerSetMismatch, "layer " + layer + " missing");
  }
}

}  // namespace detail

/// 1/2 * sum (F_content - F_output)^2.
template <typename Scalar>
Scalar content_loss(const FeatureMap<Scalar>& content, const FeatureMap<Scalar>& output) {
  detail::require_same_shape(content, output);
  return Scalar(0.5) * (content.values.data - output.values.data).squaredNorm();
}

/// d content_loss / d F_output.
template <typename Scalar>
Tensor3<Scalar> content_loss_gradient(const FeatureMap<Scalar>& content, const FeatureMap<Scalar>& output) {
  detail::require_same_shape(content, output);
  Tensor3<Scalar> g = output.values;
  g.data -= content.values.data;
  return g;
}

/// 1 / (4 C^2 (H W)^2), with H W taken from the output features.
template <typename Scalar>
Scalar style_layer_weight(const FeatureMap<Scalar>& output) {
  const double c = output.channels();
  const double n = output.values.pixels();
  return static_cast<Scalar>(1.0 / (4.0 * c * c * n * n));
}

/// One layer's term of the Gram style loss against a precomputed style Gram.
template <typename Scalar>
Scalar style_layer_loss(const GramMatrix<Scalar>& style_gram, const FeatureMap<Scalar>& output) {
  if (style_gram.data.rows() != output.channels()) {
    throw Error(ErrorCode::ShapeMismatch, "channel count differs at " + output.layer);
  }
  return style_layer_weight(output) * (style_gram.data - gram_of(output.values.data)).squaredNorm();
}

/// d style_layer_loss / d F_output = 4 w (G_out - G_style) F_out.
template <typename Scalar>
Tensor3<Scalar> style_layer_gradient(const GramMatrix<Scalar>& style_gram, const FeatureMap<Scalar>& output) {
  const MatrixX<Scalar> diff = gram_of(output.values.data) - style_gram.data;
  Tensor3<Scalar> g(output.channels(), output.height(), output.width());
  g.data.noalias() = (Scalar(4) * style_layer_weight(output)) * (diff * output.values.data);
  return g;
}

/// Sum over layers of the normalized squared Gram discrepancy.
template <typename Scalar>
Scalar style_loss(const FeatureSet<Scalar>& style, const FeatureSet<Scalar>& output) {
  detail::require_same_layers(style, output);
  Scalar total = 0;
  for (const auto& [layer, out] : output) {
    total += style_layer_loss(gram_matrix(style.at(layer)), out);
  }
  return total;
}

template <typename Scalar>
Scalar total_loss(Scalar content, Scalar style, Scalar style_weight) {
  return content + style_weight * style;
}

struct GatysConfig {
  double style_weight = 1e4;
  std::vector<std::string> content_layers = {"relu4_1", "relu5_1"};
  std::vector<std::string> style_layers = {"relu1_1", "relu2_1", "relu3_1", "relu4_1", "relu5_1"};
  /// Plain optimizer steps. Far from converged when starting from the
  /// content image; raise it for stronger stylization.
  int iterations = 10;
  double step_size = 0.02;
  std::uint64_t seed = 0;
  int preview_every = 0;

  void validate() const {
    if (iterations < 0) throw Error(ErrorCode::InvalidConfig, "gatys.iterations must be >= 0");
    if (!(style_weight >= 0)) throw Error(ErrorCode::InvalidConfig, "gatys.style_weight must be >= 0");
    if (!(step_size > 0)) throw Error(ErrorCode::InvalidConfig, "gatys.step_size must be > 0");
    if (content_layers.empty() && style_layers.empty()) {
      throw Error(ErrorCode::InvalidConfig, "gatys needs at least one content or style layer");
    }
    for (const auto& l : content_layers) {
      if (!Encoder<float>::is_tap(l)) throw Error(ErrorCode::UnknownLayer, l);
    }
    for (const auto& l : style_layers) {
      if (!Encoder<float>::is_tap(l)) throw Error(ErrorCode::UnknownLayer, l);
    }
  }
};

inline std::vector<std::string> union_layers(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::set<std::string> s(a.begin(), a.end());
  s.insert(b.begin(), b.end());
  return {s.begin(), s.end()};
}

/// Content + weighted Gram style objective with fixed targets. Exposed so the
/// gradient can be checked independently of the optimization loop.
template <typename Scalar>
class GatysObjective {
 public:
  GatysObjective(const Encoder<Scalar>& encoder, const Image<Scalar>& content, const Image<Scalar>& style,
                 const GatysConfig& cfg)
      : encoder_(encoder), cfg_(cfg), layers_(union_layers(cfg.content_layers, cfg.style_layers)) {
    content_targets_ = encoder.encode(content, cfg.content_layers);
    for (const auto& [layer, feat] : encoder.encode(style, cfg.style_layers)) {
      style_targets_[layer] = gram_matrix(feat);
    }
  }

  LossEvaluation<Scalar> operator()(const Tensor3<Scalar>& pixels, int /*iteration*/, bool need_gradient) const {
    const auto tape = encoder_.forward(pixels, layers_);
    std::map<std::string, Tensor3<Scalar>> grads;
    double lc = 0;
    double ls = 0;
    const Scalar lambda = static_cast<Scalar>(cfg_.style_weight);
    for (const auto& layer : cfg_.content_layers) {
      FeatureMap<Scalar> out{encoder_.activation(tape, layer), layer};
      lc += static_cast<double>(content_loss(content_targets_.at(layer), out));
      if (need_gradient) add_grad(grads, layer, content_loss_gradient(content_targets_.at(layer), out));
    }
    for (const auto& layer : cfg_.style_layers) {
      FeatureMap<Scalar> out{encoder_.activation(tape, layer), layer};
      ls += static_cast<double>(style_layer_loss(style_targets_.at(layer), out));
      if (need_gradient) {
        auto g = style_layer_gradient(style_targets_.at(layer), out);
        g.data *= lambda;
        add_grad(grads, layer, std::move(g));
      }
    }
    LossEvaluation<Scalar> eval;
    eval.loss = lc + cfg_.style_weight * ls;
    eval.breakdown = "content=" + std::to_string(lc) + " style=" + std::to_string(ls);
    if (need_gradient) eval.gradient = encoder_.backward(tape, grads);
    return eval;
  }

 private:
  static void add_grad(std::map<std::string, Tensor3<Scalar>>& grads, const std::string& layer, Tensor3<Scalar> g) {
    auto it = grads.find(layer);
    if (it == grads.end()) {
      grads.emplace(layer, std::move(g));
    } else {
      it->second.data += g.data;
    }
  }

  const Encoder<Scalar>& encoder_;
  GatysConfig cfg_;
  std::vector<std::string> layers_;
  FeatureSet<Scalar> content_targets_;
  std::map<std::string, GramMatrix<Scalar>> style_targets_;
};

/// Optimizes the pixels of an image initialized from `content`.
template <typename Scalar>
TransferResult<Scalar> run_gatys(const Image<Scalar>& content, const Image<Scalar>& style, const GatysConfig& cfg,
                                 const Encoder<Scalar>& encoder, const IterationObserver* observer = nullptr) {
  cfg.validate();
  require_stage_size(content, "content image");
  require_stage_size(style, "style image");
  if (!encoder.loaded()) throw Error(ErrorCode::WeightsNotLoaded, "encoder has no weights");
  GatysObjective<Scalar> objective(encoder, content, style, cfg);
  return optimize_pixels(content, cfg.iterations, cfg.step_size, objective, "gatys", observer);
}

}  // namespace carpet
