#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "carpet/embedder.hpp"
#include "carpet/gatys.hpp"
#include "carpet/image_optimizer.hpp"

namespace carpet {

struct StyleText {
  std::string style;
  std::string content = "Photo";

  void validate() const {
    validate_prompt(style);
    validate_prompt(content);
  }
};

/// Below this norm a direction is treated as undefined.
inline constexpr double kDegenerateDeltaNorm = 1e-8;

template <typename Scalar>
struct DirectionalTerm {
  double value = 1.0;
  bool degenerate = false;
  VectorX<Scalar> grad_delta;  // d value / d delta_image; zero when degenerate
};

/// 1 - cos(delta_image, delta_text). Degenerate deltas give exactly 1 with a
/// zero gradient.
template <typename Scalar>
DirectionalTerm<Scalar> directional_term(const VectorX<Scalar>& delta_image, const VectorX<Scalar>& delta_text) {
  if (delta_image.size() != delta_text.size()) throw Error(ErrorCode::ShapeMismatch, "embedding sizes differ");
  DirectionalTerm<Scalar> out;
  out.grad_delta = VectorX<Scalar>::Zero(delta_image.size());
  const double ni = static_cast<double>(delta_image.norm());
  const double nt = static_cast<double>(delta_text.norm());
  if (!(ni >= kDegenerateDeltaNorm) || !(nt >= kDegenerateDeltaNorm)) {
    out.degenerate = true;
    return out;
  }
  const double cosine = std::clamp(static_cast<double>(delta_image.dot(delta_text)) / (ni * nt), -1.0, 1.0);
  out.value = 1.0 - cosine;
  out.grad_delta = -(delta_text / static_cast<Scalar>(ni * nt) -
                     delta_image * static_cast<Scalar>(cosine / (ni * ni)));
  return out;
}

template <typename Scalar>
VectorX<Scalar> text_direction(const Embedder<Scalar>& embedder, const StyleText& text) {
  text.validate();
  return embedder.embed_text(text.style).values - embedder.embed_text(text.content).values;
}

/// Image-level directional loss: delta_image = E(output) - E(content).
template <typename Scalar>
DirectionalTerm<Scalar> directional_loss(const Embedder<Scalar>& embedder, const Tensor3<Scalar>& content,
                                         const Tensor3<Scalar>& output, const VectorX<Scalar>& delta_text) {
  const VectorX<Scalar> delta = embedder.embed_image(output).values - embedder.embed_image(content).values;
  return directional_term(delta, delta_text);
}

template <typename Scalar>
double directional_loss(const Embedder<Scalar>& embedder, const Image<Scalar>& content, const Image<Scalar>& output,
                        const StyleText& text) {
  return directional_loss(embedder, content.tensor(), output.tensor(), text_direction(embedder, text)).value;
}

/// d directional_loss / d output pixels.
template <typename Scalar>
Tensor3<Scalar> directional_loss_gradient(const Embedder<Scalar>& embedder, const Tensor3<Scalar>& content,
                                          const Tensor3<Scalar>& output, const VectorX<Scalar>& delta_text) {
  const auto term = directional_loss(embedder, content, output, delta_text);
  if (term.degenerate) return Tensor3<Scalar>(output.channels(), output.height, output.width);
  return embedder.embed_image_backward(output, term.grad_delta);
}

struct ClipStylerConfig {
  int iterations = 500;
  int crop_count = 64;
  int crop_size = 0;  // 0: a quarter of the smaller image side
  /// Crops scoring at or below the threshold are dropped. Unset means
  /// threshold_factor times the mean crop loss of the current step.
  std::optional<double> threshold;
  double threshold_factor = 0.7;
  double warp_magnitude = 0.5;
  double directional_weight = 5e2;
  double patch_weight = 9e3;
  double content_weight = 150;
  std::vector<std::string> content_layers = {"relu4_1", "relu5_1"};
  double step_size = 5e-4;
  std::uint64_t seed = 0;
  int preview_every = 0;

  int crop_size_for(int height, int width) const {
    return crop_size > 0 ? crop_size : std::max(1, std::min(height, width) / 4);
  }

  void validate() const {
    if (iterations < 0) throw Error(ErrorCode::InvalidConfig, "clip.iterations must be >= 0");
    if (crop_count < 1) throw Error(ErrorCode::InvalidConfig, "clip.crop_count must be >= 1");
    if (crop_size < 0) throw Error(ErrorCode::InvalidConfig, "clip.crop_size must be >= 0");
    if (!(warp_magnitude >= 0 && warp_magnitude < 1)) {
      throw Error(ErrorCode::InvalidConfig, "clip.warp_magnitude must be in [0,1)");
    }
    if (!(step_size > 0)) throw Error(ErrorCode::InvalidConfig, "clip.step_size must be > 0");
    if (!(directional_weight >= 0 && patch_weight >= 0 && content_weight >= 0)) {
      throw Error(ErrorCode::InvalidConfig, "clip loss weights must be >= 0");
    }
    for (const auto& l : content_layers) {
      if (!Encoder<float>::is_tap(l)) throw Error(ErrorCode::UnknownLayer, l);
    }
  }

  void validate_for(int height, int width) const {
    validate();
    const int s = crop_size_for(height, width);
    if (s > height || s > width) {
      throw Error(ErrorCode::InvalidConfig, "clip.crop_size " + std::to_string(s) + " exceeds the image");
    }
  }
};

/// One crop with its perspective warp, stored as bilinear taps into the full
/// image: output pixel p of the crop reads sum_j weight[p][j] * image[index[p][j]].
struct WarpedCrop {
  int top = 0;
  int left = 0;
  int size = 0;
  std::vector<std::array<int, 4>> index;
  std::vector<std::array<double, 4>> weight;
};

namespace detail {

/// Homography taking the four `from` corners onto `to` (h33 = 1).
inline Eigen::Matrix3d homography(const std::array<Eigen::Vector2d, 4>& from, const std::array<Eigen::Vector2d, 4>& to) {
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double x = from[i].x(), y = from[i].y(), u = to[i].x(), v = to[i].y();
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  const Eigen::Matrix<double, 8, 1> h = a.fullPivLu().solve(b);
  Eigen::Matrix3d m;
  m << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  return m;
}

}  // namespace detail

/// Draws `cfg.crop_count` square crops, each with an inward perspective warp
/// whose corner displacement is at most warp_magnitude * size / 2 per axis.
inline std::vector<WarpedCrop> sample_crops(int height, int width, const ClipStylerConfig& cfg, std::uint64_t seed) {
  cfg.validate_for(height, width);
  const int s = cfg.crop_size_for(height, width);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> top_dist(0, height - s);
  std::uniform_int_distribution<int> left_dist(0, width - s);
  std::uniform_real_distribution<double> jitter(0.0, cfg.warp_magnitude * s / 2.0);
  const std::array<Eigen::Vector2d, 4> square = {Eigen::Vector2d(0, 0), Eigen::Vector2d(s, 0), Eigen::Vector2d(s, s),
                                                 Eigen::Vector2d(0, s)};
  const std::array<Eigen::Vector2d, 4> inward = {Eigen::Vector2d(1, 1), Eigen::Vector2d(-1, 1),
                                                 Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, -1)};
  std::vector<WarpedCrop> crops;
  crops.reserve(static_cast<std::size_t>(cfg.crop_count));
  for (int n = 0; n < cfg.crop_count; ++n) {
    WarpedCrop crop;
    crop.top = top_dist(rng);
    crop.left = left_dist(rng);
    crop.size = s;
    std::array<Eigen::Vector2d, 4> quad;
    for (int i = 0; i < 4; ++i) {
      const double dx = jitter(rng);
      const double dy = jitter(rng);
      quad[i] = square[i] + Eigen::Vector2d(inward[i].x() * dx, inward[i].y() * dy);
    }
    const Eigen::Matrix3d h = detail::homography(square, quad);
    crop.index.resize(static_cast<std::size_t>(s) * s);
    crop.weight.resize(static_cast<std::size_t>(s) * s);
    for (int v = 0; v < s; ++v) {
      for (int u = 0; u < s; ++u) {
        const Eigen::Vector3d q = h * Eigen::Vector3d(u + 0.5, v + 0.5, 1.0);
        const double sx = std::clamp(q.x() / q.z() - 0.5, 0.0, s - 1.0);
        const double sy = std::clamp(q.y() / q.z() - 0.5, 0.0, s - 1.0);
        const int x0 = static_cast<int>(std::floor(sx));
        const int y0 = static_cast<int>(std::floor(sy));
        const int x1 = std::min(x0 + 1, s - 1);
        const int y1 = std::min(y0 + 1, s - 1);
        const double fx = sx - x0;
        const double fy = sy - y0;
        auto flat = [&](int y, int x) { return (crop.top + y) * width + crop.left + x; };
        const std::size_t p = static_cast<std::size_t>(v) * s + u;
        crop.index[p] = {flat(y0, x0), flat(y0, x1), flat(y1, x0), flat(y1, x1)};
        crop.weight[p] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
      }
    }
    crops.push_back(std::move(crop));
  }
  return crops;
}

template <typename Scalar>
Tensor3<Scalar> apply_crop(const Tensor3<Scalar>& img, const WarpedCrop& crop) {
  Tensor3<Scalar> out(img.channels(), crop.size, crop.size);
  for (int c = 0; c < img.channels(); ++c) {
    for (std::size_t p = 0; p < crop.index.size(); ++p) {
      double v = 0;
      for (int j = 0; j < 4; ++j) v += crop.weight[p][j] * static_cast<double>(img.data(c, crop.index[p][j]));
      out.data(c, static_cast<Eigen::Index>(p)) = static_cast<Scalar>(v);
    }
  }
  return out;
}

/// Adjoint of apply_crop: scatter-adds `grad` into `target`.
template <typename Scalar>
void apply_crop_adjoint(const Tensor3<Scalar>& grad, const WarpedCrop& crop, Tensor3<Scalar>& target) {
  for (int c = 0; c < grad.channels(); ++c) {
    for (std::size_t p = 0; p < crop.index.size(); ++p) {
      const Scalar g = grad.data(c, static_cast<Eigen::Index>(p));
      for (int j = 0; j < 4; ++j) target.data(c, crop.index[p][j]) += static_cast<Scalar>(crop.weight[p][j]) * g;
    }
  }
}

template <typename Scalar>
struct PatchLoss {
  double value = 0.0;
  std::vector<double> crop_losses;
  std::vector<bool> degenerate;
  double threshold = 0.0;
  int kept = 0;
  Tensor3<Scalar> gradient;  // d value / d output, when requested
};

/// Mean directional loss over the crops scoring above the threshold; 0 when
/// every crop is dropped.
template <typename Scalar>
PatchLoss<Scalar> patch_clip_loss(const Embedder<Scalar>& embedder, const Tensor3<Scalar>& output,
                                  const Tensor3<Scalar>& content, const VectorX<Scalar>& delta_text,
                                  const std::vector<WarpedCrop>& crops, const ClipStylerConfig& cfg,
                                  bool need_gradient = false) {
  if (!output.same_shape(content)) throw Error(ErrorCode::ShapeMismatch, "output and content differ in size");
  PatchLoss<Scalar> out;
  std::vector<Tensor3<Scalar>> warped_out;
  std::vector<VectorX<Scalar>> grads;
  double sum = 0;
  for (const auto& crop : crops) {
    warped_out.push_back(apply_crop(output, crop));
    const auto term = directional_loss(embedder, apply_crop(content, crop), warped_out.back(), delta_text);
    out.crop_losses.push_back(term.value);
    out.degenerate.push_back(term.degenerate);
    grads.push_back(term.grad_delta);
    sum += term.value;
  }
  out.threshold = cfg.threshold ? *cfg.threshold
                                : cfg.threshold_factor * (crops.empty() ? 0.0 : sum / static_cast<double>(crops.size()));
  double kept_sum = 0;
  for (double l : out.crop_losses) {
    if (l > out.threshold) {
      kept_sum += l;
      ++out.kept;
    }
  }
  out.value = out.kept > 0 ? kept_sum / out.kept : 0.0;
  if (need_gradient) {
    out.gradient = Tensor3<Scalar>(output.channels(), output.height, output.width);
    for (std::size_t i = 0; i < crops.size(); ++i) {
      if (!(out.crop_losses[i] > out.threshold) || out.degenerate[i]) continue;
      VectorX<Scalar> g = grads[i] / static_cast<Scalar>(out.kept);
      apply_crop_adjoint(embedder.embed_image_backward(warped_out[i], g), crops[i], out.gradient);
    }
  }
  return out;
}

template <typename Scalar>
double patch_clip_loss(const Embedder<Scalar>& embedder, const Image<Scalar>& output, const Image<Scalar>& content,
                       const StyleText& text, const ClipStylerConfig& cfg) {
  const auto crops = sample_crops(output.height(), output.width(), cfg, cfg.seed);
  return patch_clip_loss(embedder, output.tensor(), content.tensor(), text_direction(embedder, text), crops, cfg).value;
}

/// Lightweight image-to-image network: three stride-2 convolutions, three
/// residual blocks, three upsample+conv blocks and a 1x1 head whose output is
/// added to the input logit before a sigmoid. The head starts near zero, so
/// the untrained network is close to the identity.
template <typename Scalar>
class StylerNetwork {
 public:
  struct Tape {
    std::vector<Tensor3<Scalar>> inputs;  // input of each conv, in call order
    std::vector<Tensor3<Scalar>> relu_out;
    std::vector<std::pair<int, int>> up_sizes;
    Tensor3<Scalar> logit;
    Tensor3<Scalar> output;
  };

  static constexpr double kHeadScale = 1e-2;
  static constexpr double kClampEps = 1e-3;

  explicit StylerNetwork(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto add = [&](int in, int out, int k, int stride, double scale = 1.0) {
      nn::Conv2d<double> c(in, out, k, stride, k / 2);
      c.init_he(rng);
      c.weight *= scale;
      convs_.push_back(c.template cast<Scalar>());
    };
    add(3, 16, 3, 2);
    add(16, 32, 3, 2);
    add(32, 64, 3, 2);
    for (int r = 0; r < 3; ++r) {
      add(64, 64, 3, 1);
      add(64, 64, 3, 1, 0.1);
    }
    add(64, 32, 3, 1);
    add(32, 16, 3, 1);
    add(16, 16, 3, 1);
    add(16, 3, 1, 1, kHeadScale);
    grads_.resize(convs_.size());
  }

  Tensor3<Scalar> forward(const Tensor3<Scalar>& x, Tape* tape = nullptr) const {
    Tape local;
    Tape& t = tape ? *tape : local;
    t = Tape{};
    std::size_t ci = 0;
    auto conv_relu = [&](const Tensor3<Scalar>& in) {
      t.inputs.push_back(in);
      auto y = nn::relu(convs_[ci++].forward(in));
      t.relu_out.push_back(y);
      return y;
    };
    Tensor3<Scalar> h = conv_relu(x);
    const std::pair<int, int> s1{h.height, h.width};
    h = conv_relu(h);
    const std::pair<int, int> s2{h.height, h.width};
    h = conv_relu(h);
    for (int r = 0; r < 3; ++r) {
      auto inner = conv_relu(h);
      t.inputs.push_back(inner);
      auto z = convs_[ci++].forward(inner);
      h.data += z.data;
    }
    t.up_sizes = {s2, s1, {x.height, x.width}};
    for (const auto& [uh, uw] : t.up_sizes) {
      h = conv_relu(nn::upsample_nearest(h, uh, uw));
    }
    t.inputs.push_back(h);
    const auto head = convs_[ci++].forward(h);
    t.logit = x;
    t.logit.data = x.data.unaryExpr([](Scalar v) {
      const Scalar c = std::clamp(v, Scalar(kClampEps), Scalar(1 - kClampEps));
      return std::log(c / (Scalar(1) - c));
    });
    t.logit.data += head.data;
    t.output = t.logit;
    t.output.data = t.logit.data.unaryExpr([](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); });
    return t.output;
  }

  /// Accumulates parameter gradients for d loss / d output = `dy`.
  void backward(const Tape& t, const Tensor3<Scalar>& dy) {
    Tensor3<Scalar> g = dy;
    g.data = dy.data.array() * t.output.data.array() * (Scalar(1) - t.output.data.array());
    std::size_t ci = convs_.size() - 1;
    std::size_t ii = t.inputs.size() - 1;
    std::size_t ri = t.relu_out.size() - 1;
    g = convs_[ci].backward(t.inputs[ii], g, &grads_[ci]);
    auto conv_relu_back = [&](Tensor3<Scalar> grad) {
      --ci;
      --ii;
      grad = nn::relu_backward(t.relu_out[ri--], std::move(grad));
      return convs_[ci].backward(t.inputs[ii], grad, &grads_[ci]);
    };
    for (int u = 0; u < 3; ++u) {
      g = conv_relu_back(std::move(g));
      // the pre-upsample map has the size of the previous block's output
      g = nn::upsample_nearest_backward(g, t.relu_out[ri].height, t.relu_out[ri].width);
    }
    for (int r = 0; r < 3; ++r) {
      // residual: h_out = h_in + conv_b(relu(conv_a(h_in)))
      --ci;
      --ii;
      Tensor3<Scalar> inner = convs_[ci].backward(t.inputs[ii], g, &grads_[ci]);
      inner = conv_relu_back(std::move(inner));
      g.data += inner.data;
    }
    for (int d = 0; d < 3; ++d) {
      if (d < 2) {
        g = conv_relu_back(std::move(g));
      } else {
        --ci;
        --ii;
        g = nn::relu_backward(t.relu_out[ri], std::move(g));
        convs_[ci].backward(t.inputs[ii], g, &grads_[ci]);
      }
    }
  }

  void zero_grad() {
    for (auto& g : grads_) {
      g.weight.setZero();
      g.bias.setZero();
    }
  }

  std::vector<nn::ParamBlock<Scalar>> parameters() {
    std::vector<nn::ParamBlock<Scalar>> blocks;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      auto& c = convs_[i];
      auto& g = grads_[i];
      if (g.weight.size() == 0) {
        g.weight = MatrixX<Scalar>::Zero(c.weight.rows(), c.weight.cols());
        g.bias = VectorX<Scalar>::Zero(c.bias.size());
      }
      blocks.push_back({c.weight.data(), g.weight.data(), c.weight.size()});
      blocks.push_back({c.bias.data(), g.bias.data(), c.bias.size()});
    }
    return blocks;
  }

  std::size_t conv_count() const { return convs_.size(); }
  nn::Conv2d<Scalar>& conv(std::size_t i) { return convs_[i]; }
  const nn::ConvGrad<Scalar>& grad(std::size_t i) const { return grads_[i]; }

 private:
  std::vector<nn::Conv2d<Scalar>> convs_;
  std::vector<nn::ConvGrad<Scalar>> grads_;
};

/// Total ClipStyler loss on one output and its gradient w.r.t. the output pixels.
template <typename Scalar>
class ClipObjective {
 public:
  ClipObjective(const Encoder<Scalar>& encoder, const Embedder<Scalar>& embedder, const Image<Scalar>& content,
                const StyleText& text, const ClipStylerConfig& cfg)
      : encoder_(encoder), embedder_(embedder), content_(content.tensor()), cfg_(cfg) {
    delta_text_ = text_direction(embedder, text);
    if (!cfg.content_layers.empty()) content_targets_ = encoder.encode(content, cfg.content_layers);
  }

  /// `iteration` selects the crop draw.
  LossEvaluation<Scalar> operator()(const Tensor3<Scalar>& output, int iteration, bool need_gradient) const {
    LossEvaluation<Scalar> eval;
    const auto dir = directional_loss(embedder_, content_, output, delta_text_);
    const auto crops = sample_crops(output.height, output.width, cfg_, crop_seed(iteration));
    const auto patch = patch_clip_loss(embedder_, output, content_, delta_text_, crops, cfg_, need_gradient);
    double lc = 0;
    std::map<std::string, Tensor3<Scalar>> grads;
    typename Encoder<Scalar>::Tape tape;
    if (!cfg_.content_layers.empty()) {
      tape = encoder_.forward(output, cfg_.content_layers);
      for (const auto& layer : cfg_.content_layers) {
        FeatureMap<Scalar> out{encoder_.activation(tape, layer), layer};
        lc += static_cast<double>(content_loss(content_targets_.at(layer), out));
        if (need_gradient) {
          auto g = content_loss_gradient(content_targets_.at(layer), out);
          g.data *= static_cast<Scalar>(cfg_.content_weight);
          grads.emplace(layer, std::move(g));
        }
      }
    }
    eval.loss = cfg_.directional_weight * dir.value + cfg_.patch_weight * patch.value + cfg_.content_weight * lc;
    eval.breakdown = "directional=" + std::to_string(dir.value) + " patch=" + std::to_string(patch.value) +
                     " content=" + std::to_string(lc);
    if (need_gradient) {
      eval.gradient = grads.empty() ? Tensor3<Scalar>(3, output.height, output.width) : encoder_.backward(tape, grads);
      if (!dir.degenerate) {
        const auto gd = embedder_.embed_image_backward(output, dir.grad_delta);
        eval.gradient.data += static_cast<Scalar>(cfg_.directional_weight) * gd.data;
      }
      eval.gradient.data += static_cast<Scalar>(cfg_.patch_weight) * patch.gradient.data;
    }
    return eval;
  }

  std::uint64_t crop_seed(int iteration) const {
    return cfg_.seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(iteration);
  }

 private:
  const Encoder<Scalar>& encoder_;
  const Embedder<Scalar>& embedder_;
  Tensor3<Scalar> content_;
  ClipStylerConfig cfg_;
  VectorX<Scalar> delta_text_;
  FeatureSet<Scalar> content_targets_;
};

/// Trains a fresh StylerNetwork on `content` and returns its output after
/// cfg.iterations updates. loss_trace[k] is the loss before update k.
template <typename Scalar>
TransferResult<Scalar> run_clip_styler(const Image<Scalar>& content, const StyleText& text,
                                       const ClipStylerConfig& cfg, const Encoder<Scalar>& encoder,
                                       const Embedder<Scalar>& embedder, const IterationObserver* observer = nullptr) {
  cfg.validate_for(content.height(), content.width());
  text.validate();
  require_stage_size(content, "content image");
  if (!encoder.loaded()) throw Error(ErrorCode::WeightsNotLoaded, "encoder has no weights");
  ClipObjective<Scalar> objective(encoder, embedder, content, text, cfg);
  StylerNetwork<Scalar> net(cfg.seed);
  nn::Adam<Scalar> adam(cfg.step_size);
  TransferResult<Scalar> result;
  const Tensor3<Scalar>& x = content.tensor();
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < cfg.iterations; ++k) {
    typename StylerNetwork<Scalar>::Tape tape;
    const auto y = net.forward(x, &tape);
    const auto eval = objective(y, k, true);
    if (!std::isfinite(eval.loss) || !eval.gradient.data.allFinite()) {
      throw Error(ErrorCode::NonFiniteLoss, "clip_styler iteration " + std::to_string(k) + ": " + eval.breakdown);
    }
    result.loss_trace.push_back(eval.loss);
    best = std::min(best, eval.loss);
    result.best_trace.push_back(best);
    notify(observer, {"clip_styler", k, cfg.iterations + 1, eval.loss,
                      [&y] { return Image<float>::clamped(y.template cast<float>()); }});
    net.zero_grad();
    auto params = net.parameters();
    net.backward(tape, eval.gradient);
    adam.step(params);
  }
  auto final_output = net.forward(x);
  notify(observer, {"clip_styler", cfg.iterations, cfg.iterations + 1,
                    result.loss_trace.empty() ? 0.0 : result.loss_trace.back(),
                    [&final_output] { return Image<float>::clamped(final_output.template cast<float>()); }});
  result.best_iteration = cfg.iterations;
  result.image = Image<Scalar>::clamped(std::move(final_output));
  return result;
}

}  // namespace carpet
