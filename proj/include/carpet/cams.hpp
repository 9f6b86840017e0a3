#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "carpet/gatys.hpp"

namespace carpet {

using Rgb = Eigen::Vector3d;

namespace color {

inline double srgb_to_linear(double v) {
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

inline double linear_to_srgb(double v) {
  return v <= 0.0031308 ? v * 12.92 : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

// D65 white point.
inline constexpr double kXn = 0.95047;
inline constexpr double kYn = 1.0;
inline constexpr double kZn = 1.08883;

inline const Eigen::Matrix3d& rgb_to_xyz() {
  static const Eigen::Matrix3d m = (Eigen::Matrix3d() << 0.4124564, 0.3575761, 0.1804375,  //
                                    0.2126729, 0.7151522, 0.0721750,                       //
                                    0.0193339, 0.1191920, 0.9503041)
                                       .finished();
  return m;
}

inline Eigen::Vector3d rgb_to_lab(const Rgb& rgb) {
  const double r = srgb_to_linear(rgb[0]);
  const double g = srgb_to_linear(rgb[1]);
  const double b = srgb_to_linear(rgb[2]);
  const Eigen::Vector3d xyz = rgb_to_xyz() * Eigen::Vector3d(r, g, b);
  const double x = xyz[0] / kXn, y = xyz[1] / kYn, z = xyz[2] / kZn;
  auto f = [](double t) { return t > 216.0 / 24389.0 ? std::cbrt(t) : (24389.0 / 27.0 * t + 16.0) / 116.0; };
  const double fx = f(x), fy = f(y), fz = f(z);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

inline Rgb lab_to_rgb(const Eigen::Vector3d& lab) {
  const double fy = (lab[0] + 16.0) / 116.0;
  const double fx = fy + lab[1] / 500.0;
  const double fz = fy - lab[2] / 200.0;
  auto finv = [](double t) {
    const double t3 = t * t * t;
    return t3 > 216.0 / 24389.0 ? t3 : (116.0 * t - 16.0) * 27.0 / 24389.0;
  };
  const double x = finv(fx) * kXn;
  const double y = finv(fy) * kYn;
  const double z = finv(fz) * kZn;
  // exact inverse of the forward matrix so Lab round trips stay tight
  static const Eigen::Matrix3d inverse = rgb_to_xyz().inverse();
  const Eigen::Vector3d lin = inverse * Eigen::Vector3d(x, y, z);
  const double r = lin[0], g = lin[1], b = lin[2];
  Rgb out(linear_to_srgb(std::max(r, 0.0)), linear_to_srgb(std::max(g, 0.0)), linear_to_srgb(std::max(b, 0.0)));
  return out.cwiseMax(0.0).cwiseMin(1.0);
}

inline double luminance(const Rgb& c) { return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]; }

}  // namespace color

inline constexpr int kMaxPaletteSize = 16;
inline constexpr double kPaletteMergeThreshold = 0.1;

/// Ordered set of representative RGB colors (luminance, then R, G, B).
struct ColorPalette {
  std::vector<Rgb> colors;

  int size() const { return static_cast<int>(colors.size()); }
};

namespace detail {

inline void sort_palette(std::vector<Rgb>& colors) {
  std::sort(colors.begin(), colors.end(), [](const Rgb& a, const Rgb& b) {
    const double la = color::luminance(a), lb = color::luminance(b);
    if (la != lb) return la < lb;
    return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
  });
}

/// Agglomerative collapse: repeatedly averages the closest pair (weighted by
/// how many colors each side already absorbed) while that pair is within
/// `threshold`, then keeps merging until at most `max_size` remain.
inline std::vector<Rgb> collapse_colors(std::vector<Rgb> colors, double threshold, int max_size) {
  std::vector<double> weight(colors.size(), 1.0);
  while (colors.size() > 1) {
    std::size_t bi = 0, bj = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < colors.size(); ++i) {
      for (std::size_t j = i + 1; j < colors.size(); ++j) {
        const double d = (colors[i] - colors[j]).norm();
        if (d < best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    }
    if (best > threshold && static_cast<int>(colors.size()) <= max_size) break;
    colors[bi] = (weight[bi] * colors[bi] + weight[bj] * colors[bj]) / (weight[bi] + weight[bj]);
    weight[bi] += weight[bj];
    colors.erase(colors.begin() + static_cast<std::ptrdiff_t>(bj));
    weight.erase(weight.begin() + static_cast<std::ptrdiff_t>(bj));
  }
  return colors;
}

}  // namespace detail

/// Union of two palettes with near-duplicates (distance <= threshold)
/// collapsed to their mean. Closest pairs keep merging past the threshold
/// while more than `max_size` colors remain.
inline ColorPalette merge_palettes(const ColorPalette& a, const ColorPalette& b,
                                   double threshold = kPaletteMergeThreshold, int max_size = kMaxPaletteSize) {
  std::vector<Rgb> all = a.colors;
  all.insert(all.end(), b.colors.begin(), b.colors.end());
  auto merged = detail::collapse_colors(std::move(all), threshold, std::max(1, max_size));
  detail::sort_palette(merged);
  return {std::move(merged)};
}

/// k-means in CIELAB with k-means++ seeding from `seed`. Returns at most
/// `size` colors; empty clusters are dropped and near-duplicate centres are
/// merged, so low-variety images give smaller palettes.
template <typename Scalar>
ColorPalette extract_palette(const Image<Scalar>& img, int size, std::uint64_t seed = 0,
                             double threshold = kPaletteMergeThreshold) {
  if (size < 1) throw Error(ErrorCode::InvalidConfig, "palette size must be >= 1");
  size = std::min(size, kMaxPaletteSize);
  const auto& d = img.tensor().data;
  const Eigen::Index n = d.cols();
  if (n == 0) throw Error(ErrorCode::InvalidDimensions, "empty image");
  std::vector<Eigen::Vector3d> lab(static_cast<std::size_t>(n));
  for (Eigen::Index p = 0; p < n; ++p) {
    lab[static_cast<std::size_t>(p)] = color::rgb_to_lab(Rgb(d(0, p), d(1, p), d(2, p)));
  }

  std::mt19937_64 rng(seed);
  std::vector<Eigen::Vector3d> centres;
  centres.push_back(lab[std::uniform_int_distribution<std::size_t>(0, lab.size() - 1)(rng)]);
  std::vector<double> dist2(lab.size(), std::numeric_limits<double>::infinity());
  while (static_cast<int>(centres.size()) < size) {
    double total = 0;
    for (std::size_t p = 0; p < lab.size(); ++p) {
      dist2[p] = std::min(dist2[p], (lab[p] - centres.back()).squaredNorm());
      total += dist2[p];
    }
    if (total <= 0) break;
    double pick = std::uniform_real_distribution<double>(0.0, total)(rng);
    std::size_t chosen = lab.size() - 1;
    for (std::size_t p = 0; p < lab.size(); ++p) {
      pick -= dist2[p];
      if (pick < 0 && dist2[p] > 0) {
        chosen = p;
        break;
      }
    }
    centres.push_back(lab[chosen]);
  }

  std::vector<int> assign(lab.size(), -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t p = 0; p < lab.size(); ++p) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < centres.size(); ++c) {
        const double dd = (lab[p] - centres[c]).squaredNorm();
        if (dd < best_d) {
          best_d = dd;
          best = static_cast<int>(c);
        }
      }
      if (assign[p] != best) {
        assign[p] = best;
        changed = true;
      }
    }
    std::vector<Eigen::Vector3d> sum(centres.size(), Eigen::Vector3d::Zero());
    std::vector<std::size_t> count(centres.size(), 0);
    for (std::size_t p = 0; p < lab.size(); ++p) {
      sum[static_cast<std::size_t>(assign[p])] += lab[p];
      ++count[static_cast<std::size_t>(assign[p])];
    }
    std::vector<Eigen::Vector3d> next;
    std::vector<int> remap(centres.size(), -1);
    for (std::size_t c = 0; c < centres.size(); ++c) {
      if (count[c] == 0) continue;
      remap[c] = static_cast<int>(next.size());
      next.push_back(sum[c] / static_cast<double>(count[c]));
    }
    if (next.size() != centres.size()) {
      for (auto& a : assign) a = remap[static_cast<std::size_t>(a)];
      changed = true;
    }
    centres = std::move(next);
    if (!changed) break;
  }

  std::vector<Rgb> colors;
  for (const auto& c : centres) colors.push_back(color::lab_to_rgb(c));
  colors = detail::collapse_colors(std::move(colors), threshold, kMaxPaletteSize);
  detail::sort_palette(colors);
  return {std::move(colors)};
}

/// Soft per-color weights: one mask per palette color stored as a channel
/// of `masks`, so every column sums to one.
template <typename Scalar>
struct WeightMaskSet {
  ColorPalette palette;
  Tensor3<Scalar> masks;

  int count() const { return masks.channels(); }
  int height() const { return masks.height; }
  int width() const { return masks.width; }
};

inline constexpr double kDefaultMaskSigma = 0.25;

/// mask_t(p) = softmax_t(-|pixel_p - color_t|^2 / sigma^2).
template <typename Scalar>
WeightMaskSet<Scalar> color_masks(const Image<Scalar>& img, const ColorPalette& palette,
                                  double sigma = kDefaultMaskSigma) {
  if (palette.colors.empty()) throw Error(ErrorCode::InvalidConfig, "palette is empty");
  const auto& d = img.tensor().data;
  const int t_count = palette.size();
  WeightMaskSet<Scalar> out{palette, Tensor3<Scalar>(t_count, img.height(), img.width())};
  const double inv_s2 = 1.0 / (sigma * sigma);
  std::vector<double> logits(static_cast<std::size_t>(t_count));
  for (Eigen::Index p = 0; p < d.cols(); ++p) {
    const Rgb px(d(0, p), d(1, p), d(2, p));
    double max_logit = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < t_count; ++t) {
      logits[static_cast<std::size_t>(t)] = -(px - palette.colors[static_cast<std::size_t>(t)]).squaredNorm() * inv_s2;
      max_logit = std::max(max_logit, logits[static_cast<std::size_t>(t)]);
    }
    double z = 0;
    for (auto& l : logits) {
      l = std::exp(l - max_logit);
      z += l;
    }
    for (int t = 0; t < t_count; ++t) out.masks.data(t, p) = static_cast<Scalar>(logits[static_cast<std::size_t>(t)] / z);
  }
  return out;
}

/// Bilinear resize of every mask followed by per-pixel renormalization.
template <typename Scalar>
WeightMaskSet<Scalar> resize_masks(const WeightMaskSet<Scalar>& m, int height, int width) {
  if (height == m.height() && width == m.width()) return m;
  WeightMaskSet<Scalar> out{m.palette, resample_bilinear(m.masks, height, width)};
  const auto sums = out.masks.data.colwise().sum().eval();
  for (Eigen::Index p = 0; p < out.masks.data.cols(); ++p) {
    if (sums(p) > Scalar(0)) out.masks.data.col(p) /= sums(p);
  }
  return out;
}

template <typename Scalar>
using LayerMasks = std::map<std::string, WeightMaskSet<Scalar>>;

/// Resizes a full-resolution mask set onto the spatial dims of each feature map.
template <typename Scalar>
LayerMasks<Scalar> masks_for_layers(const WeightMaskSet<Scalar>& masks, const FeatureSet<Scalar>& feats) {
  LayerMasks<Scalar> out;
  for (const auto& [layer, f] : feats) out.emplace(layer, resize_masks(masks, f.height(), f.width()));
  return out;
}

template <typename Scalar>
void check_partition_of_unity(const WeightMaskSet<Scalar>& m, double tol = 1e-5) {
  const auto sums = m.masks.data.template cast<double>().colwise().sum();
  if (((sums.array() - 1.0).abs() > tol).any()) {
    throw Error(ErrorCode::InvalidImage, "mask set is not a partition of unity");
  }
}

/// Gram matrix of the features weighted by one mask (broadcast over channels).
template <typename Scalar>
GramMatrix<Scalar> weighted_gram(const FeatureMap<Scalar>& feat,
                                 const std::type_identity_t<Eigen::Ref<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>>& mask) {
  if (mask.size() != feat.values.pixels()) {
    throw Error(ErrorCode::ShapeMismatch, "mask dims differ from feature dims at " + feat.layer);
  }
  const MatrixX<Scalar> weighted = feat.values.data.array().rowwise() * mask.array();
  return {gram_of(weighted), feat.layer};
}

namespace detail {

template <typename Scalar>
const WeightMaskSet<Scalar>& mask_at(const LayerMasks<Scalar>& masks, const FeatureMap<Scalar>& feat) {
  auto it = masks.find(feat.layer);
  if (it == masks.end()) throw Error(ErrorCode::LayerSetMismatch, "no masks for " + feat.layer);
  if (it->second.height() != feat.height() || it->second.width() != feat.width()) {
    throw Error(ErrorCode::ShapeMismatch, "masks for " + feat.layer + " not resized to feature dims");
  }
  return it->second;
}

template <typename Scalar>
void require_same_palette(const WeightMaskSet<Scalar>& a, const WeightMaskSet<Scalar>& b) {
  if (a.count() != b.count()) throw Error(ErrorCode::PaletteMismatch, "mask sets have different palettes");
  for (std::size_t i = 0; i < a.palette.colors.size() && i < b.palette.colors.size(); ++i) {
    if (a.palette.colors[i] != b.palette.colors[i]) {
      throw Error(ErrorCode::PaletteMismatch, "mask sets have different palettes");
    }
  }
}

}  // namespace detail

/// One layer of the color-wise style loss, sum_t |G_style,t - G_output,t|^2.
template <typename Scalar>
Scalar cams_layer_loss(const FeatureMap<Scalar>& style, const FeatureMap<Scalar>& output,
                       const WeightMaskSet<Scalar>& style_masks, const WeightMaskSet<Scalar>& output_masks) {
  if (style.channels() != output.channels()) throw Error(ErrorCode::ShapeMismatch, "channel count differs");
  detail::require_same_palette(style_masks, output_masks);
  Scalar total = 0;
  for (int t = 0; t < style_masks.count(); ++t) {
    const auto gs = weighted_gram(style, style_masks.masks.data.row(t));
    const auto go = weighted_gram(output, output_masks.masks.data.row(t));
    total += (gs.data - go.data).squaredNorm();
  }
  return total;
}

/// Unnormalized color-wise style loss summed over layers and palette colors.
template <typename Scalar>
Scalar cams_style_loss(const FeatureSet<Scalar>& style, const FeatureSet<Scalar>& output,
                       const LayerMasks<Scalar>& style_masks, const LayerMasks<Scalar>& output_masks) {
  detail::require_same_layers(style, output);
  Scalar total = 0;
  for (const auto& [layer, out] : output) {
    const auto& s = style.at(layer);
    total += cams_layer_loss(s, out, detail::mask_at(style_masks, s), detail::mask_at(output_masks, out));
  }
  return total;
}

/// Precomputed per-color style Grams for one layer.
template <typename Scalar>
struct ColorGrams {
  std::vector<MatrixX<Scalar>> grams;
};

template <typename Scalar>
ColorGrams<Scalar> color_grams(const FeatureMap<Scalar>& feat, const WeightMaskSet<Scalar>& masks) {
  ColorGrams<Scalar> out;
  for (int t = 0; t < masks.count(); ++t) out.grams.push_back(weighted_gram(feat, masks.masks.data.row(t)).data);
  return out;
}

/// Loss and d/dF_output for one layer with output masks held fixed:
/// dL/dF = sum_t 4 (G_o,t - G_s,t) (F .* m_t) .* m_t.
template <typename Scalar>
Scalar cams_layer_loss_and_gradient(const ColorGrams<Scalar>& style, const FeatureMap<Scalar>& output,
                                    const WeightMaskSet<Scalar>& output_masks, Tensor3<Scalar>* gradient) {
  if (static_cast<int>(style.grams.size()) != output_masks.count()) {
    throw Error(ErrorCode::PaletteMismatch, "style and output palettes differ in size");
  }
  Scalar total = 0;
  if (gradient) *gradient = Tensor3<Scalar>(output.channels(), output.height(), output.width());
  for (int t = 0; t < output_masks.count(); ++t) {
    const auto mask = output_masks.masks.data.row(t);
    const MatrixX<Scalar> weighted = output.values.data.array().rowwise() * mask.array();
    const MatrixX<Scalar> diff = gram_of(weighted) - style.grams[static_cast<std::size_t>(t)];
    total += diff.squaredNorm();
    if (gradient) {
      const MatrixX<Scalar> g = Scalar(4) * (diff * weighted);
      gradient->data.array() += g.array().rowwise() * mask.array();
    }
  }
  return total;
}

struct CamsConfig {
  int palette_size = 5;
  int iterations = 300;
  /// The color-wise loss is unnormalized, so its weight is many orders of
  /// magnitude below the Gram-normalized weight used by Gatys.
  double style_weight = 1e-5;
  double step_size = 0.02;
  std::uint64_t seed = 0;
  double mask_sigma = kDefaultMaskSigma;
  double merge_threshold = kPaletteMergeThreshold;
  int refresh_every = 50;
  std::vector<std::string> content_layers = {"relu4_1", "relu5_1"};
  std::vector<std::string> style_layers = {"relu1_1", "relu2_1", "relu3_1", "relu4_1", "relu5_1"};
  int preview_every = 0;

  void validate() const {
    if (palette_size < 1 || palette_size > kMaxPaletteSize) {
      throw Error(ErrorCode::InvalidConfig, "cams.palette_size must be in [1,16]");
    }
    if (iterations < 0) throw Error(ErrorCode::InvalidConfig, "cams.iterations must be >= 0");
    if (!(style_weight >= 0)) throw Error(ErrorCode::InvalidConfig, "cams.style_weight must be >= 0");
    if (!(step_size > 0)) throw Error(ErrorCode::InvalidConfig, "cams.step_size must be > 0");
    if (!(mask_sigma > 0)) throw Error(ErrorCode::InvalidConfig, "cams.mask_sigma must be > 0");
    if (refresh_every < 1) throw Error(ErrorCode::InvalidConfig, "cams.refresh_every must be >= 1");
    for (const auto& l : content_layers) {
      if (!Encoder<float>::is_tap(l)) throw Error(ErrorCode::UnknownLayer, l);
    }
    for (const auto& l : style_layers) {
      if (!Encoder<float>::is_tap(l)) throw Error(ErrorCode::UnknownLayer, l);
    }
  }
};

/// Palette from the current output and the style image, merged and capped
/// at the configured size.
template <typename Scalar>
ColorPalette cams_palette(const Image<Scalar>& output, const Image<Scalar>& style, const CamsConfig& cfg) {
  return merge_palettes(extract_palette(output, cfg.palette_size, cfg.seed, cfg.merge_threshold),
                        extract_palette(style, cfg.palette_size, cfg.seed + 1, cfg.merge_threshold),
                        cfg.merge_threshold, cfg.palette_size);
}

/// Content loss plus weighted color-wise style loss. Palette and masks are
/// rebuilt from the evolving output every `refresh_every` iterations and are
/// constants in between (no gradient flows through them).
template <typename Scalar>
class CamsObjective {
 public:
  CamsObjective(const Encoder<Scalar>& encoder, const Image<Scalar>& content, const Image<Scalar>& style,
                const CamsConfig& cfg)
      : encoder_(encoder), cfg_(cfg), style_(style), layers_(union_layers(cfg.content_layers, cfg.style_layers)) {
    content_targets_ = encoder.encode(content, cfg.content_layers);
    style_feats_ = encoder.encode(style, cfg.style_layers);
    refresh(content.tensor());
  }

  /// Rebuilds palette, style Grams and output masks from `pixels`.
  void refresh(const Tensor3<Scalar>& pixels) {
    const auto output = Image<Scalar>::clamped(pixels);
    palette_ = cams_palette(output, style_, cfg_);
    const auto style_masks = color_masks(style_, palette_, cfg_.mask_sigma);
    const auto output_masks = color_masks(output, palette_, cfg_.mask_sigma);
    style_grams_.clear();
    output_masks_.clear();
    for (const auto& layer : cfg_.style_layers) {
      const auto& sf = style_feats_.at(layer);
      style_grams_[layer] = color_grams(sf, resize_masks(style_masks, sf.height(), sf.width()));
      const int factor = encoder_.downsample_factor(layer);
      output_masks_.emplace(layer, resize_masks(output_masks, pixels.height / factor, pixels.width / factor));
    }
    full_output_masks_ = output_masks;
    full_style_masks_ = style_masks;
  }

  const ColorPalette& palette() const { return palette_; }
  const WeightMaskSet<Scalar>& output_masks() const { return full_output_masks_; }
  const WeightMaskSet<Scalar>& style_masks() const { return full_style_masks_; }

  LossEvaluation<Scalar> operator()(const Tensor3<Scalar>& pixels, int iteration, bool need_gradient) {
    if (iteration > 0 && iteration % cfg_.refresh_every == 0 && iteration != last_refresh_) {
      refresh(pixels);
      last_refresh_ = iteration;
    }
    return evaluate(pixels, need_gradient);
  }

  LossEvaluation<Scalar> evaluate(const Tensor3<Scalar>& pixels, bool need_gradient) const {
    const auto tape = encoder_.forward(pixels, layers_);
    std::map<std::string, Tensor3<Scalar>> grads;
    double lc = 0;
    double ls = 0;
    const Scalar lambda = static_cast<Scalar>(cfg_.style_weight);
    for (const auto& layer : cfg_.content_layers) {
      FeatureMap<Scalar> out{encoder_.activation(tape, layer), layer};
      lc += static_cast<double>(content_loss(content_targets_.at(layer), out));
      if (need_gradient) grads[layer] = content_loss_gradient(content_targets_.at(layer), out);
    }
    for (const auto& layer : cfg_.style_layers) {
      FeatureMap<Scalar> out{encoder_.activation(tape, layer), layer};
      Tensor3<Scalar> g;
      ls += static_cast<double>(cams_layer_loss_and_gradient(style_grams_.at(layer), out, output_masks_.at(layer),
                                                             need_gradient ? &g : nullptr));
      if (need_gradient) {
        g.data *= lambda;
        auto it = grads.find(layer);
        if (it == grads.end()) {
          grads.emplace(layer, std::move(g));
        } else {
          it->second.data += g.data;
        }
      }
    }
    LossEvaluation<Scalar> eval;
    eval.loss = lc + cfg_.style_weight * ls;
    eval.breakdown = "content=" + std::to_string(lc) + " style=" + std::to_string(ls);
    if (need_gradient) eval.gradient = encoder_.backward(tape, grads);
    return eval;
  }

 private:
  const Encoder<Scalar>& encoder_;
  CamsConfig cfg_;
  Image<Scalar> style_;
  std::vector<std::string> layers_;
  FeatureSet<Scalar> content_targets_;
  FeatureSet<Scalar> style_feats_;
  ColorPalette palette_;
  std::map<std::string, ColorGrams<Scalar>> style_grams_;
  LayerMasks<Scalar> output_masks_;
  WeightMaskSet<Scalar> full_output_masks_;
  WeightMaskSet<Scalar> full_style_masks_;
  int last_refresh_ = 0;
};

template <typename Scalar>
struct CamsResult : TransferResult<Scalar> {
  ColorPalette palette;               // palette in effect at the end of the run
  WeightMaskSet<Scalar> output_masks;  // full resolution, same palette
  WeightMaskSet<Scalar> style_masks;
};

template <typename Scalar>
CamsResult<Scalar> run_cams(const Image<Scalar>& content, const Image<Scalar>& style, const CamsConfig& cfg,
                            const Encoder<Scalar>& encoder, const IterationObserver* observer = nullptr) {
  cfg.validate();
  require_stage_size(content, "content image");
  require_stage_size(style, "style image");
  if (!encoder.loaded()) throw Error(ErrorCode::WeightsNotLoaded, "encoder has no weights");
  CamsObjective<Scalar> objective(encoder, content, style, cfg);
  auto fn = [&objective](const Tensor3<Scalar>& x, int k, bool need) { return objective(x, k, need); };
  CamsResult<Scalar> result;
  static_cast<TransferResult<Scalar>&>(result) =
      optimize_pixels(content, cfg.iterations, cfg.step_size, fn, "cams", observer);
  result.palette = objective.palette();
  result.output_masks = objective.output_masks();
  result.style_masks = objective.style_masks();
  return result;
}

}  // namespace carpet
