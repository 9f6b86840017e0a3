#pragma once

#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "carpet/decoder.hpp"
#include "carpet/encoder.hpp"

namespace carpet {

/// All strided k x k windows of a feature map. Row i of `patches` is window i
/// flattened as (channel, ky, kx); windows are in row-major order of origin.
template <typename Scalar>
struct PatchGrid {
  MatrixX<Scalar> patches;
  std::vector<std::pair<int, int>> positions;  // (row, col) origins
  int patch_size = 0;
  int stride = 0;
  int channels = 0;
  int source_height = 0;
  int source_width = 0;

  int count() const { return static_cast<int>(patches.rows()); }
};

inline int patch_count_along(int extent, int k, int s) { return (extent - k) / s + 1; }

struct SwapConfig {
  int patch_size = 5;
  int stride = 3;
  std::string layer = "conv4_1";

  void validate() const {
    if (patch_size < 1) throw Error(ErrorCode::InvalidConfig, "swap.patch_size must be >= 1");
    if (stride < 1) throw Error(ErrorCode::InvalidConfig, "swap.stride must be >= 1");
    if (stride > patch_size) throw Error(ErrorCode::InvalidConfig, "swap.stride must not exceed swap.patch_size");
    if (!Encoder<float>::is_tap(layer)) throw Error(ErrorCode::UnknownLayer, layer);
  }
};

template <typename Scalar>
PatchGrid<Scalar> extract_patches(const FeatureMap<Scalar>& feat, int k, int s) {
  if (k < 1 || s < 1) throw Error(ErrorCode::InvalidConfig, "patch size and stride must be positive");
  if (k > feat.height() || k > feat.width()) {
    throw Error(ErrorCode::PatchTooLarge, "patch size " + std::to_string(k) + " exceeds feature map " +
                                              std::to_string(feat.height()) + "x" + std::to_string(feat.width()));
  }
  const int rows = patch_count_along(feat.height(), k, s);
  const int cols = patch_count_along(feat.width(), k, s);
  PatchGrid<Scalar> grid;
  grid.patch_size = k;
  grid.stride = s;
  grid.channels = feat.channels();
  grid.source_height = feat.height();
  grid.source_width = feat.width();
  MatrixX<Scalar> unfolded;
  nn::im2col(feat.values, k, s, 0, rows, cols, unfolded);
  grid.patches = unfolded.transpose();
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) grid.positions.emplace_back(r * s, c * s);
  }
  return grid;
}

namespace detail {

inline void require_compatible(int k_a, int c_a, int k_b, int c_b, int n_a, int n_b) {
  if (n_a == 0 || n_b == 0) throw Error(ErrorCode::EmptyGrid, "patch grid is empty");
  if (k_a != k_b || c_a != c_b) throw Error(ErrorCode::ShapeMismatch, "patch grids differ in size or channels");
}

/// Reference score <c, s> / |s| in double with sequential summation; -inf for
/// zero-norm style patches.
template <typename Scalar>
double canonical_ncc(const Scalar* content, const Scalar* style, Eigen::Index n, double style_norm) {
  if (style_norm == 0.0) return -std::numeric_limits<double>::infinity();
  double dot = 0;
  for (Eigen::Index i = 0; i < n; ++i) dot += static_cast<double>(content[i]) * static_cast<double>(style[i]);
  return dot / style_norm;
}

template <typename Scalar>
std::vector<double> style_norms(const PatchGrid<Scalar>& style) {
  std::vector<double> norms(static_cast<std::size_t>(style.count()));
  for (int j = 0; j < style.count(); ++j) {
    double s = 0;
    for (Eigen::Index i = 0; i < style.patches.cols(); ++i) {
      const double v = style.patches(j, i);
      s += v * v;
    }
    norms[static_cast<std::size_t>(j)] = std::sqrt(s);
  }
  return norms;
}

}  // namespace detail

/// O(N*M) matcher: argmax_j <c_i, s_j>/|s_j|, lowest j on ties. This is the
/// definition the fast path is checked against.
template <typename Scalar>
std::vector<int> match_patches_naive(const PatchGrid<Scalar>& content, const PatchGrid<Scalar>& style) {
  detail::require_compatible(content.patch_size, content.channels, style.patch_size, style.channels, content.count(),
                             style.count());
  const auto norms = detail::style_norms(style);
  const Eigen::Index n = content.patches.cols();
  std::vector<int> out(static_cast<std::size_t>(content.count()), 0);
  for (int i = 0; i < content.count(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < style.count(); ++j) {
      const double score =
          detail::canonical_ncc(content.patches.row(i).data(), style.patches.row(j).data(), n, norms[static_cast<std::size_t>(j)]);
      if (score > best) {
        best = score;
        out[static_cast<std::size_t>(i)] = j;
      }
    }
  }
  return out;
}

/// Matching as one convolution: the normalized style patches act as kernels
/// over the content features, which for the strided grid is a single matrix
/// product. Near-maximal candidates are re-scored with the reference formula
/// so the result is identical to `match_patches_naive`.
template <typename Scalar>
std::vector<int> match_patches(const PatchGrid<Scalar>& content, const PatchGrid<Scalar>& style) {
  detail::require_compatible(content.patch_size, content.channels, style.patch_size, style.channels, content.count(),
                             style.count());
  const auto norms = detail::style_norms(style);
  const Eigen::Index n = content.patches.cols();
  MatrixX<Scalar> kernels = style.patches;
  for (int j = 0; j < style.count(); ++j) {
    const double nj = norms[static_cast<std::size_t>(j)];
    if (nj > 0) kernels.row(j) /= static_cast<Scalar>(nj);
  }
  std::vector<int> out(static_cast<std::size_t>(content.count()), 0);
  constexpr int kBlock = 256;
  for (int start = 0; start < content.count(); start += kBlock) {
    const int rows = std::min(kBlock, content.count() - start);
    const MatrixX<Scalar> scores = content.patches.middleRows(start, rows) * kernels.transpose();
    for (int r = 0; r < rows; ++r) {
      const int i = start + r;
      double top = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < style.count(); ++j) {
        if (norms[static_cast<std::size_t>(j)] > 0) top = std::max(top, static_cast<double>(scores(r, j)));
      }
      if (!std::isfinite(top)) continue;  // every style patch is zero: index 0
      const double content_norm = static_cast<double>(content.patches.row(i).norm());
      const double window = 1e-3 * content_norm + 1e-12 + 1e-3 * std::abs(top);
      double best = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < style.count(); ++j) {
        const double nj = norms[static_cast<std::size_t>(j)];
        if (nj == 0 || static_cast<double>(scores(r, j)) < top - window) continue;
        const double score = detail::canonical_ncc(content.patches.row(i).data(), style.patches.row(j).data(), n, nj);
        if (score > best) {
          best = score;
          out[static_cast<std::size_t>(i)] = j;
        }
      }
    }
  }
  return out;
}

/// Writes style patch `indices[i]` at content window i of a `channels` x
/// `height` x `width` map (windows generated with the style grid's k and s).
/// Overlapping cells are averaged by their overlap count; cells no window
/// covers stay zero.
template <typename Scalar>
FeatureMap<Scalar> reassemble(const PatchGrid<Scalar>& style, const std::vector<int>& indices, int channels, int height,
                              int width, const std::string& layer) {
  const int k = style.patch_size;
  const int s = style.stride;
  if (channels != style.channels) throw Error(ErrorCode::ShapeMismatch, "channel count differs from style grid");
  if (k > height || k > width) throw Error(ErrorCode::PatchTooLarge, "target smaller than one patch");
  const int rows = patch_count_along(height, k, s);
  const int cols = patch_count_along(width, k, s);
  if (static_cast<int>(indices.size()) != rows * cols) {
    throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(rows * cols) + " indices, got " +
                                              std::to_string(indices.size()));
  }
  Tensor3<Scalar> sum(channels, height, width);
  std::vector<int> count(static_cast<std::size_t>(height) * width, 0);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int idx = indices[static_cast<std::size_t>(r * cols + c)];
      if (idx < 0 || idx >= style.count()) {
        throw Error(ErrorCode::IndexOutOfRange, "style index " + std::to_string(idx));
      }
      const auto patch = style.patches.row(idx);
      const int top = r * s;
      const int left = c * s;
      for (int ch = 0; ch < channels; ++ch) {
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) sum.at(ch, top + ky, left + kx) += patch((ch * k + ky) * k + kx);
        }
      }
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) ++count[static_cast<std::size_t>((top + ky) * width + left + kx)];
      }
    }
  }
  for (std::size_t p = 0; p < count.size(); ++p) {
    if (count[p] > 1) sum.data.col(static_cast<Eigen::Index>(p)) /= static_cast<Scalar>(count[p]);
  }
  return {std::move(sum), layer};
}

/// Smallest extent >= `extent` whose strided windows reach the last cell.
inline int aligned_extent(int extent, int k, int s) {
  if (extent <= k) return k;
  const int steps = (extent - k + s - 1) / s;
  return k + steps * s;
}

template <typename Scalar>
struct SwapResult {
  Image<Scalar> image;
  std::vector<int> indices;  // selected style patch per content window
  int content_patches = 0;
  int style_patches = 0;

  int distinct_selected() const { return static_cast<int>(std::set<int>(indices.begin(), indices.end()).size()); }
};

/// Swaps features at `cfg.layer` only (no decode).
template <typename Scalar>
std::pair<FeatureMap<Scalar>, SwapResult<Scalar>> swap_features(const FeatureMap<Scalar>& content,
                                                                 const FeatureMap<Scalar>& style, const SwapConfig& cfg) {
  cfg.validate();
  const int k = cfg.patch_size;
  const int s = cfg.stride;
  if (k > std::min({content.height(), content.width(), style.height(), style.width()})) {
    throw Error(ErrorCode::PatchTooLarge, "patch size " + std::to_string(k) + " exceeds a feature map dimension");
  }
  // Both maps are edge-padded so the strided windows cover every cell.
  const int ch = aligned_extent(content.height(), k, s);
  const int cw = aligned_extent(content.width(), k, s);
  const FeatureMap<Scalar> padded_content{pad_replicate(content.values, ch, cw), content.layer};
  const FeatureMap<Scalar> padded_style{
      pad_replicate(style.values, aligned_extent(style.height(), k, s), aligned_extent(style.width(), k, s)),
      style.layer};
  const auto content_grid = extract_patches(padded_content, k, s);
  const auto style_grid = extract_patches(padded_style, k, s);
  SwapResult<Scalar> info;
  info.indices = match_patches(content_grid, style_grid);
  info.content_patches = content_grid.count();
  info.style_patches = style_grid.count();
  auto swapped = reassemble(style_grid, info.indices, content.channels(), ch, cw, content.layer);
  swapped.values = crop(swapped.values, 0, 0, content.height(), content.width());
  return {std::move(swapped), std::move(info)};
}

/// encode -> swap at cfg.layer -> decode, resized back to the content size.
template <typename Scalar>
SwapResult<Scalar> run_style_swap(const Image<Scalar>& content, const Image<Scalar>& style, const SwapConfig& cfg,
                                  const Encoder<Scalar>& encoder, const Decoder<Scalar>& decoder,
                                  const IterationObserver* observer = nullptr) {
  cfg.validate();
  require_stage_size(content, "content image");
  require_stage_size(style, "style image");
  if (!encoder.loaded()) throw Error(ErrorCode::WeightsNotLoaded, "encoder has no weights");
  if (decoder.layer() != cfg.layer) {
    throw Error(ErrorCode::WrongLayer, "decoder inverts " + decoder.layer() + " but swap layer is " + cfg.layer);
  }
  const std::vector<std::string> layers = {cfg.layer};
  const auto cf = encoder.encode(content, layers).at(cfg.layer);
  const auto sf = encoder.encode(style, layers).at(cfg.layer);
  auto [swapped, info] = swap_features(cf, sf, cfg);
  auto decoded = decoder.decode(swapped, observer);
  info.image = resize(decoded, content.height(), content.width());
  return std::move(info);
}

}  // namespace carpet
