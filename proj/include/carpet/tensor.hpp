#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "carpet/error.hpp"

namespace carpet {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Channel-major C x H x W tensor. Row c of `data` is channel c flattened in
/// row-major pixel order, so a feature map is directly a C x (H*W) matrix and
/// its Gram matrix is `data * data.transpose()`.
template <typename Scalar>
struct Tensor3 {
  MatrixX<Scalar> data;
  int height = 0;
  int width = 0;

  Tensor3() = default;
  Tensor3(int channels, int h, int w)
      : data(MatrixX<Scalar>::Zero(channels, static_cast<Eigen::Index>(h) * w)), height(h), width(w) {}
  Tensor3(MatrixX<Scalar> values, int h, int w) : data(std::move(values)), height(h), width(w) {
    if (data.cols() != static_cast<Eigen::Index>(h) * w) {
      throw Error(ErrorCode::ShapeMismatch, "tensor data does not match spatial dims");
    }
  }

  int channels() const { return static_cast<int>(data.rows()); }
  int pixels() const { return height * width; }
  bool empty() const { return data.size() == 0; }

  Scalar& at(int c, int y, int x) { return data(c, static_cast<Eigen::Index>(y) * width + x); }
  Scalar at(int c, int y, int x) const { return data(c, static_cast<Eigen::Index>(y) * width + x); }

  bool same_shape(const Tensor3& other) const {
    return channels() == other.channels() && height == other.height && width == other.width;
  }

  template <typename Other>
  Tensor3<Other> cast() const {
    return Tensor3<Other>(data.template cast<Other>(), height, width);
  }

  static Tensor3 constant(int channels, int h, int w, Scalar value) {
    Tensor3 t(channels, h, w);
    t.data.setConstant(value);
    return t;
  }
};

template <typename Scalar>
bool operator==(const Tensor3<Scalar>& a, const Tensor3<Scalar>& b) {
  return a.same_shape(b) && a.data == b.data;
}

namespace detail {

// Half-pixel-centre mapping of an output coordinate onto the source axis.
struct AxisSample {
  int lo;
  int hi;
  double frac;
};

inline AxisSample bilinear_axis(int dst, int dst_size, int src_size) {
  const double scale = static_cast<double>(src_size) / dst_size;
  double src = (dst + 0.5) * scale - 0.5;
  src = std::clamp(src, 0.0, static_cast<double>(src_size - 1));
  const int lo = static_cast<int>(std::floor(src));
  const int hi = std::min(lo + 1, src_size - 1);
  return {lo, hi, src - lo};
}

}  // namespace detail

/// Bilinear resampling of every channel to `h` x `w` (half-pixel centres,
/// edge-clamped). Same dims return an exact copy.
template <typename Scalar>
Tensor3<Scalar> resample_bilinear(const Tensor3<Scalar>& src, int h, int w) {
  if (h < 1 || w < 1) {
    throw Error(ErrorCode::InvalidDimensions, "resample target must be at least 1x1");
  }
  if (src.empty() || src.height < 1 || src.width < 1) {
    throw Error(ErrorCode::InvalidDimensions, "cannot resample an empty tensor");
  }
  if (h == src.height && w == src.width) return src;
  Tensor3<Scalar> out(src.channels(), h, w);
  for (int y = 0; y < h; ++y) {
    const auto sy = detail::bilinear_axis(y, h, src.height);
    for (int x = 0; x < w; ++x) {
      const auto sx = detail::bilinear_axis(x, w, src.width);
      const Scalar w00 = static_cast<Scalar>((1 - sy.frac) * (1 - sx.frac));
      const Scalar w01 = static_cast<Scalar>((1 - sy.frac) * sx.frac);
      const Scalar w10 = static_cast<Scalar>(sy.frac * (1 - sx.frac));
      const Scalar w11 = static_cast<Scalar>(sy.frac * sx.frac);
      for (int c = 0; c < src.channels(); ++c) {
        out.at(c, y, x) = w00 * src.at(c, sy.lo, sx.lo) + w01 * src.at(c, sy.lo, sx.hi) +
                          w10 * src.at(c, sy.hi, sx.lo) + w11 * src.at(c, sy.hi, sx.hi);
      }
    }
  }
  return out;
}

/// Replicates the last row/column until the tensor is `h` x `w` (h, w >= current).
template <typename Scalar>
Tensor3<Scalar> pad_replicate(const Tensor3<Scalar>& src, int h, int w) {
  if (h == src.height && w == src.width) return src;
  Tensor3<Scalar> out(src.channels(), h, w);
  for (int c = 0; c < src.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      const int sy = std::min(y, src.height - 1);
      for (int x = 0; x < w; ++x) {
        out.at(c, y, x) = src.at(c, sy, std::min(x, src.width - 1));
      }
    }
  }
  return out;
}

template <typename Scalar>
Tensor3<Scalar> crop(const Tensor3<Scalar>& src, int top, int left, int h, int w) {
  if (top < 0 || left < 0 || top + h > src.height || left + w > src.width) {
    throw Error(ErrorCode::InvalidDimensions, "crop window outside tensor");
  }
  Tensor3<Scalar> out(src.channels(), h, w);
  for (int c = 0; c < src.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out.at(c, y, x) = src.at(c, top + y, left + x);
    }
  }
  return out;
}

template <typename Scalar>
bool all_finite(const Tensor3<Scalar>& t) {
  return t.data.allFinite();
}

}  // namespace carpet
