#pragma once

#include <cmath>

#include "carpet/tensor.hpp"

namespace carpet {

/// Smallest side accepted by any transfer stage.
inline constexpr int kMinStageSide = 32;

/// An RGB image with values in [0,1], stored channel-major (3 x H x W).
/// Immutable once built; all stages consume and emit this type.
template <typename Scalar>
class Image {
 public:
  Image() = default;

  static Image filled(int height, int width, Scalar r, Scalar g, Scalar b) {
    Tensor3<Scalar> t(3, height, width);
    t.data.row(0).setConstant(r);
    t.data.row(1).setConstant(g);
    t.data.row(2).setConstant(b);
    return from_tensor(std::move(t));
  }

  /// Validates shape, finiteness and range; throws InvalidImage otherwise.
  static Image from_tensor(Tensor3<Scalar> t) {
    if (t.channels() != 3) throw Error(ErrorCode::InvalidImage, "image must have 3 channels");
    if (t.height < 1 || t.width < 1) throw Error(ErrorCode::InvalidDimensions, "image is empty");
    if (!t.data.allFinite()) throw Error(ErrorCode::InvalidImage, "image has non-finite values");
    if ((t.data.array() < Scalar(0)).any() || (t.data.array() > Scalar(1)).any()) {
      throw Error(ErrorCode::InvalidImage, "image values outside [0,1]");
    }
    Image img;
    img.t_ = std::move(t);
    return img;
  }

  /// Clamps into [0,1]; NaN is rejected.
  static Image clamped(Tensor3<Scalar> t) {
    t.data = t.data.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
    return from_tensor(std::move(t));
  }

  const Tensor3<Scalar>& tensor() const { return t_; }
  int height() const { return t_.height; }
  int width() const { return t_.width; }
  bool empty() const { return t_.empty(); }

  Scalar operator()(int y, int x, int c) const { return t_.at(c, y, x); }

  template <typename Other>
  Image<Other> cast() const {
    return Image<Other>::from_tensor(t_.template cast<Other>());
  }

  friend bool operator==(const Image& a, const Image& b) { return a.t_ == b.t_; }

 private:
  Tensor3<Scalar> t_;
};

using ImageTensor = Image<float>;

/// Throws InvalidDimensions when the image is too small for a transfer stage.
template <typename Scalar>
void require_stage_size(const Image<Scalar>& img, const char* what) {
  if (img.height() < kMinStageSide || img.width() < kMinStageSide) {
    throw Error(ErrorCode::InvalidDimensions,
                std::string(what) + " must be at least 32x32, got " + std::to_string(img.height()) +
                    "x" + std::to_string(img.width()));
  }
}

/// ITU-R 601 luma replicated to all three channels. Pixels that are already
/// gray pass through untouched, which makes the operation exactly idempotent.
template <typename Scalar>
Image<Scalar> to_grayscale(const Image<Scalar>& img) {
  Tensor3<Scalar> out = img.tensor();
  const auto& in = img.tensor().data;
  for (Eigen::Index p = 0; p < in.cols(); ++p) {
    const Scalar r = in(0, p), g = in(1, p), b = in(2, p);
    Scalar y;
    if (r == g && g == b) {
      y = r;
    } else {
      y = Scalar(0.299) * r + Scalar(0.587) * g + Scalar(0.114) * b;
      y = std::clamp(y, Scalar(0), Scalar(1));
    }
    out.data(0, p) = y;
    out.data(1, p) = y;
    out.data(2, p) = y;
  }
  return Image<Scalar>::from_tensor(std::move(out));
}

template <typename Scalar>
bool is_grayscale(const Image<Scalar>& img) {
  const auto& d = img.tensor().data;
  return d.row(0) == d.row(1) && d.row(1) == d.row(2);
}

/// Bilinear resize with values clamped to [0,1]. Any positive target size is
/// accepted here; stage entry points separately enforce the 32-pixel floor.
template <typename Scalar>
Image<Scalar> resize(const Image<Scalar>& img, int height, int width) {
  if (height < 1 || width < 1) {
    throw Error(ErrorCode::InvalidDimensions, "resize target must be positive");
  }
  if (height == img.height() && width == img.width()) return img;
  return Image<Scalar>::clamped(resample_bilinear(img.tensor(), height, width));
}

template <typename Scalar>
double mean_abs_diff(const Image<Scalar>& a, const Image<Scalar>& b) {
  if (!a.tensor().same_shape(b.tensor())) {
    throw Error(ErrorCode::ShapeMismatch, "images differ in size");
  }
  return (a.tensor().data - b.tensor().data).template cast<double>().cwiseAbs().mean();
}

}  // namespace carpet
