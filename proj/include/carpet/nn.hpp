#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "carpet/tensor.hpp"

namespace carpet::nn {

inline int conv_out_size(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

/// Unfolds k x k windows into columns: row (c*k + ky)*k + kx, column oy*W_out + ox.
/// Out-of-range taps read as zero.
template <typename Scalar>
void im2col(const Tensor3<Scalar>& x, int k, int stride, int pad, int out_h, int out_w, MatrixX<Scalar>& cols) {
  const int channels = x.channels();
  cols.resize(static_cast<Eigen::Index>(channels) * k * k, static_cast<Eigen::Index>(out_h) * out_w);
  for (int c = 0; c < channels; ++c) {
    const Scalar* src = x.data.row(c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        Scalar* dst = cols.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          Scalar* row = dst + static_cast<std::ptrdiff_t>(oy) * out_w;
          if (iy < 0 || iy >= x.height) {
            std::fill(row, row + out_w, Scalar(0));
            continue;
          }
          const Scalar* srow = src + static_cast<std::ptrdiff_t>(iy) * x.width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            row[ox] = (ix >= 0 && ix < x.width) ? srow[ix] : Scalar(0);
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatter-adds columns back into `dx` (which must be zeroed).
template <typename Scalar>
void col2im(const MatrixX<Scalar>& cols, int k, int stride, int pad, int out_h, int out_w, Tensor3<Scalar>& dx) {
  const int channels = dx.channels();
  for (int c = 0; c < channels; ++c) {
    Scalar* dst = dx.data.row(c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Scalar* src = cols.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= dx.height) continue;
          const Scalar* row = src + static_cast<std::ptrdiff_t>(oy) * out_w;
          Scalar* drow = dst + static_cast<std::ptrdiff_t>(iy) * dx.width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < dx.width) drow[ix] += row[ox];
          }
        }
      }
    }
  }
}

template <typename Scalar>
struct ConvGrad {
  MatrixX<Scalar> weight;
  VectorX<Scalar> bias;
};

/// 2-D convolution with weights laid out (out, in, k, k) flattened per output
/// channel, i.e. the same order as common framework checkpoints.
template <typename Scalar>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, int stride = 1, int pad = -1)
      : weight(MatrixX<Scalar>::Zero(out_channels, static_cast<Eigen::Index>(in_channels) * kernel * kernel)),
        bias(VectorX<Scalar>::Zero(out_channels)),
        in_channels_(in_channels),
        kernel_(kernel),
        stride_(stride),
        pad_(pad < 0 ? kernel / 2 : pad) {}

  MatrixX<Scalar> weight;
  VectorX<Scalar> bias;

  int in_channels() const { return in_channels_; }
  int out_channels() const { return static_cast<int>(weight.rows()); }
  int kernel() const { return kernel_; }
  int stride() const { return stride_; }
  int pad() const { return pad_; }

  int out_height(int h) const { return conv_out_size(h, kernel_, stride_, pad_); }
  int out_width(int w) const { return conv_out_size(w, kernel_, stride_, pad_); }

  void init_he(std::mt19937_64& rng) {
    const double fan_in = static_cast<double>(weight.cols());
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (Eigen::Index i = 0; i < weight.size(); ++i) weight.data()[i] = static_cast<Scalar>(dist(rng));
    bias.setZero();
  }

  Tensor3<Scalar> forward(const Tensor3<Scalar>& x) const {
    check_input(x);
    const int oh = out_height(x.height);
    const int ow = out_width(x.width);
    Tensor3<Scalar> y(out_channels(), oh, ow);
    if (kernel_ == 1 && stride_ == 1 && pad_ == 0) {
      y.data.noalias() = weight * x.data;
    } else {
      MatrixX<Scalar> cols;
      im2col(x, kernel_, stride_, pad_, oh, ow, cols);
      y.data.noalias() = weight * cols;
    }
    y.data.colwise() += bias;
    return y;
  }

  /// Gradient w.r.t. the input; accumulates parameter gradients into `grad`
  /// when it is non-null.
  Tensor3<Scalar> backward(const Tensor3<Scalar>& x, const Tensor3<Scalar>& dy, ConvGrad<Scalar>* grad) const {
    const int oh = dy.height;
    const int ow = dy.width;
    Tensor3<Scalar> dx(in_channels_, x.height, x.width);
    if (kernel_ == 1 && stride_ == 1 && pad_ == 0) {
      dx.data.noalias() = weight.transpose() * dy.data;
      if (grad) accumulate(grad, x.data, dy);
      return dx;
    }
    MatrixX<Scalar> dcols = weight.transpose() * dy.data;
    col2im(dcols, kernel_, stride_, pad_, oh, ow, dx);
    if (grad) {
      MatrixX<Scalar> cols;
      im2col(x, kernel_, stride_, pad_, oh, ow, cols);
      accumulate(grad, cols, dy);
    }
    return dx;
  }

  template <typename Other>
  Conv2d<Other> cast() const {
    Conv2d<Other> out(in_channels_, out_channels(), kernel_, stride_, pad_);
    out.weight = weight.template cast<Other>();
    out.bias = bias.template cast<Other>();
    return out;
  }

 private:
  void check_input(const Tensor3<Scalar>& x) const {
    if (x.channels() != in_channels_) {
      throw Error(ErrorCode::ShapeMismatch, "conv expects " + std::to_string(in_channels_) + " channels, got " +
                                                std::to_string(x.channels()));
    }
  }

  void accumulate(ConvGrad<Scalar>* grad, const MatrixX<Scalar>& cols, const Tensor3<Scalar>& dy) const {
    if (grad->weight.size() == 0) {
      grad->weight = MatrixX<Scalar>::Zero(weight.rows(), weight.cols());
      grad->bias = VectorX<Scalar>::Zero(bias.size());
    }
    grad->weight.noalias() += dy.data * cols.transpose();
    grad->bias += dy.data.rowwise().sum();
  }

  int in_channels_ = 0;
  int kernel_ = 3;
  int stride_ = 1;
  int pad_ = 1;
};

template <typename Scalar>
Tensor3<Scalar> relu(Tensor3<Scalar> x) {
  x.data = x.data.cwiseMax(Scalar(0));
  return x;
}

/// Uses the ReLU output to gate the incoming gradient.
template <typename Scalar>
Tensor3<Scalar> relu_backward(const Tensor3<Scalar>& y, Tensor3<Scalar> dy) {
  dy.data = (y.data.array() > Scalar(0)).select(dy.data, Scalar(0));
  return dy;
}

template <typename Scalar>
struct PoolResult {
  Tensor3<Scalar> output;
  std::vector<int> argmax;  // flat source pixel per (channel, output pixel)
};

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
/// Ties resolve to the first window element in row-major order.
template <typename Scalar>
PoolResult<Scalar> max_pool2(const Tensor3<Scalar>& x) {
  const int oh = x.height / 2;
  const int ow = x.width / 2;
  PoolResult<Scalar> r{Tensor3<Scalar>(x.channels(), oh, ow), {}};
  r.argmax.resize(static_cast<std::size_t>(x.channels()) * oh * ow);
  std::size_t k = 0;
  for (int c = 0; c < x.channels(); ++c) {
    const Scalar* src = x.data.row(c).data();
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox, ++k) {
        const int base = (2 * oy) * x.width + 2 * ox;
        int best = base;
        const int candidates[3] = {base + 1, base + x.width, base + x.width + 1};
        for (int cand : candidates) {
          if (src[cand] > src[best]) best = cand;
        }
        r.output.data(c, static_cast<Eigen::Index>(oy) * ow + ox) = src[best];
        r.argmax[k] = best;
      }
    }
  }
  return r;
}

template <typename Scalar>
Tensor3<Scalar> max_pool2_backward(const std::vector<int>& argmax, const Tensor3<Scalar>& dy, int in_h, int in_w) {
  Tensor3<Scalar> dx(dy.channels(), in_h, in_w);
  std::size_t k = 0;
  for (int c = 0; c < dy.channels(); ++c) {
    for (Eigen::Index p = 0; p < dy.data.cols(); ++p, ++k) dx.data(c, argmax[k]) += dy.data(c, p);
  }
  return dx;
}

/// Nearest-neighbour upsampling to an explicit size (source pixel = floor(dst * src/dst)).
template <typename Scalar>
Tensor3<Scalar> upsample_nearest(const Tensor3<Scalar>& x, int h, int w) {
  Tensor3<Scalar> y(x.channels(), h, w);
  for (int oy = 0; oy < h; ++oy) {
    const int sy = std::min(static_cast<int>(static_cast<long long>(oy) * x.height / h), x.height - 1);
    for (int ox = 0; ox < w; ++ox) {
      const int sx = std::min(static_cast<int>(static_cast<long long>(ox) * x.width / w), x.width - 1);
      y.data.col(static_cast<Eigen::Index>(oy) * w + ox) = x.data.col(static_cast<Eigen::Index>(sy) * x.width + sx);
    }
  }
  return y;
}

template <typename Scalar>
Tensor3<Scalar> upsample_nearest_backward(const Tensor3<Scalar>& dy, int in_h, int in_w) {
  Tensor3<Scalar> dx(dy.channels(), in_h, in_w);
  for (int oy = 0; oy < dy.height; ++oy) {
    const int sy = std::min(static_cast<int>(static_cast<long long>(oy) * in_h / dy.height), in_h - 1);
    for (int ox = 0; ox < dy.width; ++ox) {
      const int sx = std::min(static_cast<int>(static_cast<long long>(ox) * in_w / dy.width), in_w - 1);
      dx.data.col(static_cast<Eigen::Index>(sy) * in_w + sx) += dy.data.col(static_cast<Eigen::Index>(oy) * dy.width + ox);
    }
  }
  return dx;
}

/// One trainable array and its gradient, viewed as flat storage.
template <typename Scalar>
struct ParamBlock {
  Scalar* value;
  const Scalar* grad;
  Eigen::Index size;
};

/// Adam over a fixed list of parameter blocks. Every `step` call must pass
/// the same blocks in the same order.
template <typename Scalar>
class Adam {
 public:
  explicit Adam(double step_size, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
      : step_size_(step_size), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

  void step(const std::vector<ParamBlock<Scalar>>& blocks) {
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
    if (first_.empty()) {
      for (const auto& b : blocks) {
        first_.push_back(Array::Zero(b.size));
        second_.push_back(Array::Zero(b.size));
      }
    }
    if (first_.size() != blocks.size()) {
      throw Error(ErrorCode::ShapeMismatch, "optimizer parameter list changed between steps");
    }
    ++t_;
    const Scalar b1 = static_cast<Scalar>(beta1_);
    const Scalar b2 = static_cast<Scalar>(beta2_);
    const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(beta1_, t_));
    const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(beta2_, t_));
    const Scalar lr = static_cast<Scalar>(step_size_);
    const Scalar eps = static_cast<Scalar>(epsilon_);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const auto& b = blocks[i];
      const Eigen::Map<const Array> g(b.grad, b.size);
      Eigen::Map<Array> x(b.value, b.size);
      auto& m = first_[i];
      auto& v = second_[i];
      m = b1 * m + (Scalar(1) - b1) * g;
      v = b2 * v + (Scalar(1) - b2) * g.square();
      x -= lr * (m / c1) / ((v / c2).sqrt() + eps);
    }
  }

  int steps_taken() const { return t_; }

 private:
  double step_size_;
  double beta1_;
  double beta2_;
  double epsilon_;
  int t_ = 0;
  std::vector<Eigen::Array<Scalar, Eigen::Dynamic, 1>> first_;
  std::vector<Eigen::Array<Scalar, Eigen::Dynamic, 1>> second_;
};

}  // namespace carpet::nn
