#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

#include "carpet/image.hpp"

namespace carpet {

template <typename Scalar>
struct EmbeddingVector {
  VectorX<Scalar> values;
  bool normalized = true;
};

/// Joint text/image embedding model. Image embeddings are differentiable:
/// `embed_image_backward` returns the vector-Jacobian product with respect
/// to the input pixels.
template <typename Scalar>
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual int dimension() const = 0;
  virtual EmbeddingVector<Scalar> embed_image(const Tensor3<Scalar>& pixels) const = 0;
  virtual Tensor3<Scalar> embed_image_backward(const Tensor3<Scalar>& pixels,
                                               const VectorX<Scalar>& grad_embedding) const = 0;
  virtual EmbeddingVector<Scalar> embed_text(std::string_view text) const = 0;

  EmbeddingVector<Scalar> embed_image(const Image<Scalar>& img) const { return embed_image(img.tensor()); }
};

/// Maximum whitespace-separated tokens accepted by `embed_text`.
inline constexpr int kMaxTextTokens = 75;

/// Rejects empty or over-long prompts; returns the token count.
inline int validate_prompt(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string token;
  int count = 0;
  while (in >> token) ++count;
  if (count == 0) throw Error(ErrorCode::EmptyText, "prompt is empty");
  if (count > kMaxTextTokens) {
    throw Error(ErrorCode::TextTooLong, "prompt has " + std::to_string(count) + " tokens, limit " +
                                            std::to_string(kMaxTextTokens));
  }
  return count;
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Weight-free test double. Text maps to a unit vector drawn from an RNG
/// seeded by the FNV-1a hash of its bytes. Images are area-pooled onto a
/// fixed grid, passed through a seeded random tanh layer and a random
/// projection, then normalized, so the map is smooth in the pixels.
template <typename Scalar>
class StubEmbedder final : public Embedder<Scalar> {
 public:
  struct Settings {
    int dimension = 512;
    int hidden = 256;
    int grid = 8;
    std::uint64_t seed = 0xc11b57ab;
  };

  StubEmbedder() : StubEmbedder(Settings{}) {}

  explicit StubEmbedder(Settings settings) : settings_(settings) {
    const int in = 3 * settings_.grid * settings_.grid;
    std::mt19937_64 rng(settings_.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    hidden_weights_.resize(settings_.hidden, in);
    for (Eigen::Index i = 0; i < hidden_weights_.size(); ++i) {
      hidden_weights_.data()[i] = static_cast<Scalar>(normal(rng) * 2.0 / std::sqrt(static_cast<double>(in)));
    }
    projection_.resize(settings_.dimension, settings_.hidden);
    for (Eigen::Index i = 0; i < projection_.size(); ++i) {
      projection_.data()[i] = static_cast<Scalar>(normal(rng) / std::sqrt(static_cast<double>(settings_.hidden)));
    }
  }

  int dimension() const override { return settings_.dimension; }

  EmbeddingVector<Scalar> embed_text(std::string_view text) const override {
    validate_prompt(text);
    std::mt19937_64 rng(fnv1a64(text) ^ settings_.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    VectorX<Scalar> v(settings_.dimension);
    for (int i = 0; i < settings_.dimension; ++i) v[i] = static_cast<Scalar>(normal(rng));
    v /= v.norm();
    return {std::move(v), true};
  }

  EmbeddingVector<Scalar> embed_image(const Tensor3<Scalar>& pixels) const override {
    const auto f = forward(pixels);
    return {f.raw / f.raw_norm, true};
  }

  Tensor3<Scalar> embed_image_backward(const Tensor3<Scalar>& pixels, const VectorX<Scalar>& grad) const override {
    const auto f = forward(pixels);
    const VectorX<Scalar> e = f.raw / f.raw_norm;
    const VectorX<Scalar> d_raw = (grad - e * e.dot(grad)) / f.raw_norm;
    const VectorX<Scalar> d_hidden =
        (projection_.transpose() * d_raw).array() * (Scalar(1) - f.hidden.array().square());
    const VectorX<Scalar> d_pooled = Scalar(2) * (hidden_weights_.transpose() * d_hidden);
    Tensor3<Scalar> dx(3, pixels.height, pixels.width);
    const int g = settings_.grid;
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < pixels.height; ++y) {
        const int by = y * g / pixels.height;
        for (int x = 0; x < pixels.width; ++x) {
          const int bx = x * g / pixels.width;
          const int bin = (c * g + by) * g + bx;
          dx.at(c, y, x) = d_pooled[bin] / f.counts[(by * g + bx)];
        }
      }
    }
    return dx;
  }

  using Embedder<Scalar>::embed_image;

 private:
  struct Forward {
    VectorX<Scalar> hidden;
    VectorX<Scalar> raw;
    Scalar raw_norm;
    std::vector<Scalar> counts;
  };

  Forward forward(const Tensor3<Scalar>& pixels) const {
    if (pixels.channels() != 3) throw Error(ErrorCode::ShapeMismatch, "embedder expects RGB input");
    const int g = settings_.grid;
    VectorX<Scalar> pooled = VectorX<Scalar>::Zero(3 * g * g);
    std::vector<Scalar> counts(static_cast<std::size_t>(g * g), Scalar(0));
    for (int y = 0; y < pixels.height; ++y) {
      const int by = y * g / pixels.height;
      for (int x = 0; x < pixels.width; ++x) {
        const int bx = x * g / pixels.width;
        counts[static_cast<std::size_t>(by * g + bx)] += Scalar(1);
        for (int c = 0; c < 3; ++c) pooled[(c * g + by) * g + bx] += pixels.at(c, y, x);
      }
    }
    for (int c = 0; c < 3; ++c) {
      for (int b = 0; b < g * g; ++b) {
        const Scalar n = counts[static_cast<std::size_t>(b)];
        pooled[c * g * g + b] = n > 0 ? pooled[c * g * g + b] / n : Scalar(0.5);
      }
    }
    for (auto& n : counts) n = std::max(n, Scalar(1));
    Forward f;
    f.hidden = (hidden_weights_ * ((pooled.array() - Scalar(0.5)) * Scalar(2)).matrix()).array().tanh();
    f.raw = projection_ * f.hidden;
    f.raw_norm = std::max(f.raw.norm(), std::numeric_limits<Scalar>::min());
    f.counts = std::move(counts);
    return f;
  }

  Settings settings_;
  MatrixX<Scalar> hidden_weights_;
  MatrixX<Scalar> projection_;
};

}  // namespace carpet
