#include <gtest/gtest.h>

#include "carpet/nn.hpp"
#include "support/oracles.hpp"

using carpet::Tensor3;
namespace nn = carpet::nn;

namespace {

double dot(const Tensor3<double>& a, const Tensor3<double>& b) { return (a.data.array() * b.data.array()).sum(); }

nn::Conv2d<double> random_conv(std::mt19937_64& rng, int in, int out, int k, int stride) {
  nn::Conv2d<double> conv(in, out, k, stride);
  conv.init_he(rng);
  std::normal_distribution<double> n(0, 0.1);
  for (int i = 0; i < out; ++i) conv.bias[i] = n(rng);
  return conv;
}

}  // namespace

TEST(Conv2d, MatchesDirectSummation) {
  std::mt19937_64 rng(1);
  for (int stride : {1, 2}) {
    auto conv = random_conv(rng, 3, 4, 3, stride);
    const auto x = oracle::random_tensor(rng, 3, 7, 6);
    const auto y = conv.forward(x);
    ASSERT_EQ(y.height, (7 + 2 - 3) / stride + 1);
    for (int o = 0; o < 4; ++o) {
      for (int oy = 0; oy < y.height; ++oy) {
        for (int ox = 0; ox < y.width; ++ox) {
          double s = conv.bias[o];
          for (int c = 0; c < 3; ++c)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int iy = oy * stride - 1 + ky, ix = ox * stride - 1 + kx;
                if (iy < 0 || ix < 0 || iy >= 7 || ix >= 6) continue;
                s += conv.weight(o, (c * 3 + ky) * 3 + kx) * x.at(c, iy, ix);
              }
          EXPECT_NEAR(y.at(o, oy, ox), s, 1e-12);
        }
      }
    }
  }
}

TEST(Conv2d, BackwardIsTheAdjoint) {
  std::mt19937_64 rng(2);
  for (int k : {1, 3}) {
    for (int stride : {1, 2}) {
      auto conv = random_conv(rng, 3, 5, k, stride);
      conv.bias.setZero();
      const auto x = oracle::random_tensor(rng, 3, 9, 8);
      const auto y = conv.forward(x);
      const auto dy = oracle::random_tensor(rng, 5, y.height, y.width);
      const auto dx = conv.backward(x, dy, nullptr);
      EXPECT_NEAR(dot(y, dy), dot(x, dx), 1e-10 * std::max(1.0, std::abs(dot(y, dy))));
    }
  }
}

TEST(Conv2d, ParameterGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  auto conv = random_conv(rng, 2, 3, 3, 2);
  const auto x = oracle::random_tensor(rng, 2, 6, 7);
  const auto w = oracle::random_tensor(rng, 3, conv.out_height(6), conv.out_width(7));
  auto loss = [&](const nn::Conv2d<double>& c) { return dot(c.forward(x), w); };
  nn::ConvGrad<double> g;
  conv.backward(x, w, &g);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < conv.weight.size(); i += 5) {
    auto p = conv, m = conv;
    p.weight.data()[i] += h;
    m.weight.data()[i] -= h;
    EXPECT_NEAR(g.weight.data()[i], (loss(p) - loss(m)) / (2 * h), 1e-6);
  }
  for (int i = 0; i < 3; ++i) {
    auto p = conv, m = conv;
    p.bias[i] += h;
    m.bias[i] -= h;
    EXPECT_NEAR(g.bias[i], (loss(p) - loss(m)) / (2 * h), 1e-6);
  }
}

TEST(Im2col, Col2imIsTheAdjoint) {
  std::mt19937_64 rng(4);
  const auto x = oracle::random_tensor(rng, 2, 8, 9);
  const int k = 3, s = 2, pad = 1;
  const int oh = nn::conv_out_size(8, k, s, pad), ow = nn::conv_out_size(9, k, s, pad);
  carpet::MatrixX<double> cols;
  nn::im2col(x, k, s, pad, oh, ow, cols);
  carpet::MatrixX<double> r = carpet::MatrixX<double>::Random(cols.rows(), cols.cols());
  Tensor3<double> back(2, 8, 9);
  nn::col2im(r, k, s, pad, oh, ow, back);
  EXPECT_NEAR((cols.array() * r.array()).sum(), dot(x, back), 1e-10);
}

TEST(MaxPool, PicksFirstMaximumAndRoutesGradient) {
  Tensor3<double> x(1, 2, 4);
  x.data << 1, 5, 2, 2, 5, 0, 2, 1;
  const auto p = nn::max_pool2(x);
  EXPECT_EQ(p.output.at(0, 0, 0), 5);
  EXPECT_EQ(p.output.at(0, 0, 1), 2);
  EXPECT_EQ(p.argmax[0], 1);  // first 5 in row-major order
  EXPECT_EQ(p.argmax[1], 2);
  Tensor3<double> dy(1, 1, 2);
  dy.data << 3, 7;
  const auto dx = nn::max_pool2_backward(p.argmax, dy, 2, 4);
  EXPECT_EQ(dx.data.sum(), 10);
  EXPECT_EQ(dx.at(0, 0, 1), 3);
  EXPECT_EQ(dx.at(0, 0, 2), 7);
}

TEST(MaxPool, DropsOddTrailingRow) {
  std::mt19937_64 rng(5);
  const auto p = nn::max_pool2(oracle::random_tensor(rng, 2, 5, 7));
  EXPECT_EQ(p.output.height, 2);
  EXPECT_EQ(p.output.width, 3);
}

TEST(Upsample, BackwardIsTheAdjoint) {
  std::mt19937_64 rng(6);
  const auto x = oracle::random_tensor(rng, 2, 3, 5);
  const auto y = nn::upsample_nearest(x, 7, 10);
  const auto r = oracle::random_tensor(rng, 2, 7, 10);
  EXPECT_NEAR(dot(y, r), dot(x, nn::upsample_nearest_backward(r, 3, 5)), 1e-12);
}

TEST(Adam, MinimizesAQuadratic) {
  Eigen::VectorXd x = Eigen::VectorXd::Constant(4, 3.0);
  Eigen::VectorXd g(4);
  nn::Adam<double> adam(0.1);
  for (int i = 0; i < 500; ++i) {
    g = 2 * (x - Eigen::VectorXd::LinSpaced(4, -1, 1));
    adam.step({{x.data(), g.data(), x.size()}});
  }
  EXPECT_LT((x - Eigen::VectorXd::LinSpaced(4, -1, 1)).norm(), 1e-2);
  EXPECT_EQ(adam.steps_taken(), 500);
}

TEST(Adam, FirstStepMovesByTheStepSize) {
  double x = 1.0, g = 123.0;
  nn::Adam<double> adam(0.05);
  adam.step({{&x, &g, 1}});
  EXPECT_NEAR(x, 0.95, 1e-6);
}
