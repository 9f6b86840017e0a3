#include <gtest/gtest.h>

#include "carpet/clip_styler.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using carpet::ClipStylerConfig;
using carpet::StubEmbedder;
using carpet::Tensor3;
using carpet::VectorX;

namespace {

std::vector<double> as_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

TEST(Directional, ExactValues) {
  const Eigen::VectorXd e0 = Eigen::VectorXd::Unit(4, 0), e1 = Eigen::VectorXd::Unit(4, 1);
  EXPECT_EQ(carpet::directional_term<double>(3 * e0, e0).value, 0.0);
  EXPECT_EQ(carpet::directional_term<double>(e1, e0).value, 1.0);
  EXPECT_EQ(carpet::directional_term<double>(-2 * e0, e0).value, 2.0);
  const auto d = carpet::directional_term<double>(Eigen::VectorXd::Zero(4), e0);
  EXPECT_TRUE(d.degenerate);
  EXPECT_EQ(d.value, 1.0);
  EXPECT_TRUE(d.grad_delta.isZero());
  EXPECT_THROW(carpet::directional_term<double>(e0, Eigen::VectorXd::Unit(3, 0)), carpet::Error);
}

TEST(Directional, MatchesOracleAndStaysInRange) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  for (int i = 0; i < 200; ++i) {
    Eigen::VectorXd a(16), b(16);
    for (int j = 0; j < 16; ++j) {
      a[j] = n(rng);
      b[j] = n(rng);
    }
    const double v = carpet::directional_term<double>(a, b).value;
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 2.0);
    EXPECT_LE(oracle::rel_error(v, oracle::directional(as_vec(a), as_vec(b))), 1e-12);
  }
}

TEST(Directional, ImageLossOfContentAgainstItselfIsDegenerate) {
  StubEmbedder<float> emb;
  const auto img = fixture::carpet_image(32, 32);
  EXPECT_EQ(carpet::directional_loss(emb, img, img, carpet::StyleText{"red carpet"}), 1.0);
  const double v = carpet::directional_loss(emb, img, fixture::carpet_image(32, 32, 2), carpet::StyleText{"red carpet"});
  EXPECT_GE(v, 0.0);
  EXPECT_LE(v, 2.0);
}

TEST(Directional, GradientMatchesFiniteDifferences) {
  StubEmbedder<double> emb;
  std::mt19937_64 rng(2);
  const auto content = oracle::random_tensor(rng, 3, 16, 16, 0.0, 1.0);
  const auto out = oracle::random_tensor(rng, 3, 16, 16, 0.0, 1.0);
  const auto dt = carpet::text_direction(emb, carpet::StyleText{"woven geometric"});
  const auto grad = carpet::directional_loss_gradient(emb, content, out, dt);
  auto f = [&](const Tensor3<double>& x) { return carpet::directional_loss(emb, content, x, dt).value; };
  for (const auto& s : oracle::check_gradient(f, out, grad, 12, 3)) EXPECT_LE(s.rel, 1e-3);
}

TEST(PatchLoss, ThresholdSemantics) {
  StubEmbedder<float> emb;
  const auto content = fixture::carpet_image(64, 64, 0).tensor();
  const auto out = fixture::carpet_image(64, 64, 3).tensor();
  const auto dt = carpet::text_direction(emb, carpet::StyleText{"golden medallion"});
  ClipStylerConfig cfg;
  cfg.crop_count = 8;
  const auto crops = carpet::sample_crops(64, 64, cfg, 5);
  ASSERT_EQ(crops.size(), 8u);

  cfg.threshold = -1;
  const auto all = carpet::patch_clip_loss(emb, out, content, dt, crops, cfg);
  EXPECT_EQ(all.kept, 8);
  double mean = 0;
  for (double l : all.crop_losses) mean += l;
  EXPECT_NEAR(all.value, mean / 8, 1e-12);

  cfg.threshold = 3;
  const auto none = carpet::patch_clip_loss(emb, out, content, dt, crops, cfg);
  EXPECT_EQ(none.kept, 0);
  EXPECT_EQ(none.value, 0.0);

  // kept crops are exactly those above the threshold
  cfg.threshold = mean / 8;
  const auto some = carpet::patch_clip_loss(emb, out, content, dt, crops, cfg);
  double kept_sum = 0;
  int kept = 0;
  for (double l : some.crop_losses) {
    if (l > mean / 8) {
      kept_sum += l;
      ++kept;
    }
  }
  EXPECT_EQ(some.kept, kept);
  EXPECT_NEAR(some.value, kept > 0 ? kept_sum / kept : 0.0, 1e-12);

  auto reversed = crops;
  std::reverse(reversed.begin(), reversed.end());
  EXPECT_NEAR(carpet::patch_clip_loss(emb, out, content, dt, reversed, cfg).value, some.value, 1e-12);
}

TEST(PatchLoss, GradientMatchesFiniteDifferences) {
  StubEmbedder<double> emb;
  std::mt19937_64 rng(4);
  const auto content = oracle::random_tensor(rng, 3, 16, 16, 0.0, 1.0);
  const auto out = oracle::random_tensor(rng, 3, 16, 16, 0.0, 1.0);
  const auto dt = carpet::text_direction(emb, carpet::StyleText{"indigo border"});
  ClipStylerConfig cfg;
  cfg.crop_count = 4;
  cfg.crop_size = 8;
  cfg.threshold = -1;
  const auto crops = carpet::sample_crops(16, 16, cfg, 7);
  const auto grad = carpet::patch_clip_loss(emb, out, content, dt, crops, cfg, true).gradient;
  auto f = [&](const Tensor3<double>& x) { return carpet::patch_clip_loss(emb, x, content, dt, crops, cfg).value; };
  for (const auto& s : oracle::check_gradient(f, out, grad, 12, 8)) EXPECT_LE(s.rel, 1e-3);
}

TEST(Crops, DeterministicAndInsideTheImage) {
  ClipStylerConfig cfg;
  cfg.crop_count = 16;
  const auto a = carpet::sample_crops(40, 56, cfg, 3);
  const auto b = carpet::sample_crops(40, 56, cfg, 3);
  const auto c = carpet::sample_crops(40, 56, cfg, 4);
  ASSERT_EQ(a.size(), 16u);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].top, b[i].top);
    EXPECT_EQ(a[i].left, b[i].left);
    EXPECT_EQ(a[i].size, 10);
    EXPECT_GE(a[i].top, 0);
    EXPECT_LE(a[i].top + a[i].size, 40);
    EXPECT_LE(a[i].left + a[i].size, 56);
    differs = differs || a[i].top != c[i].top || a[i].left != c[i].left;
  }
  EXPECT_TRUE(differs);
}

TEST(Crops, AdjointOfTheWarp) {
  std::mt19937_64 rng(5);
  ClipStylerConfig cfg;
  cfg.crop_count = 3;
  const auto img = oracle::random_tensor(rng, 3, 24, 20);
  for (const auto& crop : carpet::sample_crops(24, 20, cfg, 9)) {
    const auto y = carpet::apply_crop(img, crop);
    const auto r = oracle::random_tensor(rng, 3, y.height, y.width);
    Tensor3<double> back(3, 24, 20);
    carpet::apply_crop_adjoint(r, crop, back);
    EXPECT_NEAR((y.data.array() * r.data.array()).sum(), (img.data.array() * back.data.array()).sum(), 1e-10);
  }
}

TEST(StylerNetwork, StartsNearIdentity) {
  const auto img = fixture::carpet_image(64, 64);
  carpet::StylerNetwork<float> net(0);
  const auto y = carpet::ImageTensor::clamped(net.forward(img.tensor()));
  EXPECT_LE(carpet::mean_abs_diff(y, img), 0.05);
}

TEST(StylerNetwork, ParameterGradientMatchesFiniteDifferences) {
  carpet::StylerNetwork<double> net(3);
  std::mt19937_64 rng(6);
  const auto x = oracle::random_tensor(rng, 3, 16, 16, 0.05, 0.95);
  const auto w = oracle::random_tensor(rng, 3, 16, 16);
  auto loss = [&](const carpet::StylerNetwork<double>& n) { return (n.forward(x).data.array() * w.data.array()).sum(); };
  typename carpet::StylerNetwork<double>::Tape tape;
  net.forward(x, &tape);
  net.zero_grad();
  net.parameters();
  net.backward(tape, w);
  std::uniform_int_distribution<int> pick(0, 1 << 30);
  const double h = 1e-6;
  for (std::size_t ci = 0; ci < net.conv_count(); ci += 2) {
    const Eigen::Index n = net.conv(ci).weight.size();
    const Eigen::Index i = pick(rng) % n;
    auto p = net, m = net;
    p.conv(ci).weight.data()[i] += h;
    m.conv(ci).weight.data()[i] -= h;
    const double numeric = (loss(p) - loss(m)) / (2 * h);
    const double analytic = net.grad(ci).weight.data()[i];
    EXPECT_LE(oracle::rel_error(analytic, numeric, 1e-7), 1e-3) << "conv " << ci;
  }
}

TEST(ClipStyler, ZeroIterationsReturnsTheUntrainedNetwork) {
  const auto models = fixture::small_models();
  ClipStylerConfig cfg;
  cfg.iterations = 0;
  const auto img = fixture::carpet_image(64, 64);
  const auto r = carpet::run_clip_styler(img, carpet::StyleText{"crimson rug"}, cfg, *models.encoder, *models.embedder);
  EXPECT_LE(carpet::mean_abs_diff(r.image, img), 0.05);
}

TEST(ClipStyler, ShortRunIsFiniteAndDeterministic) {
  const auto models = fixture::small_models();
  ClipStylerConfig cfg;
  cfg.iterations = 6;
  cfg.crop_count = 8;
  cfg.seed = 11;
  const auto img = fixture::carpet_image(64, 64, 1);
  std::vector<int> seen;
  carpet::IterationObserver obs = [&](const carpet::IterationEvent& e) { seen.push_back(e.iteration); };
  const auto a = carpet::run_clip_styler(img, carpet::StyleText{"blue lattice"}, cfg, *models.encoder, *models.embedder, &obs);
  const auto b = carpet::run_clip_styler(img, carpet::StyleText{"blue lattice"}, cfg, *models.encoder, *models.embedder);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  EXPECT_EQ(a.loss_trace.size(), 6u);
  for (double l : a.loss_trace) EXPECT_TRUE(std::isfinite(l));
  EXPECT_EQ(seen, (std::vector<int>{0, 1, 2, 3, 4, 5, 6}));
  EXPECT_NE(a.image, img);
}

TEST(ClipStyler, ConfigErrors) {
  ClipStylerConfig cfg;
  cfg.crop_count = 0;
  EXPECT_THROW(cfg.validate(), carpet::Error);
  cfg = {};
  cfg.warp_magnitude = 1;
  EXPECT_THROW(cfg.validate(), carpet::Error);
  cfg = {};
  cfg.crop_size = 80;
  EXPECT_THROW(cfg.validate_for(64, 64), carpet::Error);
  EXPECT_THROW(carpet::StyleText{""}.validate(), carpet::Error);
}
