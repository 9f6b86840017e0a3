#include <gtest/gtest.h>

#include "carpet/cams.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using carpet::ColorPalette;
using carpet::ImageTensor;
using carpet::Rgb;
using carpet::Tensor3;

namespace {

ImageTensor halves(const Rgb& a, const Rgb& b, int h = 32, int w = 32) {
  Tensor3<float> t(3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) t.at(c, y, x) = static_cast<float>(x < w / 2 ? a[c] : b[c]);
  return ImageTensor::from_tensor(t);
}

}  // namespace

TEST(Palette, SolidImageGivesOneColor) {
  const auto p = carpet::extract_palette(ImageTensor::filled(33, 35, 0.8f, 0.3f, 0.1f), 5);
  ASSERT_EQ(p.size(), 1);
  EXPECT_NEAR((p.colors[0] - Rgb(0.8, 0.3, 0.1)).cwiseAbs().maxCoeff(), 0.0, 1e-6);
}

TEST(Palette, TwoHalvesRecoverBothColors) {
  const Rgb red(0.9, 0.1, 0.1), teal(0.1, 0.6, 0.6);
  const auto p = carpet::extract_palette(halves(red, teal), 2, 3);
  ASSERT_EQ(p.size(), 2);
  const bool order = (p.colors[0] - red).norm() < (p.colors[0] - teal).norm();
  EXPECT_LE((p.colors[order ? 0 : 1] - red).cwiseAbs().maxCoeff(), 2.0 / 255);
  EXPECT_LE((p.colors[order ? 1 : 0] - teal).cwiseAbs().maxCoeff(), 2.0 / 255);
}

TEST(Palette, SizeOneIsTheClusterCentroid) {
  const auto img = fixture::carpet_image(32, 32, 1);
  const auto p = carpet::extract_palette(img, 1);
  ASSERT_EQ(p.size(), 1);
  // centroid in Lab, mapped back
  Eigen::Vector3d lab = Eigen::Vector3d::Zero();
  const auto& d = img.tensor().data;
  for (Eigen::Index i = 0; i < d.cols(); ++i) lab += carpet::color::rgb_to_lab(Rgb(d(0, i), d(1, i), d(2, i)));
  lab /= static_cast<double>(d.cols());
  EXPECT_LE((p.colors[0] - carpet::color::lab_to_rgb(lab)).norm(), 1e-6);
}

TEST(Palette, DeterministicAndBounded) {
  const auto img = fixture::carpet_image(48, 48, 2);
  const auto a = carpet::extract_palette(img, 5, 9);
  const auto b = carpet::extract_palette(img, 5, 9);
  ASSERT_EQ(a.size(), b.size());
  for (int i = 0; i < a.size(); ++i) EXPECT_EQ(a.colors[i], b.colors[i]);
  EXPECT_LE(a.size(), 5);
  for (int i = 0; i < a.size(); ++i)
    for (int j = i + 1; j < a.size(); ++j) EXPECT_GT((a.colors[i] - a.colors[j]).norm(), carpet::kPaletteMergeThreshold);
}

TEST(Palette, LabRoundTrip) {
  for (const Rgb c : {Rgb(0, 0, 0), Rgb(1, 1, 1), Rgb(0.2, 0.7, 0.4), Rgb(0.9, 0.05, 0.5)}) {
    EXPECT_LE((carpet::color::lab_to_rgb(carpet::color::rgb_to_lab(c)) - c).norm(), 1e-6);
  }
}

TEST(MergePalettes, Examples) {
  const ColorPalette p{{Rgb(0.1, 0.1, 0.1), Rgb(0.9, 0.2, 0.2)}};
  const auto same = carpet::merge_palettes(p, p);
  ASSERT_EQ(same.size(), 2);
  EXPECT_EQ(same.colors[0], p.colors[0]);
  EXPECT_EQ(same.colors[1], p.colors[1]);

  const ColorPalette q{{Rgb(0.2, 0.9, 0.2), Rgb(0.2, 0.2, 0.9), Rgb(1, 1, 1)}};
  EXPECT_EQ(carpet::merge_palettes(p, q).size(), 5);

  const auto blacks = carpet::merge_palettes(ColorPalette{{Rgb(0, 0, 0)}}, ColorPalette{{Rgb(0.04, 0.04, 0.04)}});
  ASSERT_EQ(blacks.size(), 1);
  EXPECT_NEAR(blacks.colors[0][0], 0.02, 1e-12);

  const auto capped = carpet::merge_palettes(p, q, carpet::kPaletteMergeThreshold, 3);
  EXPECT_EQ(capped.size(), 3);
}

TEST(MergePalettes, SortedByLuminance) {
  const auto m = carpet::merge_palettes(ColorPalette{{Rgb(1, 1, 1), Rgb(0.5, 0, 0)}}, ColorPalette{{Rgb(0, 0, 0.6)}});
  for (int i = 1; i < m.size(); ++i) {
    EXPECT_LE(carpet::color::luminance(m.colors[i - 1]), carpet::color::luminance(m.colors[i]));
  }
}

TEST(ColorMasks, Examples) {
  const auto img = fixture::carpet_image(20, 24);
  const auto ones = carpet::color_masks(img, ColorPalette{{Rgb(0.3, 0.3, 0.3)}});
  EXPECT_TRUE((ones.masks.data.array() == 1.f).all());

  const Rgb a(0.9, 0.1, 0.1), b(0.1, 0.1, 0.9);
  const auto m = carpet::color_masks(halves(a, b, 4, 4), ColorPalette{{a, b}}, 0.25);
  EXPECT_GE(m.masks.at(0, 0, 0), 0.99f);
  EXPECT_GE(m.masks.at(1, 0, 3), 0.99f);

  const auto mid = carpet::color_masks(ImageTensor::filled(1, 1, 0.5f, 0.1f, 0.5f), ColorPalette{{a, b}});
  EXPECT_FLOAT_EQ(mid.masks.at(0, 0, 0), 0.5f);
  EXPECT_FLOAT_EQ(mid.masks.at(1, 0, 0), 0.5f);
}

TEST(ColorMasks, PartitionOfUnity) {
  for (int v = 0; v < 4; ++v) {
    const auto img = fixture::carpet_image(37, 29, v);
    const auto m = carpet::color_masks(img, carpet::extract_palette(img, 5, v), 0.1);
    EXPECT_NO_THROW(carpet::check_partition_of_unity(m));
    const auto r = carpet::resize_masks(m, 5, 4);
    EXPECT_NO_THROW(carpet::check_partition_of_unity(r));
  }
}

TEST(ResizeMasks, Examples) {
  const auto img = fixture::carpet_image(16, 16);
  const auto m = carpet::color_masks(img, carpet::extract_palette(img, 3));
  EXPECT_EQ(carpet::resize_masks(m, 16, 16).masks, m.masks);

  const auto ones = carpet::color_masks(img, ColorPalette{{Rgb(0.5, 0.5, 0.5)}});
  EXPECT_TRUE((carpet::resize_masks(ones, 3, 5).masks.data.array() == 1.f).all());

  carpet::WeightMaskSet<double> half{ColorPalette{{Rgb(0, 0, 0), Rgb(1, 1, 1)}}, Tensor3<double>(2, 2, 2)};
  half.masks.data << 1, 0, 1, 0, 0, 1, 0, 1;
  const auto one = carpet::resize_masks(half, 1, 1);
  EXPECT_DOUBLE_EQ(one.masks.at(0, 0, 0), 0.5);
  EXPECT_DOUBLE_EQ(one.masks.at(1, 0, 0), 0.5);
}

TEST(WeightedGram, Examples) {
  std::mt19937_64 rng(1);
  const carpet::FeatureMap<double> f{oracle::random_tensor(rng, 4, 3, 5), "relu1_1"};
  const Eigen::RowVectorXd ones = Eigen::RowVectorXd::Ones(15);
  EXPECT_EQ(carpet::weighted_gram(f, ones).data, carpet::gram_matrix(f).data);
  EXPECT_TRUE(carpet::weighted_gram(f, Eigen::RowVectorXd::Zero(15)).data.isZero());

  carpet::FeatureMap<double> g{Tensor3<double>(1, 1, 2), "relu1_1"};
  g.values.data << 1, 2;
  EXPECT_EQ(carpet::weighted_gram(g, Eigen::RowVector2d(1, 0)).data(0, 0), 1.0);
  EXPECT_THROW(carpet::weighted_gram(f, Eigen::RowVectorXd::Ones(14)), carpet::Error);
}

TEST(CamsLoss, IdentityScalingAndPaletteMismatch) {
  std::mt19937_64 rng(2);
  const auto s = oracle::random_tensor(rng, 3, 4, 4);
  const auto masks = carpet::color_masks(fixture::noise_image(4, 4, 1).cast<double>(),
                                         ColorPalette{{Rgb(0, 0, 0), Rgb(1, 1, 1)}});
  const carpet::FeatureMap<double> sf{s, "relu1_1"};
  EXPECT_EQ(carpet::cams_layer_loss(sf, sf, masks, masks), 0.0);

  const carpet::FeatureMap<double> zero{Tensor3<double>(3, 4, 4), "relu1_1"};
  carpet::FeatureMap<double> doubled = sf;
  doubled.values.data *= 2;
  EXPECT_NEAR(carpet::cams_layer_loss(zero, doubled, masks, masks), 16 * carpet::cams_layer_loss(zero, sf, masks, masks),
              1e-9 * carpet::cams_layer_loss(zero, doubled, masks, masks));

  auto other = masks;
  other.palette.colors[1] = Rgb(0.5, 0.5, 0.5);
  try {
    carpet::cams_layer_loss(sf, sf, masks, other);
    FAIL();
  } catch (const carpet::Error& e) {
    EXPECT_EQ(e.code(), carpet::ErrorCode::PaletteMismatch);
  }
}

TEST(CamsLoss, SingleColorEqualsGlobalGramDiscrepancy) {
  std::mt19937_64 rng(3);
  const ColorPalette one{{Rgb(0.4, 0.5, 0.6)}};
  carpet::FeatureSet<double> style, out;
  carpet::LayerMasks<double> sm, om;
  double expected = 0;
  for (const std::string layer : {"relu1_1", "relu2_1", "relu3_1"}) {
    const int h = 2 + static_cast<int>(layer[4] - '0');
    style[layer] = {oracle::random_tensor(rng, 5, h, h + 1), layer};
    out[layer] = {oracle::random_tensor(rng, 5, h, h + 1), layer};
    const auto masks = carpet::color_masks(fixture::noise_image(h, h + 1, h).cast<double>(), one);
    sm.emplace(layer, masks);
    om.emplace(layer, masks);
    expected += (carpet::gram_matrix(style[layer]).data - carpet::gram_matrix(out[layer]).data).squaredNorm();
  }
  EXPECT_EQ(carpet::cams_style_loss(style, out, sm, om), expected);
}

TEST(Cams, StyleEqualsContentIsAFixedPoint) {
  const auto enc = fixture::small_encoder();
  const auto img = fixture::carpet_image(32, 32);
  carpet::CamsConfig cfg;
  cfg.iterations = 3;
  const auto r = carpet::run_cams(img, img, cfg, *enc);
  EXPECT_EQ(r.loss_trace.front(), 0.0);
  EXPECT_EQ(r.image, img);
}

TEST(Cams, PaletteSizeOneMatchesGatysAtIterationZero) {
  const auto enc = fixture::small_encoder();
  const auto content = fixture::carpet_image(32, 32, 0);
  const auto style = fixture::carpet_image(32, 32, 2);
  carpet::CamsConfig cams;
  cams.palette_size = 1;
  cams.iterations = 0;
  cams.style_layers = {"relu2_1"};
  const auto rc = carpet::run_cams(content, style, cams, *enc);
  EXPECT_EQ(rc.palette.size(), 1);

  // Gatys normalizes by 1/(4 C^2 (HW)^2); scale lambda so both weigh the raw discrepancy equally
  const auto f = enc->encode(content, {"relu2_1"}).at("relu2_1");
  carpet::GatysConfig gatys;
  gatys.iterations = 0;
  gatys.style_layers = cams.style_layers;
  gatys.style_weight = cams.style_weight / carpet::style_layer_weight(f);
  const auto rg = carpet::run_gatys(content, style, gatys, *enc);
  EXPECT_NEAR(rc.loss_trace[0], rg.loss_trace[0], 1e-5 * rg.loss_trace[0]);
}

TEST(Cams, DeterministicAndDecreasing) {
  const auto enc = fixture::small_encoder();
  const auto content = fixture::carpet_image(48, 48, 0, false);
  const auto style = fixture::carpet_image(48, 48, 3);
  carpet::CamsConfig cfg;
  cfg.iterations = 12;
  cfg.refresh_every = 5;
  const auto a = carpet::run_cams(content, style, cfg, *enc);
  const auto b = carpet::run_cams(content, style, cfg, *enc);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  EXPECT_LE(a.best_trace.back(), a.loss_trace.front());
  EXPECT_NO_THROW(carpet::check_partition_of_unity(a.output_masks));
  EXPECT_NO_THROW(carpet::check_partition_of_unity(a.style_masks));
  EXPECT_LE(a.palette.size(), cfg.palette_size);
}

TEST(Cams, ConfigValidation) {
  carpet::CamsConfig cfg;
  cfg.palette_size = 0;
  EXPECT_THROW(cfg.validate(), carpet::Error);
  cfg = {};
  cfg.palette_size = 17;
  EXPECT_THROW(cfg.validate(), carpet::Error);
  cfg = {};
  cfg.mask_sigma = 0;
  EXPECT_THROW(cfg.validate(), carpet::Error);
  EXPECT_NO_THROW(carpet::CamsConfig{}.validate());
}
