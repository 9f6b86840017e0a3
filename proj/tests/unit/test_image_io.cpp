#include <gtest/gtest.h>

#include "carpet/image_io.hpp"
#include "support/fixtures.hpp"

namespace fs = std::filesystem;
using carpet::ErrorCode;
using carpet::ImageTensor;

namespace {

const fs::path kFixtures = CARPET_FIXTURE_DIR;

ErrorCode decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    carpet::decode_image(bytes);
  } catch (const carpet::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "decode accepted bad bytes";
  return ErrorCode::Io;
}

}  // namespace

TEST(ImageIo, WhiteAndBlackPngs) {
  fixture::TempDir dir;
  carpet::save_png(ImageTensor::filled(2, 2, 1, 1, 1), dir / "white.png");
  carpet::save_png(ImageTensor::filled(2, 2, 0, 0, 0), dir / "black.png");
  EXPECT_EQ(carpet::load_image(dir / "white.png").tensor().data.minCoeff(), 1.f);
  EXPECT_EQ(carpet::load_image(dir / "black.png").tensor().data.maxCoeff(), 0.f);
  EXPECT_FALSE(fs::exists(dir / "white.png.tmp"));
}

TEST(ImageIo, EightBitLevelScaling) {
  const float level = 128.f / 255.f;
  const auto png = carpet::encode_png(ImageTensor::filled(3, 5, level, level, level));
  const auto back = carpet::decode_image(png);
  EXPECT_FLOAT_EQ(back(2, 4, 1), 128.f / 255.f);
  EXPECT_NEAR(back(0, 0, 0), 0.50196, 1e-5);
}

TEST(ImageIo, RoundTripWithinOneLevel) {
  const auto img = fixture::noise_image(19, 27, 4);
  const auto back = carpet::decode_image(carpet::encode_png(img));
  const double worst = (img.tensor().data - back.tensor().data).cwiseAbs().maxCoeff();
  EXPECT_LE(worst, 0.5 / 255.0 + 1e-7);
  // a second trip through 8 bits is lossless
  EXPECT_EQ(carpet::decode_image(carpet::encode_png(back)), back);
}

TEST(ImageIo, DecodesFixturePng) {
  const auto img = carpet::load_image(kFixtures / "gradient.png");
  ASSERT_EQ(img.height(), 12);
  ASSERT_EQ(img.width(), 16);
  for (int y = 0; y < 12; ++y) {
    for (int x = 0; x < 16; ++x) {
      EXPECT_FLOAT_EQ(img(y, x, 0), (x * 16) / 255.f);
      EXPECT_FLOAT_EQ(img(y, x, 1), (y * 20) / 255.f);
      EXPECT_FLOAT_EQ(img(y, x, 2), (255 - x * 8) / 255.f);
    }
  }
}

TEST(ImageIo, DecodesFixtureJpegNearSource) {
  const auto jpg = carpet::load_image(kFixtures / "gradient.jpg");
  const auto png = carpet::load_image(kFixtures / "gradient.png");
  EXPECT_EQ(carpet::sniff_media_type(carpet::read_file(kFixtures / "gradient.jpg")), carpet::MediaType::Jpeg);
  EXPECT_LT(carpet::mean_abs_diff(jpg, png), 4.0 / 255.0);
}

TEST(ImageIo, GrayscaleFileReplicatedToThreeChannels) {
  const auto img = carpet::load_image(kFixtures / "gray.png");
  EXPECT_TRUE(carpet::is_grayscale(img));
  EXPECT_FLOAT_EQ(img(5, 3, 2), (5 * 20) / 255.f);
}

TEST(ImageIo, AlphaAndSixteenBitInputsStillDecode) {
  const auto rgba = carpet::load_image(kFixtures / "rgba.png");
  EXPECT_EQ(rgba.height(), 12);
  EXPECT_EQ(rgba.width(), 16);
  const auto deep = carpet::load_image(kFixtures / "deep16.png");
  EXPECT_EQ(deep.width(), 16);
  EXPECT_NEAR(deep(0, 3, 0), 48.f / 255.f, 1.f / 255.f);
}

TEST(ImageIo, Errors) {
  EXPECT_EQ(decode_error(carpet::read_file(kFixtures / "not_an_image.gif")), ErrorCode::UnsupportedFormat);
  EXPECT_EQ(decode_error({}), ErrorCode::UnsupportedFormat);

  auto png = carpet::read_file(kFixtures / "gradient.png");
  png.resize(40);
  EXPECT_EQ(decode_error(png), ErrorCode::CorruptImage);

  auto jpg = carpet::read_file(kFixtures / "gradient.jpg");
  jpg.resize(64);
  EXPECT_EQ(decode_error(jpg), ErrorCode::CorruptImage);

  try {
    carpet::load_image(kFixtures / "missing.png");
    FAIL();
  } catch (const carpet::Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FileNotFound);
  }
}
