#pragma once

#include <cmath>
#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "carpet/encoder.hpp"
#include "carpet/image.hpp"
#include "carpet/models.hpp"

namespace fixture {

namespace fs = std::filesystem;

// Rosette-and-border pattern, loosely like a carpet field.
inline carpet::ImageTensor carpet_image(int h, int w, int variant = 0, bool colored = true) {
  carpet::Tensor3<float> t(3, h, w);
  const double phase = 0.7 * variant;
  const double freq = 3.0 + variant;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = (x + 0.5) / w - 0.5, v = (y + 0.5) / h - 0.5;
      const double r = std::hypot(u, v), a = std::atan2(v, u);
      const double rosette = 0.5 + 0.5 * std::cos(freq * 2 * M_PI * r + (4 + variant) * a + phase);
      const double lattice = 0.5 + 0.5 * std::sin(2 * M_PI * (freq + 2) * u) * std::sin(2 * M_PI * (freq + 1) * v);
      const double border = std::max(std::abs(u), std::abs(v)) > 0.42 ? 1.0 : 0.0;
      const double base = 0.15 + 0.7 * (0.6 * rosette + 0.4 * lattice) * (1 - 0.5 * border);
      double rgb[3] = {base, base, base};
      if (colored) {
        rgb[0] = 0.1 + 0.8 * (0.7 * rosette + 0.3 * border);
        rgb[1] = 0.1 + 0.6 * lattice * (1 - border);
        rgb[2] = 0.2 + 0.6 * (1 - rosette) * (0.5 + 0.5 * std::cos(phase + a));
      }
      for (int c = 0; c < 3; ++c) t.at(c, y, x) = static_cast<float>(std::clamp(rgb[c], 0.0, 1.0));
    }
  }
  return carpet::ImageTensor::from_tensor(std::move(t));
}

inline carpet::ImageTensor noise_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  carpet::Tensor3<float> t(3, h, w);
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data.data()[i] = u(rng);
  return carpet::ImageTensor::from_tensor(std::move(t));
}

// Narrow synthetic VGG16 shared by tests that need an encoder but not its cost.
inline std::shared_ptr<const carpet::Encoder<float>> small_encoder(int width_divisor = 8) {
  return std::make_shared<const carpet::Encoder<float>>(
      carpet::Encoder<float>::synthetic(carpet::EncoderArchitecture::Vgg16, carpet::kSyntheticEncoderSeed, width_divisor));
}

inline carpet::ModelBundle small_models(int width_divisor = 8, int decoder_iterations = 40) {
  carpet::ModelOptions o;
  o.width_divisor = width_divisor;
  o.inversion.iterations = decoder_iterations;
  return carpet::load_models(o);
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("carpet-test-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

}  // namespace fixture
