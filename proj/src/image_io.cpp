#include "carpet/image_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <iterator>

// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

namespace carpet {

namespace {

ImageTensor from_rgb8(const std::uint8_t* rgb, int height, int width) {
  Tensor3<float> t(3, height, width);
  const std::size_t n = static_cast<std::size_t>(height) * width;
  for (std::size_t p = 0; p < n; ++p) {
    for (int c = 0; c < 3; ++c) {
      t.data(c, static_cast<Eigen::Index>(p)) = static_cast<float>(rgb[3 * p + c]) / 255.0f;
    }
  }
  return ImageTensor::from_tensor(std::move(t));
}

ImageTensor decode_png(std::span<const std::uint8_t> bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::CorruptImage, std::string("png header: ") + image.message);
  }
  // 16-bit files carry no gamma to libpng's simplified reader, so keep the raw
  // samples instead of letting it re-encode them as linear light
  const bool deep = (image.format & PNG_FORMAT_FLAG_LINEAR) != 0;
  image.format = deep ? PNG_FORMAT_LINEAR_RGB : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::CorruptImage, "png data: " + msg);
  }
  const int h = static_cast<int>(image.height), w = static_cast<int>(image.width);
  if (!deep) return from_rgb8(buffer.data(), h, w);
  Tensor3<float> t(3, h, w);
  const auto* samples = reinterpret_cast<const std::uint16_t*>(buffer.data());
  for (Eigen::Index p = 0; p < t.data.cols(); ++p) {
    for (int c = 0; c < 3; ++c) t.data(c, p) = static_cast<float>(samples[3 * p + c]) / 65535.0f;
  }
  return ImageTensor::from_tensor(std::move(t));
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

// Kept free of objects with destructors because of the longjmp error path.
bool decode_jpeg_raw(std::span<const std::uint8_t> bytes, std::vector<std::uint8_t>& out, int& height,
                     int& width, char* message) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    std::snprintf(message, JMSG_LENGTH_MAX, "%s", err.message);
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  height = static_cast<int>(cinfo.output_height);
  width = static_cast<int>(cinfo.output_width);
  out.resize(static_cast<std::size_t>(height) * width * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

ImageTensor decode_jpeg(std::span<const std::uint8_t> bytes) {
  std::vector<std::uint8_t> rgb;
  int height = 0;
  int width = 0;
  char message[JMSG_LENGTH_MAX] = {0};
  if (!decode_jpeg_raw(bytes, rgb, height, width, message)) {
    throw Error(ErrorCode::CorruptImage, std::string("jpeg: ") + message);
  }
  return from_rgb8(rgb.data(), height, width);
}

}  // namespace

std::string_view mime_type(MediaType type) {
  return type == MediaType::Png ? "image/png" : "image/jpeg";
}

std::optional<MediaType> sniff_media_type(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t kPng[] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (bytes.size() >= sizeof(kPng) && std::equal(std::begin(kPng), std::end(kPng), bytes.begin())) {
    return MediaType::Png;
  }
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
    return MediaType::Jpeg;
  }
  return std::nullopt;
}

ImageTensor decode_image(std::span<const std::uint8_t> bytes) {
  const auto type = sniff_media_type(bytes);
  if (!type) throw Error(ErrorCode::UnsupportedFormat, "not a PNG or JPEG stream");
  return *type == MediaType::Png ? decode_png(bytes) : decode_jpeg(bytes);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(ErrorCode::FileNotFound, path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ImageTensor load_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_image(bytes);
}

std::vector<std::uint8_t> encode_png(const ImageTensor& img) {
  const int h = img.height();
  const int w = img.width();
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(h) * w * 3);
  const auto& d = img.tensor().data;
  for (Eigen::Index p = 0; p < d.cols(); ++p) {
    for (int c = 0; c < 3; ++c) {
      const float v = std::clamp(d(c, p), 0.0f, 1.0f);
      rgb[3 * p + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, rgb.data(), 0, nullptr)) {
    throw Error(ErrorCode::Io, std::string("png encode: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, rgb.data(), 0, nullptr)) {
    throw Error(ErrorCode::Io, std::string("png encode: ") + image.message);
  }
  out.resize(size);
  return out;
}

void save_png(const ImageTensor& img, const std::filesystem::path& path) {
  write_file_atomic(path, encode_png(img));
}

}  // namespace carpet
