#include "sandsim/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include <png.h>

#include "sandsim/error.hpp"

namespace sandsim {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::MissingMask: return "MissingMask";
    case ErrorKind::DuplicateRegionId: return "DuplicateRegionId";
    case ErrorKind::UnclassifiedStroke: return "UnclassifiedStroke";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::SingularDecomposition: return "SingularDecomposition";
    case ErrorKind::EmptySequence: return "EmptySequence";
    case ErrorKind::DegenerateReference: return "DegenerateReference";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Image::Image(int width, int height, const Rgb& fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) fail(ErrorKind::InvalidArgument, "negative image size");
  data_.resize(3 * pixel_count());
  for (std::size_t i = 0; i < pixel_count(); ++i) {
    data_[3 * i] = fill[0];
    data_[3 * i + 1] = fill[1];
    data_[3 * i + 2] = fill[2];
  }
}

std::vector<double> Image::luma() const {
  std::vector<double> out(pixel_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.299 * data_[3 * i] + 0.587 * data_[3 * i + 1] + 0.114 * data_[3 * i + 2];
  }
  return out;
}

double Image::mean() const {
  if (data_.empty()) return 0.0;
  return std::accumulate(data_.begin(), data_.end(), 0.0) / static_cast<double>(data_.size());
}

bool Mask::contains(double x, double y) const {
  const int ix = static_cast<int>(std::lround(x));
  const int iy = static_cast<int>(std::lround(y));
  if (ix < 0 || iy < 0 || ix >= width || iy >= height) return false;
  return at(ix, iy);
}

std::size_t Mask::area() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

double srgb8_to_linear(std::uint8_t v) {
  return std::pow(static_cast<double>(v) / 255.0, kDisplayGamma);
}

std::uint8_t linear_to_srgb8(double v) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  const double encoded = std::pow(clamped, 1.0 / kDisplayGamma);
  return static_cast<std::uint8_t>(std::lround(encoded * 255.0));
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::IoError, "short write to " + path.string());
}

std::vector<std::uint8_t> encode_raw(const std::uint8_t* pixels, int width, int height,
                                     png_uint_32 format, int channels) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  png_alloc_size_t size = 0;
  const png_int_32 stride = width * channels;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels, stride, nullptr)) {
    fail(ErrorKind::IoError, std::string("png sizing failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels, stride, nullptr)) {
    fail(ErrorKind::IoError, std::string("png encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

std::vector<std::uint8_t> decode_raw(std::span<const std::uint8_t> bytes, png_uint_32 format,
                                     int& width, int& height) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    fail(ErrorKind::IoError, std::string("png header: ") + image.message);
  }
  image.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    fail(ErrorKind::IoError, std::string("png decode: ") + image.message);
  }
  width = static_cast<int>(image.width);
  height = static_cast<int>(image.height);
  return buffer;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& img) {
  std::vector<std::uint8_t> rgb(3 * img.pixel_count());
  const auto src = img.data();
  std::transform(src.begin(), src.end(), rgb.begin(), linear_to_srgb8);
  return encode_raw(rgb.data(), img.width(), img.height(), PNG_FORMAT_RGB, 3);
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  int w = 0, h = 0;
  const auto rgb = decode_raw(bytes, PNG_FORMAT_RGB, w, h);
  Image img(w, h);
  auto dst = img.data();
  std::transform(rgb.begin(), rgb.end(), dst.begin(), srgb8_to_linear);
  return img;
}

Image read_png(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_png(bytes);
  } catch (const Error& e) {
    fail(ErrorKind::IoError, path.string() + ": " + e.what());
  }
}

void write_png(const std::filesystem::path& path, const Image& img) {
  write_file(path, encode_png(img));
}

Mask read_mask_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::MissingMask, "mask not found: " + path.string());
  const auto bytes = read_file(path);
  Mask mask;
  const auto gray = decode_raw(bytes, PNG_FORMAT_GRAY, mask.width, mask.height);
  mask.bits.resize(gray.size());
  std::transform(gray.begin(), gray.end(), mask.bits.begin(),
                 [](std::uint8_t v) { return static_cast<std::uint8_t>(v != 0); });
  return mask;
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  std::vector<std::uint8_t> gray(mask.bits.size());
  std::transform(mask.bits.begin(), mask.bits.end(), gray.begin(),
                 [](std::uint8_t v) { return static_cast<std::uint8_t>(v ? 255 : 0); });
  write_file(path, encode_raw(gray.data(), mask.width, mask.height, PNG_FORMAT_GRAY, 1));
}

std::vector<std::uint8_t> to_rgba8(const Image& img) {
  std::vector<std::uint8_t> out(4 * img.pixel_count());
  const auto src = img.data();
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    out[4 * i] = linear_to_srgb8(src[3 * i]);
    out[4 * i + 1] = linear_to_srgb8(src[3 * i + 1]);
    out[4 * i + 2] = linear_to_srgb8(src[3 * i + 2]);
    out[4 * i + 3] = 255;
  }
  return out;
}

void write_npy(const std::filesystem::path& path, const Image& img) {
  std::ostringstream dict;
  dict << "{'descr': '<f4', 'fortran_order': False, 'shape': (" << img.height() << ", "
       << img.width() << ", 3), }";
  std::string header = dict.str();
  // magic(6) + version(2) + header_len(2) + header, padded to 64 bytes, newline-terminated
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');

  std::vector<std::uint8_t> bytes = {0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0};
  const auto len = static_cast<std::uint16_t>(header.size());
  bytes.push_back(static_cast<std::uint8_t>(len & 0xff));
  bytes.push_back(static_cast<std::uint8_t>(len >> 8));
  bytes.insert(bytes.end(), header.begin(), header.end());
  for (double v : img.data()) {
    const float f = static_cast<float>(v);
    std::uint8_t raw[4];
    std::memcpy(raw, &f, 4);  // little-endian hosts only
    bytes.insert(bytes.end(), raw, raw + 4);
  }
  write_file(path, bytes);
}

Image read_npy(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 10 || bytes[0] != 0x93 || std::memcmp(bytes.data() + 1, "NUMPY", 5) != 0) {
    fail(ErrorKind::ParseError, "not an npy file: " + path.string());
  }
  const std::size_t header_len = bytes[8] | (static_cast<std::size_t>(bytes[9]) << 8);
  const std::string header(bytes.begin() + 10, bytes.begin() + 10 + static_cast<long>(header_len));
  if (header.find("'<f4'") == std::string::npos) fail(ErrorKind::ParseError, "npy dtype must be <f4");
  const auto open = header.find("'shape': (");
  if (open == std::string::npos) fail(ErrorKind::ParseError, "npy header lacks shape");
  int h = 0, w = 0, c = 0;
  if (std::sscanf(header.c_str() + open + 10, "%d, %d, %d", &h, &w, &c) != 3 || c != 3) {
    fail(ErrorKind::ParseError, "npy shape must be (H, W, 3)");
  }
  Image img(w, h);
  const std::size_t offset = 10 + header_len;
  if (bytes.size() < offset + 4 * img.data().size()) fail(ErrorKind::ParseError, "truncated npy");
  auto dst = img.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    float f;
    std::memcpy(&f, bytes.data() + offset + 4 * i, 4);
    dst[i] = f;
  }
  return img;
}

}  // namespace sandsim
