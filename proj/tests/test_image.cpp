#include <doctest.h>

#include <cmath>
#include <fstream>

#include "fixtures.hpp"
#include "sandsim/image.hpp"

using namespace sandsim;

TEST_CASE("gamma transfer matches the 2.2 power law") {
  for (int v : {0, 1, 64, 128, 200, 255}) {
    CHECK(srgb8_to_linear(static_cast<std::uint8_t>(v)) == doctest::Approx(std::pow(v / 255.0, 2.2)).epsilon(1e-12));
    CHECK(linear_to_srgb8(srgb8_to_linear(static_cast<std::uint8_t>(v))) == v);
  }
  CHECK(linear_to_srgb8(-0.5) == 0);
  CHECK(linear_to_srgb8(3.0) == 255);
}

TEST_CASE("luma uses Rec. 601 weights") {
  Image img(2, 1);
  img.set_pixel(0, 0, Rgb(1, 0, 0));
  img.set_pixel(1, 0, Rgb(0.2, 0.4, 0.6));
  const auto y = img.luma();
  CHECK(y[0] == doctest::Approx(0.299));
  CHECK(y[1] == doctest::Approx(0.299 * 0.2 + 0.587 * 0.4 + 0.114 * 0.6));
  CHECK(img.mean() == doctest::Approx((1 + 0.2 + 0.4 + 0.6) / 6.0));
}

TEST_CASE("png encoding is stable after one quantization") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  Image img(13, 7);
  for (double& v : img.data()) v = u(rng);
  const auto once = encode_png(img);
  const Image back = decode_png(once);
  REQUIRE(back.same_shape(img));
  for (std::size_t i = 0; i < img.data().size(); ++i) {
    CHECK(linear_to_srgb8(back.data()[i]) == linear_to_srgb8(img.data()[i]));
  }
  CHECK(encode_png(back) == once);
}

TEST_CASE("png and npy files round-trip") {
  const auto dir = fixtures::scratch_dir("image");
  Image img(5, 4, Rgb(0.25, 0.5, 0.75));
  img.set_pixel(3, 2, Rgb(0.125, 1.0, 0.0));
  write_png(dir / "a.png", img);
  const Image png = read_png(dir / "a.png");
  CHECK(png.width() == 5);
  CHECK(png.height() == 4);
  CHECK(linear_to_srgb8(png.at(3, 2, 1)) == 255);

  write_npy(dir / "a.npy", img);
  const Image npy = read_npy(dir / "a.npy");
  REQUIRE(npy.same_shape(img));
  for (std::size_t i = 0; i < img.data().size(); ++i) {
    CHECK(npy.data()[i] == static_cast<double>(static_cast<float>(img.data()[i])));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("masks round-trip and report area") {
  const auto dir = fixtures::scratch_dir("mask");
  Mask m{4, 3, {0, 1, 1, 0, 0, 1, 0, 0, 1, 1, 1, 1}};
  write_mask_png(dir / "m.png", m);
  const Mask back = read_mask_png(dir / "m.png");
  CHECK(back.bits == m.bits);
  CHECK(back.area() == 7);
  CHECK(back.contains(1.2, 0.4));
  CHECK_FALSE(back.contains(-1, 0));
  CHECK_FALSE(back.contains(0, 0));
  std::filesystem::remove_all(dir);
}

TEST_CASE("image io errors carry kinds") {
  const auto dir = fixtures::scratch_dir("image_err");
  CHECK(fixtures::thrown_kind([&] { read_png(dir / "missing.png"); }) == ErrorKind::IoError);
  CHECK(fixtures::thrown_kind([&] { read_mask_png(dir / "missing.png"); }) == ErrorKind::MissingMask);
  const std::vector<std::uint8_t> junk = {1, 2, 3, 4, 5};
  CHECK(fixtures::thrown_kind([&] { decode_png(junk); }) == ErrorKind::IoError);
  std::ofstream(dir / "bad.npy") << "not numpy";
  CHECK(fixtures::thrown_kind([&] { read_npy(dir / "bad.npy"); }) == ErrorKind::ParseError);
  CHECK(fixtures::thrown_kind([] { Image(-1, 2); }) == ErrorKind::InvalidArgument);
  std::filesystem::remove_all(dir);
}

TEST_CASE("rgba8 buffer is opaque") {
  const auto rgba = to_rgba8(Image(3, 2, Rgb(1, 0, 0.5)));
  REQUIRE(rgba.size() == 24);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(rgba[4 * i] == 255);
    CHECK(rgba[4 * i + 1] == 0);
    CHECK(rgba[4 * i + 3] == 255);
  }
}
