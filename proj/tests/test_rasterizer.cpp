#include <doctest.h>

#include <algorithm>
#include <random>

#include "fixtures.hpp"
#include "sandsim/rasterizer.hpp"

using namespace sandsim;

namespace {

Image random_weights(std::mt19937_64& rng, int w, int h) {
  std::uniform_real_distribution<double> u(-1, 1);
  Image img(w, h);
  for (double& v : img.data()) v = u(rng);
  return img;
}

}  // namespace

TEST_CASE("empty painting renders the background exactly") {
  Painting p{.width = 19, .height = 11, .background = Rgb(0.9, 0.8, 0.7)};
  const auto out = render(p);
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) CHECK(out.image.pixel(x, y) == p.background);
  }
}

TEST_CASE("rendered values stay within [0, b]") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    Painting p = fixtures::random_painting(rng, 24, 20, 1 + trial % 6, 8);
    p.background = Rgb(0.95, 0.9, 0.85);
    const auto out = render(p);
    for (int y = 0; y < p.height; ++y) {
      for (int x = 0; x < p.width; ++x) {
        for (int c = 0; c < 3; ++c) {
          CHECK(out.image.at(x, y, c) >= 0.0);
          CHECK(out.image.at(x, y, c) <= p.background[c]);
        }
      }
    }
  }
}

TEST_CASE("adding a stroke never brightens a pixel") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    Painting p = fixtures::random_painting(rng, 20, 20, trial % 4, 6);
    const Image before = render(p).image;
    p.strokes.push_back(fixtures::random_stroke(rng, raw(p.next_stroke_id()), 20, 20, 6));
    const Image after = render(p).image;
    for (std::size_t i = 0; i < before.data().size(); ++i) CHECK(after.data()[i] <= before.data()[i]);
  }
}

TEST_CASE("coverage matches a brute-force kernel sum") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const Painting p = fixtures::random_painting(rng, 17, 13, 3, 5);
    RenderOptions opt;
    opt.cutoff_sigma = 1e3;
    const auto out = render(p, opt);
    for (int y = 0; y < p.height; ++y) {
      for (int x = 0; x < p.width; ++x) {
        double sum = 0;
        for (const auto& s : p.strokes) {
          for (const auto& k : s.kernels) sum += eval_kernel(s, k, Vec2(x, y));
        }
        CHECK(out.coverage[static_cast<std::size_t>(y) * p.width + x] == doctest::Approx(sum).epsilon(1e-12));
        for (int c = 0; c < 3; ++c) {
          CHECK(out.image.at(x, y, c) ==
                doctest::Approx(std::max(p.background[c] - p.sand_color[c] * sum, 0.0)).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("deterministic mode ignores stroke order and tile size") {
  std::mt19937_64 rng(14);
  Painting p = fixtures::random_painting(rng, 40, 33, 6, 10);
  RenderOptions opt;
  opt.deterministic = true;
  const auto ref = render(p, opt);
  std::shuffle(p.strokes.begin(), p.strokes.end(), rng);
  opt.tile_size = 7;
  const auto shuffled = render(p, opt);
  CHECK(std::equal(ref.coverage.begin(), ref.coverage.end(), shuffled.coverage.begin()));
}

TEST_CASE("active set renders kernel prefixes") {
  std::mt19937_64 rng(15);
  const Painting p = fixtures::random_painting(rng, 24, 24, 3, 8);
  ActiveSet active{{p.strokes[0].id, 2}, {p.strokes[2].id, 100}};
  Painting truncated = p;
  truncated.strokes[0].kernels.resize(std::min<std::size_t>(2, p.strokes[0].size()));
  truncated.strokes.erase(truncated.strokes.begin() + 1);
  const auto a = render(p, {}, active);
  const auto b = render(truncated);
  for (std::size_t i = 0; i < a.coverage.size(); ++i) CHECK(a.coverage[i] == doctest::Approx(b.coverage[i]));
  const auto none = render(p, {}, ActiveSet{});
  CHECK(std::all_of(none.coverage.begin(), none.coverage.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("bounding box spans cutoff standard deviations") {
  const auto s = fixtures::line_stroke(1, 10.5, 10.5, 1, 1, 2.0, 0.5);
  const PixelRect r = bounding_box(s, s.kernels[0], 3.0, 64, 64);
  CHECK(r.x0 == 5);
  CHECK(r.x1 == 16);
  CHECK(r.y0 == 5);
  CHECK(r.y1 == 16);
  const PixelRect clipped = bounding_box(s, s.kernels[0], 3.0, 12, 8);
  CHECK(clipped.x1 == 11);
  CHECK(clipped.y1 == 7);
  const auto far = fixtures::line_stroke(1, -50, -50, 1, 1, 2.0, 0.5);
  CHECK(bounding_box(far, far.kernels[0], 3.0, 64, 64).empty());
  CHECK(fixtures::thrown_kind([&] { bounding_box(s, s.kernels[0], 0.0, 8, 8); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("backward matches central differences") {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 20; ++trial) {
    const Painting p = fixtures::unclamped_scene(rng, 8, 8, 3, 4);
    const auto report = fixtures::check_gradients(p, random_weights(rng, 8, 8));
    CHECK_MESSAGE(report.failed == 0, report.worst_name, " rel ", report.worst_relative);
  }
}

TEST_CASE("clamped pixels pass no gradient") {
  Painting p{.width = 8, .height = 8};
  p.strokes.push_back(fixtures::line_stroke(1, 4, 4, 3, 0.5, 30.0, 0.99));
  p.sand_color = Rgb(50, 50, 50);
  const auto out = render(p);
  for (double v : out.image.data()) REQUIRE(v == 0.0);
  const GradientSet g = backward(p, out, Image(8, 8, Rgb::Ones()));
  CHECK(g.strokes[0].raw_opacity == 0.0);
  CHECK(g.strokes[0].raw_scale.isZero());
  for (const auto& c : g.strokes[0].centers) CHECK(c.isZero());
}

TEST_CASE("backward rejects a mismatched loss gradient") {
  Painting p{.width = 8, .height = 8};
  p.strokes.push_back(fixtures::line_stroke(1, 4, 4, 2, 1, 2, 0.5));
  const auto out = render(p);
  CHECK(fixtures::thrown_kind([&] { backward(p, out, Image(4, 4)); }) == ErrorKind::DimensionMismatch);
}

TEST_CASE("gradient sets accumulate and detect non-finite entries") {
  Painting p{.width = 8, .height = 8};
  p.strokes.push_back(fixtures::line_stroke(1, 4, 4, 2, 1, 2, 0.5));
  GradientSet a = GradientSet::zeros_like(p);
  a.strokes[0].raw_opacity = 1.5;
  GradientSet b = a;
  a.add(b);
  CHECK(a.strokes[0].raw_opacity == 3.0);
  CHECK(a.all_finite());
  a.strokes[0].rotations[1] = std::nan("");
  CHECK_FALSE(a.all_finite());
  GradientSet other = GradientSet::zeros_like(Painting{});
  CHECK(fixtures::thrown_kind([&] { a.add(other); }) == ErrorKind::DimensionMismatch);
}
