#include <doctest.h>

#include <fstream>
#include <random>

#include <json.hpp>

#include "fixtures.hpp"
#include "sandsim/planner.hpp"
#include "sandsim/sequencer.hpp"

using namespace sandsim;

namespace {

std::vector<std::uint8_t> file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Region full_region(int id, int layer, int w, int h) {
  return Region{RegionId{id}, "r", layer, DrawMethod::Fill, Mask{w, h, std::vector<std::uint8_t>(w * h, 1)}};
}

}  // namespace

TEST_CASE("crc32 matches the standard check value") {
  const std::string check = "123456789";
  CHECK(crc32_of({check.begin(), check.end()}) == 0xCBF43926u);
  CHECK(crc32_of({}) == 0u);
}

TEST_CASE("script orders by region rank, area, first y, id") {
  const RegionPlan plan = make_plan({full_region(1, 0, 64, 64), full_region(2, 1, 64, 64)}, {RegionId{1}});
  Painting p{.width = 64, .height = 64};
  p.strokes.push_back(fixtures::line_stroke(10, 5, 30, 3, 1, 4.0, 0.5));  // fg
  p.strokes.push_back(fixtures::line_stroke(11, 5, 20, 3, 1, 3.0, 0.5));  // bg, small
  p.strokes.push_back(fixtures::line_stroke(12, 5, 40, 3, 1, 6.0, 0.5));  // bg, large
  p.strokes.push_back(fixtures::line_stroke(13, 5, 10, 3, 1, 3.0, 0.5));  // bg, small, higher up
  p.strokes.push_back(fixtures::line_stroke(9, 5, 10, 3, 1, 3.0, 0.5));   // bg, ties 13 but lower id
  for (int i = 0; i < 5; ++i) p.strokes[i].region = RegionId{i == 0 ? 2 : 1};
  const ProcessScript script = build_script(p, plan, 30, 2);
  const std::vector<StrokeId> expected = {StrokeId{12}, StrokeId{9}, StrokeId{13}, StrokeId{11}, StrokeId{10}};
  CHECK(script.stroke_order() == expected);
  REQUIRE(script.events.size() == 10);
  CHECK(script.events[0].kernel_start == 0);
  CHECK(script.events[0].kernel_end == 2);
  CHECK(script.events[1].kernel_start == 2);
  CHECK(script.events[1].kernel_end == 3);
  CHECK(script.events[0].frame == 1);
  CHECK(script.total_frames == 11);
  CHECK(script.fps == 30);
  CHECK(script.active_at(0).empty());
  CHECK(script.active_at(2).at(StrokeId{12}) == 3);
  CHECK(script.active_at(3).at(StrokeId{9}) == 2);
}

TEST_CASE("script construction errors") {
  const RegionPlan plan = fallback_plan(16, 16);
  Painting p{.width = 16, .height = 16};
  p.strokes.push_back(fixtures::line_stroke(1, 5, 5, 3, 1, 3, 0.5));
  CHECK(fixtures::thrown_kind([&] { build_script(p, plan, 24, 5); }) == ErrorKind::UnclassifiedStroke);
  p.strokes[0].region = RegionId{42};
  CHECK(fixtures::thrown_kind([&] { build_script(p, plan, 24, 5); }) == ErrorKind::UnclassifiedStroke);
  p.strokes[0].region = RegionId{0};
  CHECK(fixtures::thrown_kind([&] { build_script(p, plan, 24, 0); }) == ErrorKind::InvalidArgument);
  CHECK(fixtures::thrown_kind([&] { build_script(p, plan, 0, 5); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("script json round-trip and validation") {
  std::mt19937_64 rng(41);
  const RegionPlan plan = fallback_plan(32, 32);
  const Painting p = classify_strokes(fixtures::random_painting(rng, 32, 32, 4, 9), plan);
  const ProcessScript script = build_script(p, plan, 12, 3);
  const ProcessScript back = script_from_json(to_json(script));
  CHECK(back.fps == 12);
  CHECK(back.total_frames == script.total_frames);
  REQUIRE(back.events.size() == script.events.size());
  for (std::size_t i = 0; i < back.events.size(); ++i) {
    CHECK(back.events[i].stroke == script.events[i].stroke);
    CHECK(back.events[i].frame == script.events[i].frame);
  }
  nlohmann::json doc = to_json(script);
  std::swap(doc["events"][0], doc["events"][2]);
  CHECK(fixtures::thrown_kind([&] { script_from_json(doc); }) == ErrorKind::ParseError);
  CHECK(fixtures::thrown_kind([] { script_from_json(nlohmann::json::object()); }) == ErrorKind::ParseError);
}

TEST_CASE("emitted frames darken monotonically and end at the full render") {
  std::mt19937_64 rng(42);
  const RegionPlan plan = fallback_plan(40, 30);
  const Painting p = classify_strokes(fixtures::random_painting(rng, 40, 30, 5, 12), plan);
  const ProcessScript script = build_script(p, plan, 24, 4);
  const auto dir = fixtures::scratch_dir("frames");
  const FrameManifest m = emit_frames(p, script, dir, {}, 3);
  REQUIRE(m.frame_count == script.total_frames);

  Image prev;
  for (int t = 0; t < m.frame_count; ++t) {
    const auto bytes = file_bytes(dir / m.files[t]);
    CHECK(m.files[t] == frame_file_name(t));
    CHECK(crc32_of(bytes) == m.checksums[t]);
    const Image img = decode_png(bytes);
    if (t == 0) {
      CHECK(bytes == encode_png(Image(40, 30, p.background)));
    } else {
      for (std::size_t i = 0; i < img.data().size(); ++i) CHECK(img.data()[i] <= prev.data()[i]);
    }
    prev = img;
  }
  CHECK(file_bytes(dir / m.files.back()) == encode_png(render(p).image));

  std::ifstream in(dir / "process_manifest.json");
  const auto doc = nlohmann::json::parse(in);
  CHECK(doc.at("frame_count") == m.frame_count);
  CHECK(doc.at("fps") == 24);
  CHECK(doc.at("files").size() == static_cast<std::size_t>(m.frame_count));
  std::filesystem::remove_all(dir);
}

TEST_CASE("frame output does not depend on the worker count") {
  std::mt19937_64 rng(43);
  const RegionPlan plan = fallback_plan(24, 24);
  const Painting p = classify_strokes(fixtures::random_painting(rng, 24, 24, 3, 6), plan);
  const ProcessScript script = build_script(p, plan, 24, 2);
  const auto a = fixtures::scratch_dir("frames_a");
  const auto b = fixtures::scratch_dir("frames_b");
  CHECK(emit_frames(p, script, a, {}, 1).checksums == emit_frames(p, script, b, {}, 4).checksums);
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}
