#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "fixtures.hpp"
#include "sandsim/fitting.hpp"
#include "sandsim/planner.hpp"

using namespace sandsim;

namespace {

FitConfig small_config(int iterations) {
  FitConfig cfg;
  cfg.iterations = iterations;
  cfg.init_curves = 12;
  cfg.init_points_per_curve = 6;
  cfg.init_scale = 3.0;
  cfg.topology_period = 50;
  cfg.topology_freeze_tail = 20;
  cfg.deterministic = true;
  return cfg;
}

Image target_from(const Painting& p) { return render(p).image; }

}  // namespace

TEST_CASE("reconstruction loss is the per-sample mean squared error") {
  Image a(2, 2, Rgb(0.5, 0.5, 0.5));
  Image b(2, 2, Rgb(0.5, 0.5, 0.5));
  b.set_pixel(1, 1, Rgb(0.0, 1.0, 0.5));
  CHECK(loss_rec(a, b) == doctest::Approx(0.5 / 12.0));
  CHECK(fixtures::thrown_kind([&] { loss_rec(a, Image(3, 2)); }) == ErrorKind::DimensionMismatch);
}

TEST_CASE("spring and smoothness energies") {
  Stroke s = fixtures::line_stroke(1, 0, 0, 3, 2.0, 3, 0.5);
  CHECK(loss_spring(s) == doctest::Approx(8.0));
  CHECK(loss_smooth(s) == doctest::Approx(0.0));
  s.kernels[1].center[1] = 1.0;
  CHECK(loss_spring(s) == doctest::Approx(10.0));
  CHECK(loss_smooth(s) == doctest::Approx(4.0));  // (0,0) - 2(2,1) + (4,0) = (0,-2)
  CHECK(loss_spring(fixtures::line_stroke(1, 0, 0, 1, 1, 3, 0.5)) == 0.0);
}

TEST_CASE("scale and orientation priors cover background strokes only") {
  const RegionPlan plan = make_plan(
      {Region{RegionId{1}, "bg", 0, DrawMethod::Fill, Mask{8, 8, std::vector<std::uint8_t>(64, 1)}},
       Region{RegionId{2}, "fg", 1, DrawMethod::Fill, Mask{8, 8, std::vector<std::uint8_t>(64, 1)}}},
      {RegionId{1}});
  Painting p{.width = 8, .height = 8};
  p.strokes.push_back(fixtures::line_stroke(1, 2, 2, 2, 1, 5.0, 0.5, std::numbers::pi / 2));
  p.strokes.push_back(fixtures::line_stroke(2, 2, 2, 2, 1, 9.0, 0.5, std::numbers::pi / 2));
  p.strokes[0].region = RegionId{1};
  p.strokes[1].region = RegionId{2};
  const auto l = loss_scale_and_orient(p, plan, 15.0);
  CHECK(l.scale == doctest::Approx(200.0));
  CHECK(l.orient == doctest::Approx(1.0));
}

TEST_CASE("objective gradient matches central differences of the total loss") {
  std::mt19937_64 rng(31);
  const RegionPlan plan = fallback_plan(10, 9);
  FitConfig cfg = small_config(0);
  cfg.cutoff_sigma = 1e3;
  cfg.lambda_geom = 0.7;
  cfg.lambda_scale = 0.3;
  for (int trial = 0; trial < 5; ++trial) {
    Painting p = classify_strokes(fixtures::unclamped_scene(rng, 10, 9, 3, 4), plan);
    Image target(10, 9);
    std::uniform_real_distribution<double> u(0, 1);
    for (double& v : target.data()) v = u(rng);
    Objective obj = evaluate_objective(p, target, plan, cfg);
    Painting probe = p;
    for (auto& ref : fixtures::parameters(probe, obj.gradient)) {
      const double x0 = *ref.value;
      *ref.value = x0 + 1e-5;
      const double up = evaluate_objective(probe, target, plan, cfg).loss.total;
      *ref.value = x0 - 1e-5;
      const double down = evaluate_objective(probe, target, plan, cfg).loss.total;
      *ref.value = x0;
      const double fd = (up - down) / 2e-5;
      CHECK_MESSAGE(std::abs(*ref.grad - fd) <= 1e-5 * std::max(std::abs(fd), std::abs(*ref.grad)) + 1e-8, ref.name);
    }
  }
}

TEST_CASE("default outer weights scale with the canvas") {
  FitConfig cfg;
  CHECK(cfg.resolved_lambda_geom(10, 20) == doctest::Approx(1.0 / 600.0));
  CHECK(cfg.resolved_lambda_scale(10, 20) == doctest::Approx(1.0 / 600.0));
  cfg.lambda_geom = 2.0;
  CHECK(cfg.resolved_lambda_geom(10, 20) == 2.0);
}

TEST_CASE("initialization is seeded, stratified and well formed") {
  FitConfig cfg = small_config(0);
  cfg.init_curves = 50;
  cfg.init_points_per_curve = 20;
  const Painting a = initialize_painting(128, 96, cfg, 5);
  const Painting b = initialize_painting(128, 96, cfg, 5);
  const Painting c = initialize_painting(128, 96, cfg, 6);
  REQUIRE(a.strokes.size() == 50);
  CHECK(a.kernel_count() == 1000);
  CHECK(a.strokes[3].kernels[7].center == b.strokes[3].kernels[7].center);
  CHECK(a.strokes[3].kernels[7].center != c.strokes[3].kernels[7].center);
  for (const auto& s : a.strokes) {
    CHECK(s.opacity() == doctest::Approx(cfg.init_opacity));
    CHECK(s.scale()[0] == doctest::Approx(cfg.init_scale));
    for (const auto& k : s.kernels) {
      CHECK(k.center[0] >= -32.0);
      CHECK(k.center[0] <= 160.0);
    }
  }
  // Stratification: every 8x8 cell anchor lands in a distinct grid cell, so
  // the stroke midpoints cannot all crowd one quadrant.
  int left = 0;
  for (const auto& s : a.strokes) left += (s.kernels[0].center + s.kernels.back().center)[0] / 2 < 64;
  CHECK(left > 10);
  CHECK(left < 40);
}

TEST_CASE("fit produces a full trace and lowers the loss") {
  std::mt19937_64 rng(33);
  Painting truth = fixtures::random_painting(rng, 32, 32, 3, 8, 3.0, 5.0);
  const Image target = target_from(truth);
  const RegionPlan plan = fallback_plan(32, 32);
  FitConfig cfg = small_config(150);
  cfg.base_lr = 0.05;
  int observed = 0;
  const FitResult r = fit(target, plan, cfg, 1, [&](const LossReport&, const Painting&) { ++observed; });
  CHECK(r.status == FitStatus::Completed);
  REQUIRE(r.trace.size() == 151);
  CHECK(observed == 151);
  CHECK(r.trace.front().iteration == 0);
  CHECK(r.trace.back().iteration == 150);
  CHECK(r.trace.back().rec < 0.5 * r.trace.front().rec);
  CHECK(r.trace[49].topology.has_value());
  CHECK(r.trace[99].topology.has_value());
  CHECK_FALSE(r.trace[50].topology.has_value());
  CHECK_FALSE(r.trace[149].topology.has_value());  // inside the freeze tail
  for (const auto& s : r.painting.strokes) CHECK(s.region.has_value());

  const FitResult again = fit(target, plan, cfg, 1);
  CHECK(again.trace.back().total == r.trace.back().total);
}

TEST_CASE("fit rejects a mismatched canvas") {
  FitConfig cfg = small_config(1);
  cfg.width = 16;
  CHECK(fixtures::thrown_kind([&] { fit(Image(8, 8), fallback_plan(8, 8), cfg, 0); }) == ErrorKind::DimensionMismatch);
  cfg = small_config(1);
  cfg.iterations = -1;
  CHECK(fixtures::thrown_kind([&] { fit(Image(8, 8), fallback_plan(8, 8), cfg, 0); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("non-finite loss aborts with the last finite painting") {
  Image target(16, 16, Rgb::Constant(0.5));
  target.at(3, 3, 1) = std::nan("");
  const FitResult r = fit(target, fallback_plan(16, 16), small_config(10), 0);
  CHECK(r.status == FitStatus::AbortedNonFinite);
  CHECK(r.trace.empty());
  CHECK(r.painting.strokes.size() == 12);

  FitConfig wild = small_config(20);
  wild.base_lr = 1e308;
  const FitResult blown = fit(Image(16, 16, Rgb::Constant(0.5)), fallback_plan(16, 16), wild, 0);
  CHECK(blown.status == FitStatus::AbortedNonFinite);
  const Painting& p = blown.painting;
  CHECK(std::isfinite(render(p).image.mean()));
}

TEST_CASE("trace csv has a header and one row per entry") {
  const auto dir = fixtures::scratch_dir("trace");
  std::vector<LossReport> trace(3);
  trace[1].topology = TopologySummary{1, 2, 3, 4, {}};
  write_trace_csv(dir / "t.csv", trace);
  std::ifstream in(dir / "t.csv");
  std::string header, line;
  std::getline(in, header);
  CHECK(header ==
        "iteration,rec,spring,smooth,scale,orient,total,psnr,strokes,kernels,points_merged,strokes_split,"
        "strokes_merged,strokes_pruned");
  int rows = 0;
  std::string second;
  while (std::getline(in, line)) {
    if (rows == 1) second = line;
    ++rows;
  }
  CHECK(rows == 3);
  CHECK(second.ends_with(",1,2,3,4"));
  std::filesystem::remove_all(dir);
}
