#include "sandsim/scene.hpp"

#include <fstream>

#include "sandsim/error.hpp"

namespace sandsim {

Image SandScene::render() const {
  return render_3d(state, lift, background, sand_color, width, height, render_options);
}

Vec3 SandScene::canvas_point(double x_px, double y_px, double height_m) const {
  return lift.to_sim(Vec2(x_px, y_px), height_m);
}

void SandScene::deposit(std::vector<SandParticle> particles) {
  state.particles.insert(state.particles.end(), std::make_move_iterator(particles.begin()),
                         std::make_move_iterator(particles.end()));
}

SandScene make_scene(const Painting& painting, SimConfig sim, LiftConfig lift) {
  fit_canvas(painting.width, painting.height, sim, lift);
  SandScene scene;
  scene.state = make_state(sim);
  scene.lift = lift;
  scene.background = painting.background;
  scene.sand_color = painting.sand_color;
  scene.width = painting.width;
  scene.height = painting.height;
  return scene;
}

void lift_all(SandScene& scene, const Painting& painting, std::uint64_t seed) {
  for (const auto& s : painting.strokes) scene.deposit(lift_stroke(s, scene.lift, seed));
}

void simulate_process(SandScene& scene, const Painting& painting, const ProcessScript& script,
                      const ProcessSimConfig& config, const std::function<void(const ProcessSnapshot&)>& on_snapshot) {
  if (config.settle_steps < 0 || config.final_settle_steps < 0) {
    fail(ErrorKind::InvalidArgument, "settle step counts must be >= 0");
  }
  auto run = [&](int steps) {
    for (int i = 0; i < steps; ++i) mpm_step(scene.state);
  };
  auto lift_event = [&](const DrawEvent& e) {
    const Stroke* s = painting.find(e.stroke);
    if (!s) fail(ErrorKind::InvalidArgument, "script names unknown stroke " + std::to_string(raw(e.stroke)));
    scene.deposit(lift_kernels(*s, e.kernel_start, e.kernel_end, scene.lift, config.seed));
  };

  if (config.progressive) {
    for (std::size_t i = 0; i < script.events.size(); ++i) {
      lift_event(script.events[i]);
      run(config.settle_steps);
      if (on_snapshot) on_snapshot({static_cast<int>(i), &scene});
    }
  } else {
    for (const auto& e : script.events) lift_event(e);
  }
  run(config.final_settle_steps);
  if (on_snapshot) on_snapshot({static_cast<int>(script.events.size()) - 1, &scene});
}

void write_snapshot(const std::filesystem::path& dir, const std::string& stem, const SandScene& scene) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());
  write_particle_dump(dir / (stem + ".bin"), scene.state);
  std::ofstream header(dir / (stem + ".json"));
  if (!header) fail(ErrorKind::IoError, "cannot write " + (dir / (stem + ".json")).string());
  header << dump_header(scene.state, scene.lift).dump(2) << '\n';
  write_png(dir / (stem + ".png"), scene.render());
}

}  // namespace sandsim
