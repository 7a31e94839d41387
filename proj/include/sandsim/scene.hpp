#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>

#include "sandsim/painting.hpp"
#include "sandsim/sandphys.hpp"
#include "sandsim/sequencer.hpp"

namespace sandsim {

/// A simulation bound to a canvas: the particle state plus the mapping and
/// colors needed to render it back onto the painting's pixels.
struct SandScene {
  SandState state;
  LiftConfig lift;
  Render3dOptions render_options;
  Rgb background = Rgb::Ones();
  Rgb sand_color = Rgb(0.55, 0.47, 0.35);
  int width = 0;
  int height = 0;

  Image render() const;
  /// Canvas pixel to simulation point at `height_m` above the floor.
  Vec3 canvas_point(double x_px, double y_px, double height_m = 0) const;
  void deposit(std::vector<SandParticle> particles);
};

/// Grid and lift mapping fitted to the painting's canvas; no particles yet.
SandScene make_scene(const Painting& painting, SimConfig sim = {}, LiftConfig lift = {});

/// Lifts every stroke of the painting at once.
void lift_all(SandScene& scene, const Painting& painting, std::uint64_t seed);

struct ProcessSimConfig {
  bool progressive = true;
  int settle_steps = 50;         // steps after each deposited event
  int final_settle_steps = 500;  // steps after the last deposit
  std::uint64_t seed = 0;
};

struct ProcessSnapshot {
  int event = -1;  // index of the last deposited event, -1 before any
  const SandScene* scene = nullptr;
};

/// Deposits strokes in script order (per event when progressive, all at
/// once otherwise) and settles the sand. The callback sees the scene after
/// each event's settle interval and after the final settle.
void simulate_process(SandScene& scene, const Painting& painting, const ProcessScript& script,
                      const ProcessSimConfig& config, const std::function<void(const ProcessSnapshot&)>& on_snapshot = {});

/// Writes `<stem>.bin`, `<stem>.json` and `<stem>.png` into `dir`.
void write_snapshot(const std::filesystem::path& dir, const std::string& stem, const SandScene& scene);

}  // namespace sandsim
