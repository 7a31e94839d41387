#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sandsim/fitting.hpp"
#include "sandsim/sandphys.hpp"
#include "sandsim/scene.hpp"

namespace sandsim {

struct ServiceConfig {
  int port = 8080;
  std::string address = "127.0.0.1";
  double push_rate_hz = 20.0;
  int steps_per_tick = 10;       // mpm steps between command drains
  double r_safe_factor = 3.0;    // R_safe = factor * smear radius
  double v_threshold = 0.05;     // m/s
  double smear_depth_m = 0.0;    // height of the smear center above the floor
  double freeze_window_s = 0.2;  // simulated time the freeze filter stays on after a smear
  std::uint64_t seed = 0;

  void validate() const;
};

/// Every tunable of the pipeline, addressable by flat keys such as
/// `iterations`, `topology.prune_radius`, `sim.dt` or `lift.px_to_m`.
struct AppConfig {
  FitConfig fit;
  SimConfig sim;
  LiftConfig lift;
  Render3dOptions render3d;
  ProcessSimConfig process;
  ServiceConfig service;
};

/// Throws InvalidArgument for an unknown key and ParseError for a bad value.
void apply_setting(AppConfig& config, const std::string& key, const std::string& value);
std::string get_setting(const AppConfig& config, const std::string& key);
std::vector<std::string> config_keys();

/// Flat `key = value` lines; `#` starts a comment, blank lines are skipped.
void apply_config_file(AppConfig& config, const std::filesystem::path& path);

/// `key=val` applies one setting; anything else is read as a config file.
void apply_config_arg(AppConfig& config, const std::string& arg);

}  // namespace sandsim
