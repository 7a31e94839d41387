#include "sandsim/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "sandsim/error.hpp"

namespace sandsim {

void ServiceConfig::validate() const {
  if (port < 0 || port > 65535) fail(ErrorKind::InvalidArgument, "port must be in [0, 65535]");
  if (!(push_rate_hz > 0)) fail(ErrorKind::InvalidArgument, "push rate must be positive");
  if (steps_per_tick <= 0) fail(ErrorKind::InvalidArgument, "steps_per_tick must be positive");
  if (!(r_safe_factor >= 0) || !(v_threshold >= 0) || !(freeze_window_s >= 0)) fail(ErrorKind::InvalidArgument, "freeze parameters must be >= 0");
}

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) s = s.substr(1, s.size() - 2);
  return s;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  fail(ErrorKind::ParseError, "config '" + key + "': '" + value + "' is not " + expected);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, value, std::is_integral_v<T> ? "an integer" : "a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "off" || value == "no") return false;
  bad_value(key, value, "a boolean");
}

template <typename T>
std::string format(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
  }
}

struct Entry {
  std::string key;
  std::function<void(AppConfig&, const std::string&)> set;
  std::function<std::string(const AppConfig&)> get;
};

template <typename T, typename Access>
Entry field(std::string key, Access access) {
  Entry e;
  e.key = key;
  e.set = [key, access](AppConfig& c, const std::string& value) {
    T& ref = access(c);
    if constexpr (std::is_same_v<T, bool>) {
      ref = parse_bool(key, value);
    } else if constexpr (std::is_same_v<T, std::string>) {
      ref = value;
    } else {
      ref = parse_number<T>(key, value);
    }
  };
  e.get = [access](const AppConfig& c) { return format(access(const_cast<AppConfig&>(c))); };
  return e;
}

template <typename Access>
Entry optional_field(std::string key, Access access) {
  Entry e;
  e.key = key;
  e.set = [key, access](AppConfig& c, const std::string& value) {
    if (value == "auto" || value.empty()) {
      access(c).reset();
    } else {
      access(c) = parse_number<double>(key, value);
    }
  };
  e.get = [access](const AppConfig& c) {
    const auto& v = access(const_cast<AppConfig&>(c));
    return v ? format(*v) : std::string("auto");
  };
  return e;
}

template <typename Access>
Entry vec3_field(std::string key, Access access) {
  Entry e;
  e.key = key;
  e.set = [key, access](AppConfig& c, const std::string& value) {
    std::istringstream ss(value);
    std::string part;
    Vec3 v;
    for (int i = 0; i < 3; ++i) {
      if (!std::getline(ss, part, ',')) bad_value(key, value, "three comma-separated numbers");
      v[i] = parse_number<double>(key, trim(part));
    }
    if (std::getline(ss, part, ',')) bad_value(key, value, "three comma-separated numbers");
    access(c) = v;
  };
  e.get = [access](const AppConfig& c) {
    const Vec3& v = access(const_cast<AppConfig&>(c));
    return format(v[0]) + "," + format(v[1]) + "," + format(v[2]);
  };
  return e;
}

#define SANDSIM_FIELD(T, key, member) field<T>(key, [](AppConfig& c) -> T& { return c.member; })

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back(SANDSIM_FIELD(int, "iterations", fit.iterations));
    t.push_back(SANDSIM_FIELD(double, "base_lr", fit.base_lr));
    t.push_back(SANDSIM_FIELD(int, "lr_step", fit.lr_step));
    t.push_back(SANDSIM_FIELD(double, "lr_gamma", fit.lr_gamma));
    t.push_back(SANDSIM_FIELD(double, "adam_beta1", fit.adam_beta1));
    t.push_back(SANDSIM_FIELD(double, "adam_beta2", fit.adam_beta2));
    t.push_back(SANDSIM_FIELD(double, "adam_eps", fit.adam_eps));
    t.push_back(SANDSIM_FIELD(int, "init_curves", fit.init_curves));
    t.push_back(SANDSIM_FIELD(int, "init_points_per_curve", fit.init_points_per_curve));
    t.push_back(SANDSIM_FIELD(double, "init_scale", fit.init_scale));
    t.push_back(SANDSIM_FIELD(double, "init_opacity", fit.init_opacity));
    t.push_back(SANDSIM_FIELD(double, "init_spacing", fit.init_spacing));
    t.push_back(SANDSIM_FIELD(double, "lambda_spring", fit.lambda_spring));
    t.push_back(SANDSIM_FIELD(double, "lambda_smooth", fit.lambda_smooth));
    t.push_back(optional_field("lambda_geom", [](AppConfig& c) -> std::optional<double>& { return c.fit.lambda_geom; }));
    t.push_back(optional_field("lambda_scale", [](AppConfig& c) -> std::optional<double>& { return c.fit.lambda_scale; }));
    t.push_back(SANDSIM_FIELD(bool, "length_scaled_geometry", fit.length_scaled_geometry));
    t.push_back(SANDSIM_FIELD(double, "bg_target_radius", fit.bg_target_radius));
    t.push_back(SANDSIM_FIELD(double, "bg_scale_weight", fit.bg_scale_weight));
    t.push_back(SANDSIM_FIELD(double, "bg_orient_weight", fit.bg_orient_weight));
    t.push_back(SANDSIM_FIELD(int, "topology_period", fit.topology_period));
    t.push_back(SANDSIM_FIELD(int, "topology_freeze_tail", fit.topology_freeze_tail));
    t.push_back(SANDSIM_FIELD(int, "width", fit.width));
    t.push_back(SANDSIM_FIELD(int, "height", fit.height));
    t.push_back(SANDSIM_FIELD(double, "cutoff_sigma", fit.cutoff_sigma));
    t.push_back(SANDSIM_FIELD(bool, "deterministic", fit.deterministic));

    t.push_back(SANDSIM_FIELD(double, "topology.point_merge_dist", fit.topology.point_merge_dist));
    t.push_back(SANDSIM_FIELD(double, "topology.stroke_merge_endpoint_dist", fit.topology.stroke_merge_endpoint_dist));
    t.push_back(SANDSIM_FIELD(double, "topology.prune_opacity", fit.topology.prune_opacity));
    t.push_back(SANDSIM_FIELD(double, "topology.prune_radius", fit.topology.prune_radius));
    t.push_back(SANDSIM_FIELD(double, "topology.attribute_similarity", fit.topology.attribute_similarity));
    t.push_back(SANDSIM_FIELD(double, "topology.tangent_tolerance_deg", fit.topology.tangent_tolerance_deg));
    t.push_back(SANDSIM_FIELD(double, "topology.late_prune_multiplier", fit.topology.late_prune_multiplier));
    t.push_back(SANDSIM_FIELD(int, "topology.max_rounds", fit.topology.max_rounds));

    t.push_back(SANDSIM_FIELD(int, "sim.nx", sim.nx));
    t.push_back(SANDSIM_FIELD(int, "sim.ny", sim.ny));
    t.push_back(SANDSIM_FIELD(int, "sim.nz", sim.nz));
    t.push_back(SANDSIM_FIELD(int, "sim.boundary", sim.boundary));
    t.push_back(SANDSIM_FIELD(double, "sim.dt", sim.dt));
    t.push_back(SANDSIM_FIELD(double, "sim.cfl", sim.cfl));
    t.push_back(vec3_field("sim.gravity", [](AppConfig& c) -> Vec3& { return c.sim.gravity; }));
    t.push_back(SANDSIM_FIELD(double, "sim.youngs_modulus", sim.youngs_modulus));
    t.push_back(SANDSIM_FIELD(double, "sim.poisson_ratio", sim.poisson_ratio));
    t.push_back(SANDSIM_FIELD(double, "sim.friction_angle_deg", sim.friction_angle_deg));
    t.push_back(SANDSIM_FIELD(double, "sim.density", sim.density));
    t.push_back(SANDSIM_FIELD(bool, "sim.boundaries", sim.boundaries));
    t.push_back(SANDSIM_FIELD(bool, "sim.plasticity", sim.plasticity));
    t.push_back(SANDSIM_FIELD(bool, "sim.deterministic", sim.deterministic));

    t.push_back(SANDSIM_FIELD(int, "lift.particles_per_kernel_max", lift.particles_per_kernel_max));
    t.push_back(SANDSIM_FIELD(double, "lift.deposit_height", lift.deposit_height));
    t.push_back(SANDSIM_FIELD(double, "lift.z_sigma", lift.z_sigma));
    t.push_back(SANDSIM_FIELD(double, "lift.px_to_m", lift.px_to_m));

    t.push_back(SANDSIM_FIELD(double, "render3d.absorption_per_particle", render3d.absorption_per_particle));
    t.push_back(SANDSIM_FIELD(double, "render3d.cutoff_sigma", render3d.cutoff_sigma));

    t.push_back(SANDSIM_FIELD(bool, "process.progressive", process.progressive));
    t.push_back(SANDSIM_FIELD(int, "process.settle_steps", process.settle_steps));
    t.push_back(SANDSIM_FIELD(int, "process.final_settle_steps", process.final_settle_steps));
    t.push_back(SANDSIM_FIELD(std::uint64_t, "process.seed", process.seed));

    t.push_back(SANDSIM_FIELD(int, "service.port", service.port));
    t.push_back(SANDSIM_FIELD(std::string, "service.address", service.address));
    t.push_back(SANDSIM_FIELD(double, "service.push_rate_hz", service.push_rate_hz));
    t.push_back(SANDSIM_FIELD(int, "service.steps_per_tick", service.steps_per_tick));
    t.push_back(SANDSIM_FIELD(double, "service.r_safe_factor", service.r_safe_factor));
    t.push_back(SANDSIM_FIELD(double, "service.v_threshold", service.v_threshold));
    t.push_back(SANDSIM_FIELD(double, "service.smear_depth_m", service.smear_depth_m));
    t.push_back(SANDSIM_FIELD(double, "service.freeze_window_s", service.freeze_window_s));
    t.push_back(SANDSIM_FIELD(std::uint64_t, "service.seed", service.seed));
    return t;
  }();
  return table;
}

#undef SANDSIM_FIELD

const Entry& lookup(const std::string& key) {
  const auto& t = entries();
  auto it = std::find_if(t.begin(), t.end(), [&](const Entry& e) { return e.key == key; });
  if (it == t.end()) fail(ErrorKind::InvalidArgument, "unknown config key '" + key + "'");
  return *it;
}

}  // namespace

void apply_setting(AppConfig& config, const std::string& key, const std::string& value) {
  lookup(trim(key)).set(config, trim(value));
}

std::string get_setting(const AppConfig& config, const std::string& key) { return lookup(trim(key)).get(config); }

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : entries()) keys.push_back(e.key);
  return keys;
}

void apply_config_file(AppConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open config file " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;  // tolerate TOML section headers
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::ParseError, path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      apply_setting(config, line.substr(0, eq), line.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(e.kind(), path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void apply_config_arg(AppConfig& config, const std::string& arg) {
  if (arg.find('=') != std::string::npos && !std::filesystem::exists(arg)) {
    const auto eq = arg.find('=');
    apply_setting(config, arg.substr(0, eq), arg.substr(eq + 1));
  } else {
    apply_config_file(config, arg);
  }
}

}  // namespace sandsim
