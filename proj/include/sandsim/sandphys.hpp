#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "sandsim/image.hpp"
#include "sandsim/painting.hpp"

namespace sandsim {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct SandParticle {
  Vec3 position = Vec3::Zero();  // m
  Vec3 velocity = Vec3::Zero();  // m/s
  double mass = 0;               // kg
  double volume = 0;             // m^3, rest volume
  Mat3 F = Mat3::Identity();     // elastic deformation gradient
  Mat3 C = Mat3::Zero();         // APIC affine velocity
  StrokeId source{-1};
};

struct SimConfig {
  int nx = 64, ny = 64, nz = 32;
  double dx = 0.01;  // m
  int boundary = 3;  // cells of sticky floor / separating walls
  double dt = 2e-4;  // s, split further when the CFL bound requires it
  double cfl = 0.5;
  Vec3 gravity = Vec3(0, 0, -9.81);
  double youngs_modulus = 1e5;  // Pa
  double poisson_ratio = 0.3;
  double friction_angle_deg = 40.0;
  double density = 1600.0;  // kg/m^3
  bool boundaries = true;
  bool plasticity = true;
  /// Serial particle-to-grid scatter, bitwise reproducible.
  bool deterministic = false;

  void validate() const;
  double mu() const;
  double lambda() const;
  /// First grid coordinate a particle may occupy along each axis.
  Vec3 lower() const;
  Vec3 upper() const;
};

struct Grid {
  int nx = 0, ny = 0, nz = 0;
  std::vector<double> mass;
  std::vector<double> momentum;  // xyz interleaved; holds velocity after the grid update

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * ny + j) * nz + k;
  }
  double total_mass() const;
  Vec3 total_momentum() const;
};

struct SandState {
  SimConfig config;
  std::vector<SandParticle> particles;
  Grid grid;
  std::int64_t step = 0;
  double time = 0;

  double total_mass() const;
  Vec3 total_momentum() const;
  double kinetic_energy() const;
};

SandState make_state(const SimConfig& config);

struct StepReport {
  int substeps = 0;
  std::size_t escaped = 0;  // particles clamped back into the domain
  double grid_mass = 0;     // after the last particle-to-grid transfer
};

/// Particle-to-grid transfer of mass and APIC momentum (with the stress
/// impulse for step size dt). Leaves momentum, not velocity, on the grid.
void particle_to_grid(SandState& state, double dt);

/// One MLS-MPM cycle, sub-stepped to satisfy the CFL bound.
StepReport mpm_step(SandState& state);

/// Return mapping of F_trial onto the Drucker-Prager cone in Hencky strain.
/// Throws SingularDecomposition when det(F_trial) <= 0 or a singular value vanishes.
Mat3 drucker_prager_project(const Mat3& F_trial, double friction_angle_deg);

double drucker_prager_alpha(double friction_angle_deg);

/// max(1 - (r / R)^2, 0)
double smear_profile(double r, double R);

/// Adds strength * p(r) * direction to the velocity of every particle within R.
/// Returns the number of particles touched.
std::size_t smear(SandState& state, const Vec3& center, double R, double strength, const Vec3& direction);

/// Zeroes velocities slower than v_threshold farther than R_safe from the center.
std::size_t freeze_filter(SandState& state, const Vec3& interaction_center, double R_safe, double v_threshold);

/// (1 - exp(-alpha)) / (1 - exp(-1)); throws DomainError outside [0, 1].
double lift_density(double alpha);

struct LiftConfig {
  int particles_per_kernel_max = 64;
  double deposit_height = 0.02;  // m above the floor
  double z_sigma = 0.005;        // m
  double px_to_m = 0.004;
  /// Simulation coordinates of canvas pixel (0, 0) at floor level.
  Vec3 origin = Vec3::Zero();
  double particle_volume = 1.25e-7;  // m^3
  double density = 1600.0;

  void validate() const;
  Vec3 to_sim(const Vec2& canvas_px, double height_m = 0) const;
  Vec2 to_canvas(const Vec3& sim) const;
};

/// Sizes a grid so the canvas fills its interior, and points the lift
/// mapping at the floor. Particles get a volume of (dx / 2)^3.
void fit_canvas(int width, int height, SimConfig& sim, LiftConfig& lift);

/// Particles sampled for one kernel: ceil(lift_density(alpha) * max), at least 1.
int lift_count(double alpha, int particles_per_kernel_max);

/// Particles of kernels [kernel_begin, kernel_end) of the stroke. Each
/// kernel draws from its own stream seeded by (seed, stroke id, ordinal), so
/// lifting a stroke piecewise matches lifting it whole.
std::vector<SandParticle> lift_kernels(const Stroke& stroke, int kernel_begin, int kernel_end, const LiftConfig& cfg,
                                       std::uint64_t seed);
std::vector<SandParticle> lift_stroke(const Stroke& stroke, const LiftConfig& cfg, std::uint64_t seed);

struct Render3dOptions {
  double absorption_per_particle = 0.1;
  double cutoff_sigma = 3.0;
};

/// Orthographic top-down splat with the same subtractive model as the 2D renderer.
Image render_3d(const SandState& state, const LiftConfig& lift, const Rgb& background, const Rgb& sand_color,
                int width, int height, const Render3dOptions& options = {});

/// Little-endian u64 count, then 13 float32 per particle: position(3),
/// velocity(3), mass, volume, source stroke, det(F), diag(F)(3).
void write_particle_dump(const std::filesystem::path& path, const SandState& state);
std::vector<std::array<float, 13>> read_particle_dump(const std::filesystem::path& path);
nlohmann::json dump_header(const SandState& state, const LiftConfig& lift);

}  // namespace sandsim
