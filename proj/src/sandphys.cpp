#include "sandsim/sandphys.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "sandsim/error.hpp"

namespace sandsim {

void SimConfig::validate() const {
  if (nx < 8 || ny < 8 || nz < 8) fail(ErrorKind::InvalidArgument, "grid must be at least 8 cells per axis");
  if (!(dx > 0) || !(dt > 0) || !(cfl > 0)) fail(ErrorKind::InvalidArgument, "dx, dt and cfl must be positive");
  if (boundary < 0 || 2 * boundary + 2 >= std::min({nx, ny, nz})) fail(ErrorKind::InvalidArgument, "boundary too wide");
  if (!(youngs_modulus > 0) || !(poisson_ratio > -1 && poisson_ratio < 0.5)) {
    fail(ErrorKind::InvalidArgument, "invalid elastic constants");
  }
  if (!(friction_angle_deg >= 0 && friction_angle_deg < 90)) fail(ErrorKind::InvalidArgument, "friction angle must be in [0, 90)");
  if (!(density > 0)) fail(ErrorKind::InvalidArgument, "density must be positive");
}

double SimConfig::mu() const { return youngs_modulus / (2 * (1 + poisson_ratio)); }

double SimConfig::lambda() const {
  return youngs_modulus * poisson_ratio / ((1 + poisson_ratio) * (1 - 2 * poisson_ratio));
}

Vec3 SimConfig::lower() const { return Vec3::Constant(dx); }

Vec3 SimConfig::upper() const { return Vec3(nx - 2, ny - 2, nz - 2) * dx; }

double Grid::total_mass() const {
  double sum = 0;
  for (double m : mass) sum += m;
  return sum;
}

Vec3 Grid::total_momentum() const {
  Vec3 sum = Vec3::Zero();
  for (std::size_t i = 0; i < mass.size(); ++i) sum += Vec3(momentum[3 * i], momentum[3 * i + 1], momentum[3 * i + 2]);
  return sum;
}

double SandState::total_mass() const {
  double sum = 0;
  for (const auto& p : particles) sum += p.mass;
  return sum;
}

Vec3 SandState::total_momentum() const {
  Vec3 sum = Vec3::Zero();
  for (const auto& p : particles) sum += p.mass * p.velocity;
  return sum;
}

double SandState::kinetic_energy() const {
  double sum = 0;
  for (const auto& p : particles) sum += 0.5 * p.mass * p.velocity.squaredNorm();
  return sum;
}

SandState make_state(const SimConfig& config) {
  config.validate();
  SandState s;
  s.config = config;
  s.grid.nx = config.nx;
  s.grid.ny = config.ny;
  s.grid.nz = config.nz;
  const std::size_t n = static_cast<std::size_t>(config.nx) * config.ny * config.nz;
  s.grid.mass.assign(n, 0.0);
  s.grid.momentum.assign(3 * n, 0.0);
  return s;
}

namespace {

struct Stencil {
  Eigen::Vector3i base;
  Vec3 fx;
  double w[3][3];  // [axis][node]
};

Stencil stencil(const Vec3& x, double inv_dx) {
  Stencil s;
  for (int a = 0; a < 3; ++a) {
    const double g = x[a] * inv_dx;
    s.base[a] = static_cast<int>(std::floor(g - 0.5));
    const double f = g - s.base[a];
    s.fx[a] = f;
    s.w[a][0] = 0.5 * (1.5 - f) * (1.5 - f);
    s.w[a][1] = 0.75 - (f - 1.0) * (f - 1.0);
    s.w[a][2] = 0.5 * (f - 0.5) * (f - 0.5);
  }
  return s;
}

struct Svd3 {
  Mat3 U, V;
  Vec3 sigma;
};

// Rotation-only U and V with positive singular values, valid when det(F) > 0.
Svd3 svd3(const Mat3& F) {
  const double det = F.determinant();
  if (!(det > 0) || !std::isfinite(det)) fail(ErrorKind::SingularDecomposition, "deformation gradient has det <= 0");
  Eigen::JacobiSVD<Mat3> svd(F, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Svd3 out{svd.matrixU(), svd.matrixV(), svd.singularValues()};
  if (out.U.determinant() < 0) {
    out.U.col(2) *= -1;
    out.V.col(2) *= -1;
  }
  if (!(out.sigma.minCoeff() > 1e-12)) fail(ErrorKind::SingularDecomposition, "deformation gradient is singular");
  return out;
}

// Kirchhoff stress of the fixed-corotated model.
Mat3 kirchhoff(const Mat3& F, double mu, double lambda) {
  const Svd3 d = svd3(F);
  const Mat3 R = d.U * d.V.transpose();
  const double J = d.sigma.prod();
  return 2 * mu * (F - R) * F.transpose() + lambda * (J - 1) * J * Mat3::Identity();
}

// Active node box, so clearing and updating skip the empty grid.
struct NodeBox {
  Eigen::Vector3i lo, hi;  // inclusive
  bool empty = true;
};

NodeBox particle_box(const SandState& s) {
  NodeBox box;
  const double inv_dx = 1.0 / s.config.dx;
  for (const auto& p : s.particles) {
    const Eigen::Vector3i base = ((p.position * inv_dx).array() - 0.5).floor().cast<int>();
    if (box.empty) {
      box.lo = base;
      box.hi = base.array() + 2;
      box.empty = false;
    } else {
      box.lo = box.lo.cwiseMin(base);
      box.hi = box.hi.cwiseMax(Eigen::Vector3i(base.array() + 2));
    }
  }
  if (!box.empty) {
    box.lo = box.lo.cwiseMax(0);
    box.hi = box.hi.cwiseMin(Eigen::Vector3i(s.grid.nx - 1, s.grid.ny - 1, s.grid.nz - 1));
  }
  return box;
}

template <typename Fn>
void for_each_node(const NodeBox& box, Fn&& fn) {
  if (box.empty) return;
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
  for (int i = box.lo[0]; i <= box.hi[0]; ++i) {
    for (int j = box.lo[1]; j <= box.hi[1]; ++j) {
      for (int k = box.lo[2]; k <= box.hi[2]; ++k) fn(i, j, k);
    }
  }
}

std::size_t clamp_into_domain(SandState& s) {
  const Vec3 lo = s.config.lower();
  const Vec3 hi = s.config.upper();
  std::size_t escaped = 0;
  for (auto& p : s.particles) {
    bool out = false;
    for (int a = 0; a < 3; ++a) {
      if (p.position[a] < lo[a]) {
        p.position[a] = lo[a];
        p.velocity[a] = std::max(p.velocity[a], 0.0);
        out = true;
      } else if (p.position[a] > hi[a]) {
        p.position[a] = hi[a];
        p.velocity[a] = std::min(p.velocity[a], 0.0);
        out = true;
      }
    }
    escaped += out;
  }
  return escaped;
}

void grid_update(SandState& s, const NodeBox& box, double dt) {
  const SimConfig& c = s.config;
  Grid& g = s.grid;
  const int b = c.boundary;
  for_each_node(box, [&](int i, int j, int k) {
    const std::size_t n = g.index(i, j, k);
    double* v = &g.momentum[3 * n];
    if (g.mass[n] <= 0) {
      v[0] = v[1] = v[2] = 0;
      return;
    }
    const double inv_m = 1.0 / g.mass[n];
    for (int a = 0; a < 3; ++a) v[a] = v[a] * inv_m + dt * c.gravity[a];
    if (!c.boundaries) return;
    if (k < b) {
      v[0] = v[1] = v[2] = 0;  // sticky floor
      return;
    }
    if (i < b && v[0] < 0) v[0] = 0;
    if (i >= g.nx - b && v[0] > 0) v[0] = 0;
    if (j < b && v[1] < 0) v[1] = 0;
    if (j >= g.ny - b && v[1] > 0) v[1] = 0;
    if (k >= g.nz - b && v[2] > 0) v[2] = 0;
  });
}

void grid_to_particle(SandState& s, double dt) {
  const SimConfig& c = s.config;
  const Grid& g = s.grid;
  const double inv_dx = 1.0 / c.dx;
  const double dinv = 4.0 * inv_dx * inv_dx;
  const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(s.particles.size());
  std::exception_ptr error;
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
  for (std::ptrdiff_t pi = 0; pi < count; ++pi) {
    SandParticle& p = s.particles[pi];
    const Stencil st = stencil(p.position, inv_dx);
    Vec3 v = Vec3::Zero();
    Mat3 B = Mat3::Zero();
    for (int a = 0; a < 3; ++a) {
      for (int b2 = 0; b2 < 3; ++b2) {
        for (int d = 0; d < 3; ++d) {
          const double w = st.w[0][a] * st.w[1][b2] * st.w[2][d];
          const std::size_t n = g.index(st.base[0] + a, st.base[1] + b2, st.base[2] + d);
          const Vec3 gv(g.momentum[3 * n], g.momentum[3 * n + 1], g.momentum[3 * n + 2]);
          const Vec3 dpos = (Vec3(a, b2, d) - st.fx) * c.dx;
          v += w * gv;
          B += w * gv * dpos.transpose();
        }
      }
    }
    p.velocity = v;
    p.C = dinv * B;
    p.position += dt * v;
    Mat3 F = (Mat3::Identity() + dt * p.C) * p.F;
    if (c.plasticity) {
      try {
        F = drucker_prager_project(F, c.friction_angle_deg);
      } catch (...) {
#if defined(_OPENMP)
#pragma omp critical
#endif
        if (!error) error = std::current_exception();
      }
    }
    p.F = F;
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace

void particle_to_grid(SandState& s, double dt) {
  const SimConfig& c = s.config;
  Grid& g = s.grid;
  std::fill(g.mass.begin(), g.mass.end(), 0.0);
  std::fill(g.momentum.begin(), g.momentum.end(), 0.0);
  const double inv_dx = 1.0 / c.dx;
  const double dinv = 4.0 * inv_dx * inv_dx;
  const double mu = c.mu(), lambda = c.lambda();

  const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(s.particles.size());
  std::vector<Mat3> affine(s.particles.size());
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
  for (std::ptrdiff_t pi = 0; pi < count; ++pi) {
    const SandParticle& p = s.particles[pi];
    const Mat3 stress = -dt * p.volume * dinv * kirchhoff(p.F, mu, lambda);
    affine[pi] = stress + p.mass * p.C;
  }

  auto scatter = [&](std::ptrdiff_t pi, bool atomic) {
    const SandParticle& p = s.particles[pi];
    const Stencil st = stencil(p.position, inv_dx);
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        for (int d = 0; d < 3; ++d) {
          const double w = st.w[0][a] * st.w[1][b] * st.w[2][d];
          const Vec3 dpos = (Vec3(a, b, d) - st.fx) * c.dx;
          const Vec3 mv = w * (p.mass * p.velocity + affine[pi] * dpos);
          const std::size_t n = g.index(st.base[0] + a, st.base[1] + b, st.base[2] + d);
          const double wm = w * p.mass;
          if (atomic) {
#if defined(_OPENMP)
#pragma omp atomic
#endif
            g.mass[n] += wm;
            for (int e = 0; e < 3; ++e) {
#if defined(_OPENMP)
#pragma omp atomic
#endif
              g.momentum[3 * n + e] += mv[e];
            }
          } else {
            g.mass[n] += wm;
            for (int e = 0; e < 3; ++e) g.momentum[3 * n + e] += mv[e];
          }
        }
      }
    }
  };

  if (c.deterministic) {
    for (std::ptrdiff_t pi = 0; pi < count; ++pi) scatter(pi, false);
  } else {
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
    for (std::ptrdiff_t pi = 0; pi < count; ++pi) scatter(pi, true);
  }
}

StepReport mpm_step(SandState& s) {
  const SimConfig& c = s.config;
  StepReport report;
  double max_speed = 0;
  for (const auto& p : s.particles) max_speed = std::max(max_speed, p.velocity.norm());
  // Gravity adds at most |g| dt per step on top of the current speed.
  const double speed = max_speed + c.gravity.norm() * c.dt;
  const int substeps = std::max(1, static_cast<int>(std::ceil(speed * c.dt / (c.cfl * c.dx))));
  const double h = c.dt / substeps;

  for (int sub = 0; sub < substeps; ++sub) {
    report.escaped += clamp_into_domain(s);
    particle_to_grid(s, h);
    report.grid_mass = s.grid.total_mass();
    const NodeBox box = particle_box(s);
    grid_update(s, box, h);
    grid_to_particle(s, h);
  }
  report.escaped += clamp_into_domain(s);
  report.substeps = substeps;
  ++s.step;
  s.time += c.dt;
  return report;
}

double drucker_prager_alpha(double friction_angle_deg) {
  const double sp = std::sin(friction_angle_deg * std::numbers::pi / 180.0);
  return std::sqrt(2.0 / 3.0) * 2.0 * sp / (3.0 - sp);
}

Mat3 drucker_prager_project(const Mat3& F_trial, double friction_angle_deg) {
  const Svd3 d = svd3(F_trial);
  const Vec3 eps = d.sigma.array().log();
  const double tr = eps.sum();
  Vec3 projected;
  if (tr > 0) {
    projected.setZero();
  } else {
    const Vec3 dev = eps.array() - tr / 3.0;
    const double dev_norm = dev.norm();
    const double dgamma = dev_norm + drucker_prager_alpha(friction_angle_deg) * tr;
    if (dgamma <= 0 || dev_norm == 0) return F_trial;
    projected = eps - dgamma * dev / dev_norm;
  }
  return d.U * projected.array().exp().matrix().asDiagonal() * d.V.transpose();
}

double smear_profile(double r, double R) {
  if (!(R > 0)) fail(ErrorKind::InvalidArgument, "smear radius must be positive");
  const double q = r / R;
  return std::max(1.0 - q * q, 0.0);
}

std::size_t smear(SandState& state, const Vec3& center, double R, double strength, const Vec3& direction) {
  if (!(R > 0)) fail(ErrorKind::InvalidArgument, "smear radius must be positive");
  std::size_t touched = 0;
  for (auto& p : state.particles) {
    const double r = (p.position - center).norm();
    if (r >= R) continue;
    p.velocity += strength * smear_profile(r, R) * direction;
    ++touched;
  }
  return touched;
}

std::size_t freeze_filter(SandState& state, const Vec3& interaction_center, double R_safe, double v_threshold) {
  if (!(R_safe >= 0)) fail(ErrorKind::InvalidArgument, "R_safe must be >= 0");
  std::size_t frozen = 0;
  for (auto& p : state.particles) {
    if ((p.position - interaction_center).norm() > R_safe && p.velocity.norm() < v_threshold) {
      p.velocity.setZero();
      ++frozen;
    }
  }
  return frozen;
}

double lift_density(double alpha) {
  if (!(alpha >= 0 && alpha <= 1)) fail(ErrorKind::DomainError, "opacity must lie in [0, 1]");
  return -std::expm1(-alpha) / -std::expm1(-1.0);
}

void LiftConfig::validate() const {
  if (particles_per_kernel_max <= 0 || !(deposit_height > 0) || !(z_sigma > 0) || !(px_to_m > 0) ||
      !(particle_volume > 0) || !(density > 0)) {
    fail(ErrorKind::InvalidArgument, "lift parameters must be positive");
  }
}

Vec3 LiftConfig::to_sim(const Vec2& canvas_px, double height_m) const {
  return origin + Vec3(canvas_px[0] * px_to_m, canvas_px[1] * px_to_m, height_m);
}

Vec2 LiftConfig::to_canvas(const Vec3& sim) const {
  return {(sim[0] - origin[0]) / px_to_m, (sim[1] - origin[1]) / px_to_m};
}

void fit_canvas(int width, int height, SimConfig& sim, LiftConfig& lift) {
  if (width <= 0 || height <= 0) fail(ErrorKind::InvalidArgument, "canvas must be non-empty");
  sim.validate();
  const double ex = width * lift.px_to_m / (sim.nx - 2 * sim.boundary);
  const double ey = height * lift.px_to_m / (sim.ny - 2 * sim.boundary);
  sim.dx = std::max(ex, ey);
  lift.origin = Vec3::Constant(sim.boundary * sim.dx);
  lift.particle_volume = std::pow(0.5 * sim.dx, 3);
  lift.density = sim.density;
}

int lift_count(double alpha, int particles_per_kernel_max) {
  const double n = std::ceil(lift_density(alpha) * particles_per_kernel_max);
  return std::max(1, static_cast<int>(n));
}

std::vector<SandParticle> lift_kernels(const Stroke& stroke, int kernel_begin, int kernel_end, const LiftConfig& cfg,
                                       std::uint64_t seed) {
  cfg.validate();
  if (kernel_begin < 0 || kernel_end > static_cast<int>(stroke.size()) || kernel_begin > kernel_end) {
    fail(ErrorKind::InvalidArgument, "kernel range outside the stroke");
  }
  const int count = lift_count(stroke.opacity(), cfg.particles_per_kernel_max);
  std::vector<SandParticle> out;
  out.reserve(static_cast<std::size_t>(count) * (kernel_end - kernel_begin));
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto id = static_cast<std::uint64_t>(raw(stroke.id));
  for (int k = kernel_begin; k < kernel_end; ++k) {
    const Kernel& kernel = stroke.kernels[k];
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(id >> 32),
                      static_cast<std::uint32_t>(kernel.ordinal)};
    std::mt19937_64 rng(seq);
    const Mat2 L = covariance(stroke, kernel).llt().matrixL();
    for (int i = 0; i < count; ++i) {
      const Vec2 xy = kernel.center + L * Vec2(normal(rng), normal(rng));
      const double z = std::max(cfg.deposit_height + cfg.z_sigma * normal(rng), 0.0);
      SandParticle p;
      p.position = cfg.to_sim(xy, z);
      p.volume = cfg.particle_volume;
      p.mass = cfg.density * cfg.particle_volume;
      p.source = stroke.id;
      out.push_back(p);
    }
  }
  return out;
}

std::vector<SandParticle> lift_stroke(const Stroke& stroke, const LiftConfig& cfg, std::uint64_t seed) {
  return lift_kernels(stroke, 0, static_cast<int>(stroke.size()), cfg, seed);
}

Image render_3d(const SandState& state, const LiftConfig& lift, const Rgb& background, const Rgb& sand_color, int width,
                int height, const Render3dOptions& options) {
  if (width <= 0 || height <= 0) fail(ErrorKind::InvalidArgument, "render size must be positive");
  std::vector<double> coverage(static_cast<std::size_t>(width) * height, 0.0);
  for (const auto& p : state.particles) {
    const Vec2 c = lift.to_canvas(p.position);
    const double r = std::cbrt(p.volume) / lift.px_to_m;
    const double reach = options.cutoff_sigma * r;
    const int x0 = std::max(0, static_cast<int>(std::ceil(c[0] - reach)));
    const int x1 = std::min(width - 1, static_cast<int>(std::floor(c[0] + reach)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(c[1] - reach)));
    const int y1 = std::min(height - 1, static_cast<int>(std::floor(c[1] + reach)));
    const double inv = 1.0 / (2 * r * r);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double d2 = (x - c[0]) * (x - c[0]) + (y - c[1]) * (y - c[1]);
        coverage[static_cast<std::size_t>(y) * width + x] += options.absorption_per_particle * std::exp(-d2 * inv);
      }
    }
  }
  Image img(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double cov = coverage[static_cast<std::size_t>(y) * width + x];
      img.set_pixel(x, y, (background - cov * sand_color).cwiseMax(0.0));
    }
  }
  return img;
}

namespace {

void put_le(std::ofstream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_le(std::ofstream& out, float f) {
  const auto v = std::bit_cast<std::uint32_t>(f);
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

void write_particle_dump(const std::filesystem::path& path, const SandState& state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  put_le(out, static_cast<std::uint64_t>(state.particles.size()));
  for (const auto& p : state.particles) {
    const float values[13] = {
        static_cast<float>(p.position[0]), static_cast<float>(p.position[1]), static_cast<float>(p.position[2]),
        static_cast<float>(p.velocity[0]), static_cast<float>(p.velocity[1]), static_cast<float>(p.velocity[2]),
        static_cast<float>(p.mass),        static_cast<float>(p.volume),      static_cast<float>(raw(p.source)),
        static_cast<float>(p.F.determinant()), static_cast<float>(p.F(0, 0)), static_cast<float>(p.F(1, 1)),
        static_cast<float>(p.F(2, 2))};
    for (float v : values) put_le(out, v);
  }
  if (!out) fail(ErrorKind::IoError, "failed writing " + path.string());
}

std::vector<std::array<float, 13>> read_particle_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) fail(ErrorKind::ParseError, path.string() + ": truncated header");
  std::uint64_t count = 0;
  for (int i = 0; i < 8; ++i) count |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  const auto size = std::filesystem::file_size(path);
  if (count > (size - 8) / 52 || (size - 8) % 52 != 0) {
    fail(ErrorKind::ParseError, path.string() + ": size does not match the particle count");
  }
  std::vector<std::array<float, 13>> out(count);
  for (auto& rec : out) {
    for (float& v : rec) {
      if (!in.read(reinterpret_cast<char*>(b), 4)) fail(ErrorKind::ParseError, path.string() + ": truncated record");
      std::uint32_t u = 0;
      for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(b[i]) << (8 * i);
      v = std::bit_cast<float>(u);
    }
  }
  return out;
}

nlohmann::json dump_header(const SandState& state, const LiftConfig& lift) {
  const SimConfig& c = state.config;
  return {{"format", "sandsim-particles-v1"},
          {"endianness", "little"},
          {"layout", {"px", "py", "pz", "vx", "vy", "vz", "mass", "volume", "source_stroke", "det_F", "F00", "F11", "F22"}},
          {"count", state.particles.size()},
          {"step", state.step},
          {"time", state.time},
          {"grid", {c.nx, c.ny, c.nz}},
          {"dx", c.dx},
          {"px_to_m", lift.px_to_m},
          {"origin", {lift.origin[0], lift.origin[1], lift.origin[2]}},
          {"kinetic_energy", state.kinetic_energy()}};
}

}  // namespace sandsim
