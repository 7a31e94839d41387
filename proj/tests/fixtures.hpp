#pragma once

#include <cmath>
#include <filesystem>
#include <algorithm>
#include <functional>
#include <numbers>
#include <random>
#include <string>

#include <unistd.h>

#include "sandsim/error.hpp"
#include "sandsim/painting.hpp"
#include "sandsim/rasterizer.hpp"

namespace fixtures {

using sandsim::Kernel;
using sandsim::Painting;
using sandsim::Stroke;
using sandsim::StrokeId;
using sandsim::Vec2;

/// The ErrorKind thrown by fn, or nullopt when it returns normally.
inline std::optional<sandsim::ErrorKind> thrown_kind(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const sandsim::Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

/// Kernels spaced `spacing` apart along the x axis starting at (x0, y0).
inline Stroke line_stroke(std::int64_t id, double x0, double y0, int count, double spacing, double scale,
                          double opacity, double angle = 0.0) {
  Stroke s;
  s.id = StrokeId{id};
  const Vec2 dir(std::cos(angle), std::sin(angle));
  for (int i = 0; i < count; ++i) {
    Kernel k;
    k.center = Vec2(x0, y0) + i * spacing * dir;
    k.rotation = angle;
    k.ordinal = i;
    s.kernels.push_back(k);
  }
  s.raw_scale = sandsim::inverse_scale(Vec2(scale, scale));
  s.raw_opacity = sandsim::inverse_opacity(opacity);
  return s;
}

inline Stroke random_stroke(std::mt19937_64& rng, std::int64_t id, int width, int height, int max_kernels,
                            double min_scale = 0.6, double max_scale = 4.0) {
  std::uniform_real_distribution<double> ux(0, width), uy(0, height), ua(0, 2 * std::numbers::pi),
      us(min_scale, max_scale), uo(0.05, 0.95), step(-1.5, 1.5);
  std::uniform_int_distribution<int> nk(1, max_kernels);
  Stroke s;
  s.id = StrokeId{id};
  Vec2 c(ux(rng), uy(rng));
  const int n = nk(rng);
  for (int i = 0; i < n; ++i) {
    s.kernels.push_back({c, ua(rng), i});
    c += Vec2(step(rng), step(rng));
  }
  s.raw_scale = sandsim::inverse_scale(Vec2(us(rng), us(rng)));
  s.raw_opacity = sandsim::inverse_opacity(uo(rng));
  return s;
}

inline Painting random_painting(std::mt19937_64& rng, int width, int height, int strokes, int max_kernels,
                                double min_scale = 0.6, double max_scale = 4.0) {
  Painting p;
  p.width = width;
  p.height = height;
  for (int i = 0; i < strokes; ++i) {
    p.strokes.push_back(random_stroke(rng, i + 1, width, height, max_kernels, min_scale, max_scale));
  }
  return p;
}


/// Every scalar parameter of a painting, in a fixed order, with the matching
/// slot of a GradientSet.
struct ParamRef {
  double* value;
  double* grad;
  std::string name;
};

inline std::vector<ParamRef> parameters(Painting& p, sandsim::GradientSet& g) {
  std::vector<ParamRef> out;
  for (std::size_t s = 0; s < p.strokes.size(); ++s) {
    Stroke& st = p.strokes[s];
    auto& gs = g.strokes[s];
    const std::string tag = "stroke " + std::to_string(s);
    for (std::size_t k = 0; k < st.kernels.size(); ++k) {
      const std::string kt = tag + " kernel " + std::to_string(k);
      out.push_back({&st.kernels[k].center[0], &gs.centers[k][0], kt + " cx"});
      out.push_back({&st.kernels[k].center[1], &gs.centers[k][1], kt + " cy"});
      out.push_back({&st.kernels[k].rotation, &gs.rotations[k], kt + " rotation"});
    }
    out.push_back({&st.raw_scale[0], &gs.raw_scale[0], tag + " raw_scale x"});
    out.push_back({&st.raw_scale[1], &gs.raw_scale[1], tag + " raw_scale y"});
    out.push_back({&st.raw_opacity, &gs.raw_opacity, tag + " raw_opacity"});
  }
  return out;
}

struct GradientCheck {
  std::size_t checked = 0;
  std::size_t failed = 0;
  double worst_relative = 0;
  std::string worst_name;
};

/// Compares backward() against central differences of L = sum(weights * image).
/// The cutoff is wide enough to cover the canvas so the loss is smooth in
/// every parameter.
inline GradientCheck check_gradients(const Painting& painting, const sandsim::Image& weights, double eps = 1e-4,
                                     double rel_tol = 1e-4, double abs_floor = 1e-8) {
  sandsim::RenderOptions opt;
  opt.cutoff_sigma = 1e3;
  auto loss = [&](const Painting& p) {
    const sandsim::Image img = sandsim::render(p, opt).image;
    double l = 0;
    for (std::size_t i = 0; i < img.data().size(); ++i) l += weights.data()[i] * img.data()[i];
    return l;
  };
  const auto out = sandsim::render(painting, opt);
  sandsim::GradientSet analytic = sandsim::backward(painting, out, weights, opt);
  Painting probe = painting;
  GradientCheck report;
  for (ParamRef& ref : parameters(probe, analytic)) {
    const double x0 = *ref.value;
    *ref.value = x0 + eps;
    const double up = loss(probe);
    *ref.value = x0 - eps;
    const double down = loss(probe);
    *ref.value = x0;
    const double fd = (up - down) / (2 * eps);
    const double a = *ref.grad;
    const double err = std::abs(a - fd);
    const double scale = std::max(std::abs(a), std::abs(fd));
    const double rel = scale > 0 ? err / scale : 0.0;
    ++report.checked;
    if (err > rel_tol * scale + abs_floor) ++report.failed;
    if (err > abs_floor && rel > report.worst_relative) {
      report.worst_relative = rel;
      report.worst_name = ref.name;
    }
  }
  return report;
}

/// Random scene on which no pixel sits at the zero clamp, where the image is
/// not differentiable.
inline Painting unclamped_scene(std::mt19937_64& rng, int width, int height, int max_strokes, int max_kernels) {
  std::uniform_int_distribution<int> ns(1, max_strokes);
  sandsim::RenderOptions opt;
  opt.cutoff_sigma = 1e3;
  for (;;) {
    Painting p = random_painting(rng, width, height, ns(rng), max_kernels);
    p.sand_color = sandsim::Rgb(0.45, 0.38, 0.3);
    const auto img = sandsim::render(p, opt).image;
    if (*std::min_element(img.data().begin(), img.data().end()) > 1e-3) return p;
  }
}

/// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("sandsim_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures
