#include "sandsim/rasterizer.hpp"

#include <algorithm>
#include <cmath>

#include "sandsim/error.hpp"

namespace sandsim {

namespace {

// Everything needed to evaluate one kernel, hoisted out of the pixel loops.
struct KernelSample {
  std::size_t stroke = 0;
  std::size_t kernel = 0;
  PixelRect rect;
  double cx = 0, cy = 0;
  double cos_t = 1, sin_t = 0;
  double inv_sx2 = 1, inv_sy2 = 1;
  double alpha = 1;

  // Returns the rotated offset (q0, q1) and the unscaled falloff exp(-m/2).
  double falloff(int px, int py, double& q0, double& q1) const {
    const double dx = px - cx;
    const double dy = py - cy;
    q0 = cos_t * dx + sin_t * dy;
    q1 = -sin_t * dx + cos_t * dy;
    return std::exp(-0.5 * (q0 * q0 * inv_sx2 + q1 * q1 * inv_sy2));
  }
};

KernelSample make_sample(const Painting& p, std::size_t si, std::size_t ki, double cutoff) {
  const Stroke& s = p.strokes[si];
  const Kernel& k = s.kernels[ki];
  const Vec2 scale = s.scale();
  KernelSample out;
  out.stroke = si;
  out.kernel = ki;
  out.rect = bounding_box(s, k, cutoff, p.width, p.height);
  out.cx = k.center[0];
  out.cy = k.center[1];
  out.cos_t = std::cos(k.rotation);
  out.sin_t = std::sin(k.rotation);
  out.inv_sx2 = 1.0 / (scale[0] * scale[0]);
  out.inv_sy2 = 1.0 / (scale[1] * scale[1]);
  out.alpha = s.opacity();
  return out;
}

std::vector<KernelSample> collect_samples(const Painting& p, const RenderOptions& options,
                                          const std::optional<ActiveSet>& active) {
  std::vector<KernelSample> samples;
  samples.reserve(p.kernel_count());
  for (std::size_t si = 0; si < p.strokes.size(); ++si) {
    const Stroke& s = p.strokes[si];
    std::size_t count = s.kernels.size();
    if (active) {
      auto it = active->find(s.id);
      count = it == active->end() ? 0 : std::min<std::size_t>(count, static_cast<std::size_t>(std::max(it->second, 0)));
    }
    for (std::size_t ki = 0; ki < count; ++ki) {
      KernelSample sample = make_sample(p, si, ki, options.cutoff_sigma);
      if (!sample.rect.empty()) samples.push_back(sample);
    }
  }
  if (options.deterministic) {
    std::stable_sort(samples.begin(), samples.end(), [&p](const KernelSample& a, const KernelSample& b) {
      const auto ia = raw(p.strokes[a.stroke].id);
      const auto ib = raw(p.strokes[b.stroke].id);
      return ia != ib ? ia < ib : a.kernel < b.kernel;
    });
  }
  return samples;
}

}  // namespace

PixelRect bounding_box(const Stroke& stroke, const Kernel& kernel, double cutoff_sigma, int width,
                       int height) {
  if (!(cutoff_sigma > 0)) fail(ErrorKind::InvalidArgument, "cutoff_sigma must be positive");
  const Mat2 cov = covariance(stroke, kernel);
  const double ex = cutoff_sigma * std::sqrt(cov(0, 0));
  const double ey = cutoff_sigma * std::sqrt(cov(1, 1));
  const Vec2& c = kernel.center;
  PixelRect r;
  const double lo_x = std::ceil(c[0] - ex), hi_x = std::floor(c[0] + ex);
  const double lo_y = std::ceil(c[1] - ey), hi_y = std::floor(c[1] + ey);
  if (hi_x < 0 || hi_y < 0 || lo_x > width - 1 || lo_y > height - 1) return PixelRect{};
  r.x0 = static_cast<int>(std::max(lo_x, 0.0));
  r.y0 = static_cast<int>(std::max(lo_y, 0.0));
  r.x1 = static_cast<int>(std::min(hi_x, static_cast<double>(width - 1)));
  r.y1 = static_cast<int>(std::min(hi_y, static_cast<double>(height - 1)));
  return r;
}

RenderOutput render(const Painting& painting, const RenderOptions& options,
                    const std::optional<ActiveSet>& active) {
  const int w = painting.width;
  const int h = painting.height;
  const int tile = std::max(options.tile_size, 1);
  const std::vector<KernelSample> samples = collect_samples(painting, options, active);

  const int tiles_x = (w + tile - 1) / tile;
  const int tiles_y = (h + tile - 1) / tile;
  std::vector<std::vector<std::uint32_t>> bins(static_cast<std::size_t>(tiles_x) * tiles_y);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const PixelRect& r = samples[i].rect;
    for (int ty = r.y0 / tile; ty <= r.y1 / tile; ++ty) {
      for (int tx = r.x0 / tile; tx <= r.x1 / tile; ++tx) {
        bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(static_cast<std::uint32_t>(i));
      }
    }
  }

  RenderOutput out;
  out.coverage.assign(static_cast<std::size_t>(w) * h, 0.0);
  const int n_tiles = tiles_x * tiles_y;
#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic)
#endif
  for (int t = 0; t < n_tiles; ++t) {
    const int tx0 = (t % tiles_x) * tile;
    const int ty0 = (t / tiles_x) * tile;
    const int tx1 = std::min(tx0 + tile, w) - 1;
    const int ty1 = std::min(ty0 + tile, h) - 1;
    for (std::uint32_t idx : bins[static_cast<std::size_t>(t)]) {
      const KernelSample& k = samples[idx];
      const int x0 = std::max(k.rect.x0, tx0), x1 = std::min(k.rect.x1, tx1);
      const int y0 = std::max(k.rect.y0, ty0), y1 = std::min(k.rect.y1, ty1);
      for (int py = y0; py <= y1; ++py) {
        double* row = out.coverage.data() + static_cast<std::size_t>(py) * w;
        for (int px = x0; px <= x1; ++px) {
          double q0, q1;
          row[px] += k.alpha * k.falloff(px, py, q0, q1);
        }
      }
    }
  }

  out.image = Image(w, h);
  out.density = Image(w, h);
  const Rgb& b = painting.background;
  const Rgb& c = painting.sand_color;
  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      const double cov = out.coverage[static_cast<std::size_t>(py) * w + px];
      for (int ch = 0; ch < 3; ++ch) {
        const double d = c[ch] * cov;
        out.density.at(px, py, ch) = d;
        out.image.at(px, py, ch) = std::max(b[ch] - d, 0.0);
      }
    }
  }
  return out;
}

GradientSet GradientSet::zeros_like(const Painting& painting) {
  GradientSet g;
  g.strokes.resize(painting.strokes.size());
  for (std::size_t i = 0; i < painting.strokes.size(); ++i) {
    const std::size_t k = painting.strokes[i].kernels.size();
    g.strokes[i].centers.assign(k, Vec2::Zero());
    g.strokes[i].rotations.assign(k, 0.0);
  }
  return g;
}

void GradientSet::add(const GradientSet& other) {
  if (other.strokes.size() != strokes.size()) fail(ErrorKind::DimensionMismatch, "gradient sets differ in shape");
  for (std::size_t i = 0; i < strokes.size(); ++i) {
    auto& a = strokes[i];
    const auto& b = other.strokes[i];
    if (a.centers.size() != b.centers.size()) fail(ErrorKind::DimensionMismatch, "gradient sets differ in shape");
    for (std::size_t k = 0; k < a.centers.size(); ++k) {
      a.centers[k] += b.centers[k];
      a.rotations[k] += b.rotations[k];
    }
    a.raw_scale += b.raw_scale;
    a.raw_opacity += b.raw_opacity;
  }
}

bool GradientSet::all_finite() const {
  for (const auto& s : strokes) {
    if (!s.raw_scale.allFinite() || !std::isfinite(s.raw_opacity)) return false;
    for (std::size_t k = 0; k < s.centers.size(); ++k) {
      if (!s.centers[k].allFinite() || !std::isfinite(s.rotations[k])) return false;
    }
  }
  return true;
}

GradientSet backward(const Painting& painting, const RenderOutput& output, const Image& loss_grad,
                     const RenderOptions& options) {
  const int w = painting.width;
  const int h = painting.height;
  if (loss_grad.width() != w || loss_grad.height() != h || output.image.width() != w ||
      output.image.height() != h) {
    fail(ErrorKind::DimensionMismatch, "loss gradient does not match the canvas");
  }

  // dL/d(coverage) per pixel, with clamped channels masked out.
  const Rgb& b = painting.background;
  const Rgb& c = painting.sand_color;
  std::vector<double> upstream(static_cast<std::size_t>(w) * h, 0.0);
  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      const double cov = output.coverage[static_cast<std::size_t>(py) * w + px];
      double u = 0.0;
      for (int ch = 0; ch < 3; ++ch) {
        if (b[ch] - c[ch] * cov > 0.0) u -= loss_grad.at(px, py, ch) * c[ch];
      }
      upstream[static_cast<std::size_t>(py) * w + px] = u;
    }
  }

  GradientSet grads = GradientSet::zeros_like(painting);
  // Per kernel: d/d(center), d/d(rotation), d/d(activated scale), d/d(opacity).
  struct KernelGrad {
    Vec2 center = Vec2::Zero();
    double rotation = 0, sx = 0, sy = 0, alpha = 0;
  };
  const std::vector<KernelSample> samples = collect_samples(painting, RenderOptions{options.cutoff_sigma, false, options.tile_size}, std::nullopt);
  std::vector<KernelGrad> kg(samples.size());

  const long n = static_cast<long>(samples.size());
#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic, 8)
#endif
  for (long i = 0; i < n; ++i) {
    const KernelSample& k = samples[static_cast<std::size_t>(i)];
    double g_q0 = 0, g_q1 = 0, g_rot = 0, g_sx = 0, g_sy = 0, g_alpha = 0;
    for (int py = k.rect.y0; py <= k.rect.y1; ++py) {
      const double* urow = upstream.data() + static_cast<std::size_t>(py) * w;
      for (int px = k.rect.x0; px <= k.rect.x1; ++px) {
        const double u = urow[px];
        if (u == 0.0) continue;
        double q0, q1;
        const double e = k.falloff(px, py, q0, q1);
        const double ug = u * k.alpha * e;
        // Sigma^-1 (x - mu) expressed in the rotated frame.
        g_q0 += ug * q0 * k.inv_sx2;
        g_q1 += ug * q1 * k.inv_sy2;
        g_rot -= ug * q0 * q1 * (k.inv_sx2 - k.inv_sy2);
        g_sx += ug * q0 * q0;
        g_sy += ug * q1 * q1;
        g_alpha += u * e;
      }
    }
    KernelGrad& out = kg[static_cast<std::size_t>(i)];
    // back to canvas axes: R * (g_q0, g_q1)
    out.center = {k.cos_t * g_q0 - k.sin_t * g_q1, k.sin_t * g_q0 + k.cos_t * g_q1};
    out.rotation = g_rot;
    out.sx = g_sx * k.inv_sx2 * std::sqrt(k.inv_sx2);
    out.sy = g_sy * k.inv_sy2 * std::sqrt(k.inv_sy2);
    out.alpha = g_alpha;
  }

  std::vector<Vec2> scale_grad(painting.strokes.size(), Vec2::Zero());
  std::vector<double> alpha_grad(painting.strokes.size(), 0.0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const KernelSample& k = samples[i];
    auto& sg = grads.strokes[k.stroke];
    sg.centers[k.kernel] += kg[i].center;
    sg.rotations[k.kernel] += kg[i].rotation;
    scale_grad[k.stroke] += Vec2(kg[i].sx, kg[i].sy);
    alpha_grad[k.stroke] += kg[i].alpha;
  }
  for (std::size_t si = 0; si < painting.strokes.size(); ++si) {
    const Stroke& s = painting.strokes[si];
    const double a = s.opacity();
    grads.strokes[si].raw_scale = {scale_grad[si][0] * scale_activation_slope(s.raw_scale[0]),
                                   scale_grad[si][1] * scale_activation_slope(s.raw_scale[1])};
    grads.strokes[si].raw_opacity = alpha_grad[si] * a * (1.0 - a);
  }
  if (!grads.all_finite()) fail(ErrorKind::NonFiniteGradient, "rasterizer produced a non-finite gradient");
  return grads;
}

}  // namespace sandsim
