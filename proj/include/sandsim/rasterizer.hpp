#pragma once

#include <optional>
#include <unordered_map>
#include <vector>

#include "sandsim/image.hpp"
#include "sandsim/painting.hpp"

namespace sandsim {

/// Inclusive pixel rectangle; empty when x0 > x1 or y0 > y1.
struct PixelRect {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;

  bool empty() const { return x0 > x1 || y0 > y1; }
  int width() const { return empty() ? 0 : x1 - x0 + 1; }
  int height() const { return empty() ? 0 : y1 - y0 + 1; }
};

/// Pixel (px, py) samples the canvas at the point (px, py).
PixelRect bounding_box(const Stroke& stroke, const Kernel& kernel, double cutoff_sigma, int width,
                       int height);

/// Stroke id -> number of leading kernels that are drawn. Strokes absent from
/// the map are not drawn at all.
using ActiveSet = std::unordered_map<StrokeId, int>;

struct RenderOptions {
  double cutoff_sigma = 3.0;
  /// Accumulate kernels in (stroke id, ordinal) order so the result does not
  /// depend on the stroke list order.
  bool deterministic = false;
  int tile_size = 16;
};

struct RenderOutput {
  Image image;
  Image density;                 // sand_color * coverage, before clamping
  std::vector<double> coverage;  // raw per-pixel sum of kernel values, row-major
};

RenderOutput render(const Painting& painting, const RenderOptions& options = {},
                    const std::optional<ActiveSet>& active = std::nullopt);

struct StrokeGradient {
  std::vector<Vec2> centers;
  std::vector<double> rotations;
  Vec2 raw_scale = Vec2::Zero();
  double raw_opacity = 0.0;
};

/// Parallel to Painting::strokes.
struct GradientSet {
  std::vector<StrokeGradient> strokes;

  static GradientSet zeros_like(const Painting& painting);
  void add(const GradientSet& other);
  bool all_finite() const;
};

/// Chain rule from dL/d(image) to every stroke parameter. Pixels whose
/// channel was clamped at zero pass no gradient. Throws NonFiniteGradient.
GradientSet backward(const Painting& painting, const RenderOutput& output, const Image& loss_grad,
                     const RenderOptions& options = {});

}  // namespace sandsim
