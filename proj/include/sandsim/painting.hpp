#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "sandsim/image.hpp"

namespace sandsim {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

enum class StrokeId : std::int64_t {};
enum class RegionId : std::int32_t {};

constexpr std::int64_t raw(StrokeId id) { return static_cast<std::int64_t>(id); }
constexpr std::int32_t raw(RegionId id) { return static_cast<std::int32_t>(id); }

/// Lower bound added to every activated scale so covariances stay invertible.
inline constexpr double kScaleFloor = 0.05;

double activate_scale(double raw);
Vec2 activate_scale(const Vec2& raw);
double activate_opacity(double raw);
double inverse_scale(double scale);
Vec2 inverse_scale(const Vec2& scale);
double inverse_opacity(double opacity);

/// d activate_scale / d raw
double scale_activation_slope(double raw);

struct Kernel {
  Vec2 center = Vec2::Zero();
  double rotation = 0.0;  // radians; canonicalized to [0, pi) only when serialized
  int ordinal = 0;
};

/// A curve-guided stroke: kernels in drawing order sharing one scale and one opacity.
struct Stroke {
  StrokeId id{0};
  std::vector<Kernel> kernels;
  Vec2 raw_scale = Vec2::Zero();
  double raw_opacity = 0.0;
  std::optional<RegionId> region;

  Vec2 scale() const { return activate_scale(raw_scale); }
  double opacity() const { return activate_opacity(raw_opacity); }
  double long_axis() const { return scale().maxCoeff(); }
  std::size_t size() const { return kernels.size(); }

  /// Restores ordinals 0..K-1 after structural edits.
  void renumber();
};

struct Painting {
  int width = 0;
  int height = 0;
  Rgb background = Rgb::Ones();
  Rgb sand_color = Rgb(0.55, 0.47, 0.35);
  std::vector<Stroke> strokes;

  std::size_t kernel_count() const;
  const Stroke* find(StrokeId id) const;
  StrokeId next_stroke_id() const;

  /// Keeps every center inside [-W/4, 5W/4] x [-H/4, 5H/4].
  void clamp_centers();
};

Mat2 rotation_matrix(double angle);

/// Sigma = R S S^T R^T for the stroke's shared scale and the kernel's rotation.
Mat2 covariance(const Stroke& stroke, const Kernel& kernel);

/// alpha * exp(-1/2 (x - mu)^T Sigma^-1 (x - mu))
double eval_kernel(const Stroke& stroke, const Kernel& kernel, const Vec2& point);

/// Maps an angle into [0, pi); ellipses are pi-periodic.
double canonical_rotation(double angle);

inline constexpr int kPaintingSchemaVersion = 1;

nlohmann::json to_json(const Painting& painting);
Painting painting_from_json(const nlohmann::json& doc);
Painting load_painting(const std::filesystem::path& path);
void save_painting(const std::filesystem::path& path, const Painting& painting);

nlohmann::json stroke_to_json(const Stroke& stroke);
Stroke stroke_from_json(const nlohmann::json& doc);

}  // namespace sandsim
