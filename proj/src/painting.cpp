#include "sandsim/painting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "sandsim/error.hpp"

namespace sandsim {

// Scales use softplus plus a floor; opacity uses the logistic sigmoid.

double activate_scale(double raw) {
  const double softplus = raw > 30.0 ? raw : std::log1p(std::exp(raw));
  return softplus + kScaleFloor;
}

Vec2 activate_scale(const Vec2& raw) { return {activate_scale(raw[0]), activate_scale(raw[1])}; }

double activate_opacity(double raw) {
  if (raw >= 0) return 1.0 / (1.0 + std::exp(-raw));
  const double e = std::exp(raw);
  return e / (1.0 + e);
}

double inverse_scale(double scale) {
  if (!(scale > kScaleFloor)) fail(ErrorKind::DomainError, "scale must exceed the activation floor");
  const double y = scale - kScaleFloor;
  return y > 30.0 ? y : std::log(std::expm1(y));
}

Vec2 inverse_scale(const Vec2& scale) { return {inverse_scale(scale[0]), inverse_scale(scale[1])}; }

double inverse_opacity(double opacity) {
  if (!(opacity > 0.0 && opacity < 1.0)) fail(ErrorKind::DomainError, "opacity must lie in (0, 1)");
  return std::log(opacity) - std::log1p(-opacity);
}

double scale_activation_slope(double raw) { return activate_opacity(raw); }

void Stroke::renumber() {
  for (std::size_t k = 0; k < kernels.size(); ++k) kernels[k].ordinal = static_cast<int>(k);
}

std::size_t Painting::kernel_count() const {
  std::size_t n = 0;
  for (const auto& s : strokes) n += s.kernels.size();
  return n;
}

const Stroke* Painting::find(StrokeId id) const {
  auto it = std::find_if(strokes.begin(), strokes.end(), [id](const Stroke& s) { return s.id == id; });
  return it == strokes.end() ? nullptr : &*it;
}

StrokeId Painting::next_stroke_id() const {
  std::int64_t next = 0;
  for (const auto& s : strokes) next = std::max(next, raw(s.id) + 1);
  return StrokeId{next};
}

void Painting::clamp_centers() {
  const double mx = 0.25 * width;
  const double my = 0.25 * height;
  for (auto& s : strokes) {
    for (auto& k : s.kernels) {
      k.center[0] = std::clamp(k.center[0], -mx, width + mx);
      k.center[1] = std::clamp(k.center[1], -my, height + my);
    }
  }
}

Mat2 rotation_matrix(double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Mat2 r;
  r << c, -s, s, c;
  return r;
}

Mat2 covariance(const Stroke& stroke, const Kernel& kernel) {
  const Vec2 s = stroke.scale();
  const Mat2 r = rotation_matrix(kernel.rotation);
  const Mat2 s2 = s.cwiseProduct(s).asDiagonal();
  return r * s2 * r.transpose();
}

double eval_kernel(const Stroke& stroke, const Kernel& kernel, const Vec2& point) {
  const Vec2 s = stroke.scale();
  const Vec2 q = rotation_matrix(kernel.rotation).transpose() * (point - kernel.center);
  const double m = q[0] * q[0] / (s[0] * s[0]) + q[1] * q[1] / (s[1] * s[1]);
  return stroke.opacity() * std::exp(-0.5 * m);
}

double canonical_rotation(double angle) {
  double a = std::fmod(angle, std::numbers::pi);
  if (a < 0) a += std::numbers::pi;
  if (a >= std::numbers::pi) a = 0.0;
  return a;
}

nlohmann::json stroke_to_json(const Stroke& stroke) {
  nlohmann::json kernels = nlohmann::json::array();
  for (const auto& k : stroke.kernels) {
    kernels.push_back({{"x", k.center[0]}, {"y", k.center[1]}, {"rotation", canonical_rotation(k.rotation)}});
  }
  nlohmann::json doc = {
      {"id", raw(stroke.id)},
      {"raw_scale", {stroke.raw_scale[0], stroke.raw_scale[1]}},
      {"raw_opacity", stroke.raw_opacity},
      {"kernels", std::move(kernels)},
  };
  doc["region"] = stroke.region ? nlohmann::json(raw(*stroke.region)) : nlohmann::json(nullptr);
  return doc;
}

Stroke stroke_from_json(const nlohmann::json& doc) {
  Stroke s;
  s.id = StrokeId{doc.at("id").get<std::int64_t>()};
  s.raw_scale = {doc.at("raw_scale").at(0).get<double>(), doc.at("raw_scale").at(1).get<double>()};
  s.raw_opacity = doc.at("raw_opacity").get<double>();
  if (doc.contains("region") && !doc["region"].is_null()) s.region = RegionId{doc["region"].get<std::int32_t>()};
  for (const auto& k : doc.at("kernels")) {
    Kernel kernel;
    kernel.center = {k.at("x").get<double>(), k.at("y").get<double>()};
    kernel.rotation = k.value("rotation", 0.0);
    s.kernels.push_back(kernel);
  }
  if (s.kernels.empty()) fail(ErrorKind::ParseError, "stroke " + std::to_string(raw(s.id)) + " has no kernels");
  s.renumber();
  return s;
}

nlohmann::json to_json(const Painting& painting) {
  nlohmann::json strokes = nlohmann::json::array();
  for (const auto& s : painting.strokes) strokes.push_back(stroke_to_json(s));
  const auto& b = painting.background;
  const auto& c = painting.sand_color;
  return {
      {"schema_version", kPaintingSchemaVersion},
      {"width", painting.width},
      {"height", painting.height},
      {"background", {b[0], b[1], b[2]}},
      {"sand_color", {c[0], c[1], c[2]}},
      {"strokes", std::move(strokes)},
  };
}

Painting painting_from_json(const nlohmann::json& doc) {
  try {
    const int version = doc.at("schema_version").get<int>();
    if (version != kPaintingSchemaVersion) {
      fail(ErrorKind::ParseError, "unsupported painting schema_version " + std::to_string(version));
    }
    Painting p;
    p.width = doc.at("width").get<int>();
    p.height = doc.at("height").get<int>();
    if (p.width <= 0 || p.height <= 0) fail(ErrorKind::ParseError, "painting dimensions must be positive");
    for (int c = 0; c < 3; ++c) {
      p.background[c] = doc.at("background").at(c).get<double>();
      p.sand_color[c] = doc.at("sand_color").at(c).get<double>();
    }
    for (const auto& s : doc.at("strokes")) p.strokes.push_back(stroke_from_json(s));
    return p;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("painting json: ") + e.what());
  }
}

Painting load_painting(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
  return painting_from_json(doc);
}

void save_painting(const std::filesystem::path& path, const Painting& painting) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << to_json(painting).dump(1) << '\n';
}

}  // namespace sandsim
