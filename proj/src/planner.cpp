#include "sandsim/planner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <tuple>

#include <json.hpp>

#include "sandsim/error.hpp"

namespace sandsim {

Vec2 Region::centroid() const {
  double sx = 0, sy = 0;
  std::size_t n = 0;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (mask.at(x, y)) {
        sx += x;
        sy += y;
        ++n;
      }
    }
  }
  if (n == 0) return Vec2::Constant(std::numeric_limits<double>::quiet_NaN());
  return {sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

const Region* RegionPlan::find(RegionId id) const {
  auto it = std::find_if(regions.begin(), regions.end(), [id](const Region& r) { return r.id == id; });
  return it == regions.end() ? nullptr : &*it;
}

std::size_t RegionPlan::rank(RegionId id) const {
  auto it = std::find(order.begin(), order.end(), id);
  if (it == order.end()) fail(ErrorKind::InvalidArgument, "region " + std::to_string(raw(id)) + " is not in the plan order");
  return static_cast<std::size_t>(it - order.begin());
}

void RegionPlan::validate() const {
  if (regions.empty()) fail(ErrorKind::InvalidArgument, "plan has no regions");
  std::unordered_set<RegionId> seen;
  for (const auto& r : regions) {
    if (!seen.insert(r.id).second) fail(ErrorKind::DuplicateRegionId, "duplicate region id " + std::to_string(raw(r.id)));
    if (r.layer < 0) fail(ErrorKind::InvalidArgument, "region layer must be >= 0");
    if (r.mask.width != width() || r.mask.height != height()) {
      fail(ErrorKind::DimensionMismatch, "mask of region " + std::to_string(raw(r.id)) + " has a different size");
    }
  }
  if (order.size() != regions.size()) fail(ErrorKind::InvalidArgument, "order must list every region once");
  std::unordered_set<RegionId> in_order(order.begin(), order.end());
  if (in_order != seen) fail(ErrorKind::InvalidArgument, "order must list every region once");
  for (RegionId id : background_ids) {
    if (!seen.contains(id)) fail(ErrorKind::InvalidArgument, "background id " + std::to_string(raw(id)) + " is not a region");
  }
  bool foreground_seen = false;
  for (RegionId id : order) {
    if (is_background(id) && foreground_seen) fail(ErrorKind::InvalidArgument, "background regions must precede foreground regions");
    foreground_seen = foreground_seen || !is_background(id);
  }
}

std::vector<RegionId> infer_order(const std::vector<Region>& regions) {
  struct Key {
    int layer;
    std::size_t area;
    double cy;
    std::int32_t id;
  };
  std::vector<Key> keys;
  keys.reserve(regions.size());
  for (const auto& r : regions) {
    const Vec2 c = r.centroid();
    keys.push_back({r.layer, r.mask.area(), std::isnan(c[1]) ? std::numeric_limits<double>::infinity() : c[1], raw(r.id)});
  }
  std::stable_sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
    return std::tie(a.layer, b.area, a.cy, a.id) < std::tie(b.layer, a.area, b.cy, b.id);
  });
  std::vector<RegionId> order;
  order.reserve(keys.size());
  for (const auto& k : keys) order.push_back(RegionId{k.id});
  return order;
}

RegionPlan make_plan(std::vector<Region> regions, const std::unordered_set<RegionId>& background_ids) {
  RegionPlan plan;
  plan.order = infer_order(regions);
  plan.regions = std::move(regions);
  plan.background_ids = background_ids;
  std::stable_partition(plan.order.begin(), plan.order.end(),
                        [&plan](RegionId id) { return plan.is_background(id); });
  plan.validate();
  return plan;
}

RegionPlan fallback_plan(int width, int height) {
  Region r;
  r.id = RegionId{0};
  r.label = "canvas";
  r.layer = 0;
  r.method = DrawMethod::Fill;
  r.mask.width = width;
  r.mask.height = height;
  r.mask.bits.assign(static_cast<std::size_t>(width) * height, 1);
  std::vector<Region> regions;
  regions.push_back(std::move(r));
  return make_plan(std::move(regions), {RegionId{0}});
}

std::string to_string(DrawMethod method) { return method == DrawMethod::Line ? "line" : "fill"; }

DrawMethod parse_draw_method(const std::string& text) {
  if (text == "fill") return DrawMethod::Fill;
  if (text == "line") return DrawMethod::Line;
  fail(ErrorKind::ParseError, "unknown drawing method '" + text + "'");
}

RegionPlan load_plan(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) fail(ErrorKind::IoError, "cannot open plan manifest " + manifest.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, manifest.string() + ": " + e.what());
  }

  const auto base = manifest.parent_path();
  std::vector<Region> regions;
  std::unordered_set<RegionId> background;
  std::unordered_set<RegionId> seen;
  try {
    for (const auto& rec : doc.at("regions")) {
      Region r;
      r.id = RegionId{rec.at("id").get<std::int32_t>()};
      if (!seen.insert(r.id).second) fail(ErrorKind::DuplicateRegionId, "duplicate region id " + std::to_string(raw(r.id)));
      r.label = rec.value("label", std::string{});
      r.layer = rec.value("layer", 0);
      r.method = parse_draw_method(rec.value("method", std::string{"fill"}));
      r.mask = read_mask_png(base / rec.at("mask_path").get<std::string>());
      if (rec.value("background", false)) background.insert(r.id);
      regions.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, manifest.string() + ": " + e.what());
  }
  if (regions.empty()) fail(ErrorKind::InvalidArgument, "plan manifest lists no regions");

  const int w = doc.value("width", regions.front().mask.width);
  const int h = doc.value("height", regions.front().mask.height);
  for (const auto& r : regions) {
    if (r.mask.width != w || r.mask.height != h) {
      fail(ErrorKind::DimensionMismatch, "mask of region " + std::to_string(raw(r.id)) + " is " +
                                             std::to_string(r.mask.width) + "x" + std::to_string(r.mask.height) +
                                             ", canvas is " + std::to_string(w) + "x" + std::to_string(h));
    }
  }

  RegionPlan plan = make_plan(std::move(regions), background);
  if (doc.contains("order")) {
    plan.order.clear();
    for (const auto& id : doc["order"]) plan.order.push_back(RegionId{id.get<std::int32_t>()});
    plan.validate();
  }
  return plan;
}

std::filesystem::path save_plan(const RegionPlan& plan, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json regions = nlohmann::json::array();
  for (const auto& r : plan.regions) {
    const std::string mask_name = "mask_" + std::to_string(raw(r.id)) + ".png";
    write_mask_png(dir / mask_name, r.mask);
    regions.push_back({{"id", raw(r.id)},
                       {"label", r.label},
                       {"layer", r.layer},
                       {"method", to_string(r.method)},
                       {"mask_path", mask_name},
                       {"background", plan.is_background(r.id)}});
  }
  nlohmann::json order = nlohmann::json::array();
  for (RegionId id : plan.order) order.push_back(raw(id));
  const nlohmann::json doc = {{"width", plan.width()}, {"height", plan.height()}, {"regions", regions}, {"order", order}};
  const auto path = dir / "plan.json";
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
  return path;
}

Painting classify_strokes(Painting painting, const RegionPlan& plan) {
  if (plan.width() != painting.width || plan.height() != painting.height) {
    fail(ErrorKind::DimensionMismatch, "plan masks do not match the canvas");
  }
  std::vector<Vec2> centroids;
  for (const auto& r : plan.regions) centroids.push_back(r.centroid());

  // Higher layer first, then lower id: the winner among overlapping masks.
  auto outranks = [](const Region& a, const Region& b) {
    return a.layer != b.layer ? a.layer > b.layer : raw(a.id) < raw(b.id);
  };

  for (auto& stroke : painting.strokes) {
    std::map<std::size_t, int> votes;  // region index -> covered centers
    Vec2 mean = Vec2::Zero();
    for (const auto& k : stroke.kernels) {
      mean += k.center;
      std::optional<std::size_t> owner;
      for (std::size_t ri = 0; ri < plan.regions.size(); ++ri) {
        if (!plan.regions[ri].mask.contains(k.center[0], k.center[1])) continue;
        if (!owner || outranks(plan.regions[ri], plan.regions[*owner])) owner = ri;
      }
      if (owner) ++votes[*owner];
    }
    mean /= static_cast<double>(stroke.kernels.size());

    std::optional<std::size_t> chosen;
    for (const auto& [ri, count] : votes) {
      if (!chosen) {
        chosen = ri;
        continue;
      }
      const int best = votes[*chosen];
      if (count > best || (count == best && outranks(plan.regions[ri], plan.regions[*chosen]))) chosen = ri;
    }
    if (!chosen) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t ri = 0; ri < plan.regions.size(); ++ri) {
        if (centroids[ri].hasNaN()) continue;
        const double d = (centroids[ri] - mean).norm();
        if (d < best || (d == best && chosen && raw(plan.regions[ri].id) < raw(plan.regions[*chosen].id))) {
          best = d;
          chosen = ri;
        }
      }
    }
    stroke.region = chosen ? std::optional<RegionId>(plan.regions[*chosen].id) : std::nullopt;
  }
  return painting;
}

}  // namespace sandsim
