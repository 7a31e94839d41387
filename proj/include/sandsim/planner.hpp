#pragma once

#include <filesystem>
#include <string>
#include <unordered_set>
#include <vector>

#include "sandsim/image.hpp"
#include "sandsim/painting.hpp"

namespace sandsim {

enum class DrawMethod { Fill, Line };

struct Region {
  RegionId id{0};
  std::string label;
  int layer = 0;  // 0 is furthest back
  DrawMethod method = DrawMethod::Fill;
  Mask mask;

  Vec2 centroid() const;
};

struct RegionPlan {
  std::vector<Region> regions;
  std::vector<RegionId> order;  // drawing order, each region exactly once
  std::unordered_set<RegionId> background_ids;

  int width() const { return regions.empty() ? 0 : regions.front().mask.width; }
  int height() const { return regions.empty() ? 0 : regions.front().mask.height; }

  const Region* find(RegionId id) const;
  bool is_background(RegionId id) const { return background_ids.contains(id); }
  /// Position of the region in the drawing order.
  std::size_t rank(RegionId id) const;

  /// Throws DimensionMismatch / DuplicateRegionId / InvalidArgument on violations.
  void validate() const;
};

/// Sort key: layer ascending, mask area descending, centroid y ascending, id ascending.
std::vector<RegionId> infer_order(const std::vector<Region>& regions);

/// Builds a plan from regions, putting background regions ahead of the rest
/// of the inferred order.
RegionPlan make_plan(std::vector<Region> regions, const std::unordered_set<RegionId>& background_ids);

/// One background region covering the whole canvas.
RegionPlan fallback_plan(int width, int height);

/// JSON manifest: {"regions": [{id, label, layer, method, mask_path, background}]}.
/// Mask paths resolve relative to the manifest's directory.
RegionPlan load_plan(const std::filesystem::path& manifest);

/// Writes the manifest plus one mask PNG per region into `dir`; returns the manifest path.
std::filesystem::path save_plan(const RegionPlan& plan, const std::filesystem::path& dir);

/// Assigns each stroke a region by majority vote over its kernel centers.
Painting classify_strokes(Painting painting, const RegionPlan& plan);

std::string to_string(DrawMethod method);
DrawMethod parse_draw_method(const std::string& text);

}  // namespace sandsim

