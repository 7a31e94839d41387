#pragma once

#include <vector>

#include "sandsim/painting.hpp"

namespace sandsim {

struct TopologyConfig {
  double point_merge_dist = 0.1;            // px
  double stroke_merge_endpoint_dist = 5.0;  // px
  double prune_opacity = 0.01;
  double prune_radius = 3.0;           // px, compared with the long axis
  double attribute_similarity = 0.2;   // relative tolerance on scale and opacity
  double tangent_tolerance_deg = 30.0;
  /// Multiplies prune_opacity during the second half of the active topology window.
  double late_prune_multiplier = 1.0;
  int max_rounds = 32;

  void validate() const;
};

struct TopologySummary {
  int points_merged = 0;   // kernels removed by point merging
  int strokes_split = 0;   // cuts made
  int strokes_merged = 0;  // stroke pairs joined
  int strokes_pruned = 0;
  std::vector<StrokeId> touched;  // strokes whose structure changed

  int total() const { return points_merged + strokes_split + strokes_merged + strokes_pruned; }
  TopologySummary& operator+=(const TopologySummary& other);
};

/// Collapses adjacent kernels closer than point_merge_dist into their midpoint.
Stroke merge_points(const Stroke& stroke, const TopologyConfig& cfg);

/// Cuts the stroke wherever adjacent centers are farther apart than its long axis.
/// Every fragment keeps the original id and attributes.
std::vector<Stroke> split_stroke(const Stroke& stroke, const TopologyConfig& cfg);

Painting merge_strokes(const Painting& painting, const TopologyConfig& cfg, TopologySummary* summary = nullptr);

Painting prune_strokes(const Painting& painting, const TopologyConfig& cfg, double opacity_scale = 1.0,
                       TopologySummary* summary = nullptr);

/// Points -> split -> merge strokes -> prune, repeated until nothing changes.
std::pair<Painting, TopologySummary> topology_pass(const Painting& painting, const TopologyConfig& cfg,
                                                   double opacity_scale = 1.0);

}  // namespace sandsim
