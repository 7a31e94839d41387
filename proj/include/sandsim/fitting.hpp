#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sandsim/image.hpp"
#include "sandsim/painting.hpp"
#include "sandsim/planner.hpp"
#include "sandsim/rasterizer.hpp"
#include "sandsim/topology.hpp"

namespace sandsim {

struct FitConfig {
  int iterations = 10000;
  double base_lr = 0.005;
  int lr_step = 2500;       // StepLR period
  double lr_gamma = 0.5;    // StepLR factor
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  int init_curves = 700;
  int init_points_per_curve = 20;
  double init_scale = 4.0;     // px, isotropic
  double init_opacity = 0.1;
  double init_spacing = 2.0;   // px between consecutive kernels of a fresh curve

  double lambda_spring = 0.01;
  double lambda_smooth = 0.3;
  /// Outer mixes. Unset means 1 / (3 W H), which restores the balance of a
  /// summed squared error against the per-stroke regularizers.
  std::optional<double> lambda_geom;
  std::optional<double> lambda_scale;
  /// Scale spring/smooth per stroke by init_points_per_curve / K.
  bool length_scaled_geometry = false;

  double bg_target_radius = 15.0;
  double bg_scale_weight = 0.1;
  double bg_orient_weight = 1.0;

  int topology_period = 100;
  int topology_freeze_tail = 1000;
  TopologyConfig topology;

  int width = 0;   // 0 = take from the target
  int height = 0;
  double cutoff_sigma = 3.0;
  bool deterministic = false;

  void validate() const;
  double resolved_lambda_geom(int width, int height) const;
  double resolved_lambda_scale(int width, int height) const;
};

struct LossReport {
  int iteration = 0;
  double rec = 0, spring = 0, smooth = 0, scale = 0, orient = 0, total = 0;
  double psnr = 0;
  std::size_t strokes = 0;
  std::size_t kernels = 0;
  std::optional<TopologySummary> topology;  // set on iterations that ran a pass
};

/// Mean squared error over all pixels and channels.
double loss_rec(const Image& rendered, const Image& target);
double loss_spring(const Stroke& stroke);
double loss_smooth(const Stroke& stroke);

struct ScaleOrientLoss {
  double scale = 0;   // sum over background strokes of |s - target|^2
  double orient = 0;  // mean over background kernels of sin^2(rotation)
};
ScaleOrientLoss loss_scale_and_orient(const Painting& painting, const RegionPlan& plan, double target_radius = 15.0);

struct Objective {
  LossReport loss;
  GradientSet gradient;
  RenderOutput render;
};

/// Total loss and its gradient with respect to every stroke parameter.
Objective evaluate_objective(const Painting& painting, const Image& target, const RegionPlan& plan,
                             const FitConfig& config);

/// Seeded stratified placement of `init_curves` short straight curves.
Painting initialize_painting(int width, int height, const FitConfig& config, std::uint64_t seed);

enum class FitStatus { Completed, AbortedNonFinite };

struct FitResult {
  Painting painting;
  std::vector<LossReport> trace;  // entry i describes the painting after i steps
  FitStatus status = FitStatus::Completed;
  std::string message;
};

using FitObserver = std::function<void(const LossReport&, const Painting&)>;

FitResult fit(const Image& target, const RegionPlan& plan, const FitConfig& config, std::uint64_t seed,
              const FitObserver& observer = {});

/// CSV with one row per trace entry, including topology change counts.
void write_trace_csv(const std::filesystem::path& path, const std::vector<LossReport>& trace);

}  // namespace sandsim
