#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "sandsim/painting.hpp"
#include "sandsim/planner.hpp"
#include "sandsim/rasterizer.hpp"

namespace sandsim {

/// Reveals kernels [kernel_start, kernel_end) of a stroke at `frame`.
struct DrawEvent {
  StrokeId stroke{0};
  int kernel_start = 0;
  int kernel_end = 0;
  int frame = 0;
};

/// Frame 0 shows the bare canvas; event j lands on frame j + 1.
struct ProcessScript {
  std::vector<DrawEvent> events;
  int total_frames = 1;
  int fps = 24;

  /// Kernel prefixes drawn once every event with frame <= t has happened.
  ActiveSet active_at(int frame) const;
  /// Stroke ids in the order they start drawing.
  std::vector<StrokeId> stroke_order() const;
};

/// Orders strokes by (region rank, area desc, first-kernel y asc, id) and
/// reveals `kernels_per_frame` kernels per frame. Throws UnclassifiedStroke.
ProcessScript build_script(const Painting& painting, const RegionPlan& plan, int frames_per_second,
                           int kernels_per_frame);

nlohmann::json to_json(const ProcessScript& script);
ProcessScript script_from_json(const nlohmann::json& doc);

struct FrameManifest {
  int fps = 24;
  int frame_count = 0;
  std::vector<std::string> files;
  std::vector<std::uint32_t> checksums;  // crc32 of each PNG file
};

/// Renders every frame to `frame_%06d.png` and writes `process_manifest.json`.
FrameManifest emit_frames(const Painting& painting, const ProcessScript& script, const std::filesystem::path& out_dir,
                          const RenderOptions& options = {}, int workers = 0);

std::string frame_file_name(int frame);
std::uint32_t crc32_of(const std::vector<std::uint8_t>& bytes);

}  // namespace sandsim
