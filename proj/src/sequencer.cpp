#include "sandsim/sequencer.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>
#include <tuple>

#include <zlib.h>

#include "sandsim/error.hpp"

namespace sandsim {

ActiveSet ProcessScript::active_at(int frame) const {
  ActiveSet active;
  for (const auto& e : events) {
    if (e.frame > frame) break;
    int& prefix = active[e.stroke];
    prefix = std::max(prefix, e.kernel_end);
  }
  return active;
}

std::vector<StrokeId> ProcessScript::stroke_order() const {
  std::vector<StrokeId> order;
  for (const auto& e : events) {
    if (e.kernel_start == 0) order.push_back(e.stroke);
  }
  return order;
}

ProcessScript build_script(const Painting& painting, const RegionPlan& plan, int frames_per_second,
                           int kernels_per_frame) {
  if (frames_per_second <= 0) fail(ErrorKind::InvalidArgument, "fps must be positive");
  if (kernels_per_frame <= 0) fail(ErrorKind::InvalidArgument, "kernels_per_frame must be positive");

  struct Key {
    std::size_t rank;
    double area;
    double first_y;
    std::int64_t id;
    std::size_t index;
  };
  std::vector<Key> keys;
  keys.reserve(painting.strokes.size());
  for (std::size_t i = 0; i < painting.strokes.size(); ++i) {
    const Stroke& s = painting.strokes[i];
    if (!s.region) fail(ErrorKind::UnclassifiedStroke, "stroke " + std::to_string(raw(s.id)) + " has no region");
    if (!plan.find(*s.region)) {
      fail(ErrorKind::UnclassifiedStroke, "stroke " + std::to_string(raw(s.id)) + " names unknown region " +
                                              std::to_string(raw(*s.region)));
    }
    if (s.kernels.empty()) continue;
    const Vec2 sc = s.scale();
    keys.push_back({plan.rank(*s.region), sc[0] * sc[1], s.kernels.front().center[1], raw(s.id), i});
  }
  std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
    return std::tie(a.rank, b.area, a.first_y, a.id) < std::tie(b.rank, a.area, b.first_y, b.id);
  });

  ProcessScript script;
  script.fps = frames_per_second;
  int frame = 1;
  for (const auto& k : keys) {
    const Stroke& s = painting.strokes[k.index];
    const int n = static_cast<int>(s.size());
    for (int start = 0; start < n; start += kernels_per_frame) {
      script.events.push_back({s.id, start, std::min(n, start + kernels_per_frame), frame++});
    }
  }
  script.total_frames = frame;
  return script;
}

nlohmann::json to_json(const ProcessScript& script) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : script.events) {
    events.push_back({{"stroke", raw(e.stroke)}, {"kernel_start", e.kernel_start}, {"kernel_end", e.kernel_end},
                      {"frame", e.frame}});
  }
  return {{"fps", script.fps}, {"total_frames", script.total_frames}, {"events", events}};
}

ProcessScript script_from_json(const nlohmann::json& doc) {
  ProcessScript script;
  try {
    script.fps = doc.at("fps").get<int>();
    script.total_frames = doc.at("total_frames").get<int>();
    for (const auto& e : doc.at("events")) {
      script.events.push_back({StrokeId{e.at("stroke").get<std::int64_t>()}, e.at("kernel_start").get<int>(),
                               e.at("kernel_end").get<int>(), e.at("frame").get<int>()});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("process script: ") + e.what());
  }
  for (std::size_t i = 1; i < script.events.size(); ++i) {
    if (script.events[i].frame < script.events[i - 1].frame) {
      fail(ErrorKind::ParseError, "process script frames must be non-decreasing");
    }
  }
  return script;
}

std::string frame_file_name(int frame) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06d.png", frame);
  return buf;
}

std::uint32_t crc32_of(const std::vector<std::uint8_t>& bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

FrameManifest emit_frames(const Painting& painting, const ProcessScript& script, const std::filesystem::path& out_dir,
                          const RenderOptions& options, int workers) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create " + out_dir.string() + ": " + ec.message());

  for (const auto& e : script.events) {
    const Stroke* s = painting.find(e.stroke);
    if (!s) fail(ErrorKind::InvalidArgument, "script names unknown stroke " + std::to_string(raw(e.stroke)));
    if (e.kernel_start < 0 || e.kernel_end > static_cast<int>(s->size()) || e.kernel_start >= e.kernel_end) {
      fail(ErrorKind::InvalidArgument, "script event has an invalid kernel range");
    }
  }

  FrameManifest manifest;
  manifest.fps = script.fps;
  manifest.frame_count = script.total_frames;
  manifest.files.resize(script.total_frames);
  manifest.checksums.resize(script.total_frames);

  if (workers <= 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, std::max(1, script.total_frames));

  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto work = [&] {
    for (int t = next++; t < script.total_frames; t = next++) {
      try {
        const RenderOutput out = render(painting, options, script.active_at(t));
        const auto png = encode_png(out.image);
        const std::string name = frame_file_name(t);
        std::ofstream f(out_dir / name, std::ios::binary);
        if (!f.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()))) {
          fail(ErrorKind::IoError, "cannot write " + (out_dir / name).string());
        }
        manifest.files[t] = name;
        manifest.checksums[t] = crc32_of(png);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = script.total_frames;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int i = 1; i < workers; ++i) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);

  const nlohmann::json doc = {{"fps", manifest.fps},
                              {"frame_count", manifest.frame_count},
                              {"files", manifest.files},
                              {"checksums", manifest.checksums},
                              {"checksum", "crc32"}};
  std::ofstream out(out_dir / "process_manifest.json");
  if (!out) fail(ErrorKind::IoError, "cannot write " + (out_dir / "process_manifest.json").string());
  out << doc.dump(2) << '\n';
  return manifest;
}

}  // namespace sandsim
