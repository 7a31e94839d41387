#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sandsim/commands.hpp"
#include "sandsim/config.hpp"
#include "sandsim/scene.hpp"
#include "sandsim/sequencer.hpp"

namespace sandsim {

/// "SSF1", u32 LE width, u32 LE height, then width * height RGBA8 pixels.
std::vector<std::uint8_t> encode_ssf1(const Image& img);

struct Ssf1Frame {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> rgba;
};

/// Throws ParseError on a bad magic or a payload of the wrong size.
Ssf1Frame decode_ssf1(std::span<const std::uint8_t> bytes);

using FrameBytes = std::shared_ptr<const std::vector<std::uint8_t>>;

/// Owns the simulation. Commands are queued from any thread and applied in
/// FIFO order between steps by whichever thread drives tick().
class SimHost {
 public:
  using Reply = std::function<void(const nlohmann::json&)>;
  using FrameListener = std::function<void(const FrameBytes&)>;

  SimHost(Painting painting, AppConfig config);
  ~SimHost();

  SimHost(const SimHost&) = delete;
  SimHost& operator=(const SimHost&) = delete;

  /// Parses and validates a text command; errors go to `reply` as JSON.
  void submit_text(const std::string& text, const Reply& reply);
  void submit(Command command, Reply reply = {});

  /// Drains the queue, advances the simulation unless paused, and publishes
  /// a frame when one is due.
  void tick();

  /// Runs tick() on a dedicated thread until stop().
  void start();
  void stop();
  bool running() const { return thread_.joinable(); }

  nlohmann::json state() const;
  std::shared_ptr<const Image> latest_image() const;
  FrameBytes latest_frame() const;
  void set_frame_listener(FrameListener listener);

  int width() const { return painting_.width; }
  int height() const { return painting_.height; }
  std::size_t initial_particle_count() const { return initial_.state.particles.size(); }

 private:
  struct Pending {
    Command command;
    Reply reply;
  };
  struct Interaction {
    Vec3 center;
    double r_safe;
    double until;  // simulation time
  };

  void apply(const Command& command, const Reply& reply);
  void publish_frame();
  nlohmann::json summary() const;
  void run();

  Painting painting_;
  AppConfig config_;
  ProcessScript script_;
  SandScene scene_;
  SandScene initial_;
  bool paused_ = false;
  std::deque<int> script_queue_;
  std::optional<Interaction> interaction_;

  mutable std::mutex queue_mutex_;
  std::deque<Pending> queue_;

  mutable std::mutex frame_mutex_;
  std::shared_ptr<const Image> latest_image_;
  FrameBytes latest_frame_;
  nlohmann::json state_;
  FrameListener listener_;
  std::chrono::steady_clock::time_point last_push_{};

  std::atomic<bool> stop_{false};
  std::thread thread_;
};

/// HTTP (GET /state, GET /frame) and a websocket on the same port. Any
/// websocket upgrade request is accepted regardless of the target path.
class SandService {
 public:
  SandService(Painting painting, AppConfig config);
  ~SandService();

  /// Binds and starts the network and simulation threads. Throws IoError
  /// when the address cannot be bound.
  void start();
  void stop();
  unsigned short port() const;

  SimHost& host();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace sandsim
