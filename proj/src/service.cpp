#include "sandsim/service.hpp"

#include <algorithm>
#include <cstring>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "sandsim/error.hpp"
#include "sandsim/planner.hpp"

namespace sandsim {

namespace {

constexpr char kMagic[4] = {'S', 'S', 'F', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

nlohmann::json error_reply(const Error& e) {
  return {{"type", "error"}, {"kind", std::string(to_string(e.kind()))}, {"message", e.what()}};
}

}  // namespace

std::vector<std::uint8_t> encode_ssf1(const Image& img) {
  const auto rgba = to_rgba8(img);
  std::vector<std::uint8_t> out;
  out.reserve(12 + rgba.size());
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, static_cast<std::uint32_t>(img.width()));
  put_u32(out, static_cast<std::uint32_t>(img.height()));
  out.insert(out.end(), rgba.begin(), rgba.end());
  return out;
}

Ssf1Frame decode_ssf1(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) fail(ErrorKind::ParseError, "not an SSF1 frame");
  Ssf1Frame f;
  f.width = get_u32(bytes.data() + 4);
  f.height = get_u32(bytes.data() + 8);
  const std::size_t expected = 4ull * f.width * f.height;
  if (bytes.size() - 12 != expected) fail(ErrorKind::ParseError, "SSF1 payload size does not match its header");
  f.rgba.assign(bytes.begin() + 12, bytes.end());
  return f;
}

// ---------------------------------------------------------------------------

SimHost::SimHost(Painting painting, AppConfig config) : painting_(std::move(painting)), config_(std::move(config)) {
  config_.service.validate();
  config_.lift.validate();
  scene_ = make_scene(painting_, config_.sim, config_.lift);
  scene_.render_options = config_.render3d;
  lift_all(scene_, painting_, config_.service.seed);
  initial_ = scene_;

  if (!painting_.strokes.empty()) {
    const RegionPlan plan = fallback_plan(painting_.width, painting_.height);
    script_ = build_script(classify_strokes(painting_, plan), plan, 24, 5);
  }
  publish_frame();
}

SimHost::~SimHost() { stop(); }

void SimHost::submit_text(const std::string& text, const Reply& reply) {
  try {
    submit(parse_command_text(text, painting_.width, painting_.height), reply);
  } catch (const Error& e) {
    if (reply) reply(error_reply(e));
  }
}

void SimHost::submit(Command command, Reply reply) {
  std::lock_guard lock(queue_mutex_);
  queue_.push_back({std::move(command), std::move(reply)});
}

void SimHost::apply(const Command& command, const Reply& reply) {
  const ServiceConfig& svc = config_.service;
  if (const auto* s = std::get_if<SmearCommand>(&command)) {
    const Vec3 center = scene_.canvas_point(s->x, s->y, svc.smear_depth_m);
    const double R = s->radius_px * scene_.lift.px_to_m;
    Vec3 dir(s->dx, s->dy, 0.0);
    dir = dir.norm() > 0 ? Vec3(dir.normalized()) : Vec3(0, 0, -1);
    smear(scene_.state, center, R, s->strength, dir);
    const double r_safe = svc.r_safe_factor * R;
    freeze_filter(scene_.state, center, r_safe, svc.v_threshold);
    interaction_ = Interaction{center, r_safe, scene_.state.time + svc.freeze_window_s};
  } else if (const auto* d = std::get_if<DepositStrokeCommand>(&command)) {
    Stroke stroke;
    if (d->stroke) {
      stroke = *d->stroke;
    } else {
      const Stroke* found = painting_.find(*d->stroke_id);
      if (!found) fail(ErrorKind::InvalidArgument, "no stroke with id " + std::to_string(raw(*d->stroke_id)));
      stroke = *found;
    }
    if (stroke.kernels.empty()) fail(ErrorKind::InvalidArgument, "stroke has no kernels");
    scene_.deposit(lift_stroke(stroke, scene_.lift, svc.seed));
  } else if (std::holds_alternative<PauseCommand>(command)) {
    paused_ = true;
  } else if (std::holds_alternative<ResumeCommand>(command)) {
    paused_ = false;
  } else if (std::holds_alternative<ResetCommand>(command)) {
    const SimConfig sim = scene_.state.config;
    const LiftConfig lift = scene_.lift;
    const Render3dOptions render = scene_.render_options;
    scene_ = initial_;
    scene_.state.config = sim;
    scene_.lift = lift;
    scene_.render_options = render;
    script_queue_.clear();
    interaction_.reset();
  } else if (const auto* p = std::get_if<SetParamCommand>(&command)) {
    static const char* frozen[] = {"sim.nx", "sim.ny", "sim.nz", "sim.boundary", "lift.px_to_m",
                                   "service.port", "service.address"};
    for (const char* key : frozen) {
      if (p->key == key) fail(ErrorKind::InvalidArgument, "'" + p->key + "' cannot change while serving");
    }
    if (!(p->key.starts_with("sim.") || p->key.starts_with("lift.") || p->key.starts_with("render3d.") ||
          p->key.starts_with("service."))) {
      fail(ErrorKind::InvalidArgument, "'" + p->key + "' is not a live simulation parameter");
    }
    AppConfig next = config_;
    next.sim = scene_.state.config;
    next.lift = scene_.lift;
    next.render3d = scene_.render_options;
    apply_setting(next, p->key, p->value);
    next.sim.validate();
    next.lift.validate();
    next.service.validate();
    scene_.state.config = next.sim;
    scene_.lift = next.lift;
    scene_.render_options = next.render3d;
    config_.service = next.service;
  } else if (const auto* p = std::get_if<PlayScriptCommand>(&command)) {
    const int n = static_cast<int>(script_.events.size());
    const int end = p->end < 0 ? n : std::min(p->end, n);
    if (p->begin > n) fail(ErrorKind::InvalidArgument, "script has only " + std::to_string(n) + " events");
    for (int i = p->begin; i < end; ++i) script_queue_.push_back(i);
  }
  if (reply) reply({{"type", "ack"}, {"command", command_name(command)}});
}

void SimHost::tick() {
  std::deque<Pending> batch;
  {
    std::lock_guard lock(queue_mutex_);
    batch.swap(queue_);
  }
  for (const auto& item : batch) {
    try {
      apply(item.command, item.reply);
    } catch (const Error& e) {
      if (item.reply) item.reply(error_reply(e));
    }
  }

  if (!paused_) {
    if (!script_queue_.empty()) {
      const DrawEvent& e = script_.events[script_queue_.front()];
      script_queue_.pop_front();
      if (const Stroke* s = painting_.find(e.stroke)) {
        scene_.deposit(lift_kernels(*s, e.kernel_start, e.kernel_end, scene_.lift, config_.service.seed));
      }
    }
    for (int i = 0; i < config_.service.steps_per_tick; ++i) {
      mpm_step(scene_.state);
      if (interaction_) {
        freeze_filter(scene_.state, interaction_->center, interaction_->r_safe, config_.service.v_threshold);
        if (scene_.state.time >= interaction_->until) interaction_.reset();
      }
    }
  }

  {
    std::lock_guard lock(frame_mutex_);
    state_ = summary();
  }

  const auto now = std::chrono::steady_clock::now();
  const auto period = std::chrono::duration<double>(1.0 / config_.service.push_rate_hz);
  if (now - last_push_ >= period) {
    last_push_ = now;
    publish_frame();
  }
}

nlohmann::json SimHost::summary() const {
  return {{"step", scene_.state.step},
          {"time", scene_.state.time},
          {"particles", scene_.state.particles.size()},
          {"paused", paused_},
          {"width", painting_.width},
          {"height", painting_.height},
          {"script_events", script_.events.size()},
          {"script_pending", script_queue_.size()},
          {"kinetic_energy", scene_.state.kinetic_energy()}};
}

void SimHost::publish_frame() {
  auto image = std::make_shared<const Image>(scene_.render());
  auto bytes = std::make_shared<const std::vector<std::uint8_t>>(encode_ssf1(*image));
  FrameListener listener;
  {
    std::lock_guard lock(frame_mutex_);
    latest_image_ = std::move(image);
    latest_frame_ = bytes;
    if (state_.is_null()) {
      state_ = summary();
    }
    listener = listener_;
  }
  if (listener) listener(bytes);
}

void SimHost::run() {
  while (!stop_) {
    tick();
    if (paused_) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
}

void SimHost::start() {
  if (thread_.joinable()) return;
  stop_ = false;
  thread_ = std::thread([this] { run(); });
}

void SimHost::stop() {
  stop_ = true;
  if (thread_.joinable()) thread_.join();
}

nlohmann::json SimHost::state() const {
  std::lock_guard lock(frame_mutex_);
  return state_;
}

std::shared_ptr<const Image> SimHost::latest_image() const {
  std::lock_guard lock(frame_mutex_);
  return latest_image_;
}

FrameBytes SimHost::latest_frame() const {
  std::lock_guard lock(frame_mutex_);
  return latest_frame_;
}

void SimHost::set_frame_listener(FrameListener listener) {
  std::lock_guard lock(frame_mutex_);
  listener_ = std::move(listener);
}

// ---------------------------------------------------------------------------

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

class WsSession;

struct Registry {
  std::vector<std::weak_ptr<WsSession>> sessions;
};

constexpr std::size_t kMaxQueuedText = 64;

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, SimHost& host, Registry& registry)
      : ws_(std::move(socket)), host_(host), registry_(registry) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
  }

  // Frames overwrite the pending slot: one write in flight plus one waiting.
  void send_frame(const FrameBytes& frame) {
    pending_frame_ = frame;
    pump();
  }

  void send_text(std::string text) {
    if (texts_.size() >= kMaxQueuedText) texts_.pop_front();
    texts_.push_back(std::move(text));
    pump();
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    registry_.sessions.push_back(weak_from_this());
    if (auto frame = host_.latest_frame()) send_frame(frame);
    do_read();
  }

  void do_read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec) {
      closed_ = true;
      return;
    }
    if (ws_.got_text()) {
      const std::string text = beast::buffers_to_string(buffer_.data());
      auto weak = weak_from_this();
      auto executor = ws_.get_executor();
      host_.submit_text(text, [weak, executor](const nlohmann::json& reply) {
        net::post(executor, [weak, msg = reply.dump()]() mutable {
          if (auto self = weak.lock()) self->send_text(std::move(msg));
        });
      });
    } else {
      send_text(nlohmann::json{{"type", "error"}, {"kind", "ParseError"}, {"message", "commands must be JSON text"}}.dump());
    }
    buffer_.consume(buffer_.size());
    do_read();
  }

  void pump() {
    if (writing_ || closed_) return;
    if (!texts_.empty()) {
      writing_ = true;
      current_text_ = std::move(texts_.front());
      texts_.pop_front();
      ws_.text(true);
      ws_.async_write(net::buffer(current_text_),
                      [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_write(ec); });
    } else if (pending_frame_) {
      writing_ = true;
      current_frame_ = std::move(pending_frame_);
      pending_frame_.reset();
      ws_.binary(true);
      ws_.async_write(net::buffer(*current_frame_),
                      [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_write(ec); });
    }
  }

  void on_write(beast::error_code ec) {
    writing_ = false;
    current_frame_.reset();
    if (ec) {
      closed_ = true;
      return;
    }
    pump();
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  SimHost& host_;
  Registry& registry_;
  std::deque<std::string> texts_;
  std::string current_text_;
  FrameBytes pending_frame_;
  FrameBytes current_frame_;
  bool writing_ = false;
  bool closed_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, SimHost& host, Registry& registry)
      : stream_(std::move(socket)), host_(host), registry_(registry) {}

  void run() { do_read(); }

 private:
  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec == http::error::end_of_stream) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    if (ec) return;
    if (websocket::is_upgrade(req_)) {
      stream_.expires_never();
      std::make_shared<WsSession>(stream_.release_socket(), host_, registry_)->run(std::move(req_));
      return;
    }
    auto res = std::make_shared<http::response<http::string_body>>(handle());
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (res->need_eof()) {
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
        return;
      }
      self->do_read();
    });
  }

  http::response<http::string_body> handle() {
    http::response<http::string_body> res;
    res.version(req_.version());
    res.keep_alive(req_.keep_alive());
    res.set(http::field::server, "sandsim");
    res.set(http::field::access_control_allow_origin, "*");
    const std::string target(req_.target());
    const std::string path = target.substr(0, target.find('?'));
    if (req_.method() != http::verb::get) {
      res.result(http::status::method_not_allowed);
      res.set(http::field::content_type, "application/json");
      res.body() = R"({"error":"only GET is supported"})";
    } else if (path == "/state") {
      res.result(http::status::ok);
      res.set(http::field::content_type, "application/json");
      res.body() = host_.state().dump();
    } else if (path == "/frame") {
      res.result(http::status::ok);
      res.set(http::field::content_type, "image/png");
      const auto image = host_.latest_image();
      const auto png = encode_png(*image);
      res.body().assign(png.begin(), png.end());
    } else {
      res.result(http::status::not_found);
      res.set(http::field::content_type, "application/json");
      res.body() = R"({"error":"not found"})";
    }
    res.prepare_payload();
    return res;
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  SimHost& host_;
  Registry& registry_;
};

}  // namespace

struct SandService::Impl {
  Impl(Painting painting, AppConfig config) : host(std::move(painting), config), service(config.service) {}

  void accept() {
    acceptor->async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) {
        if (ec == net::error::operation_aborted) return;
      } else {
        std::make_shared<HttpSession>(std::move(socket), host, registry)->run();
      }
      accept();
    });
  }

  void broadcast(const FrameBytes& frame) {
    auto& sessions = registry.sessions;
    std::erase_if(sessions, [](const std::weak_ptr<WsSession>& w) { return w.expired(); });
    for (auto& w : sessions) {
      if (auto s = w.lock()) s->send_frame(frame);
    }
  }

  SimHost host;
  ServiceConfig service;
  net::io_context ioc{1};
  std::optional<tcp::acceptor> acceptor;
  Registry registry;
  std::thread io_thread;
  unsigned short bound_port = 0;
};

SandService::SandService(Painting painting, AppConfig config)
    : impl_(std::make_unique<Impl>(std::move(painting), std::move(config))) {}

SandService::~SandService() { stop(); }

void SandService::start() {
  Impl& im = *impl_;
  try {
    const auto address = net::ip::make_address(im.service.address);
    const tcp::endpoint endpoint(address, static_cast<unsigned short>(im.service.port));
    im.acceptor.emplace(im.ioc);
    im.acceptor->open(endpoint.protocol());
    im.acceptor->set_option(net::socket_base::reuse_address(true));
    im.acceptor->bind(endpoint);
    im.acceptor->listen(net::socket_base::max_listen_connections);
    im.bound_port = im.acceptor->local_endpoint().port();
  } catch (const boost::system::system_error& e) {
    im.acceptor.reset();
    fail(ErrorKind::IoError, "cannot listen on " + im.service.address + ":" + std::to_string(im.service.port) + ": " +
                                 e.what());
  }
  im.host.set_frame_listener([&im](const FrameBytes& frame) {
    net::post(im.ioc, [&im, frame] { im.broadcast(frame); });
  });
  im.accept();
  im.io_thread = std::thread([&im] { im.ioc.run(); });
  im.host.start();
}

void SandService::stop() {
  if (!impl_) return;
  Impl& im = *impl_;
  im.host.stop();
  im.host.set_frame_listener({});
  if (im.io_thread.joinable()) {
    net::post(im.ioc, [&im] {
      if (im.acceptor) im.acceptor->close();
    });
    im.ioc.stop();
    im.io_thread.join();
  }
}

unsigned short SandService::port() const { return impl_->bound_port; }

SimHost& SandService::host() { return impl_->host; }

}  // namespace sandsim
