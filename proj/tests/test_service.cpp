#include <doctest.h>

#include <random>

#include <json.hpp>

#include "fixtures.hpp"
#include "sandsim/service.hpp"
#include "ws_client.hpp"

using namespace sandsim;

namespace {

AppConfig small_config() {
  AppConfig c;
  c.sim.nx = 32;
  c.sim.ny = 32;
  c.sim.nz = 16;
  c.service.port = 0;
  c.service.steps_per_tick = 2;
  c.lift.particles_per_kernel_max = 8;
  return c;
}

Painting small_painting() {
  std::mt19937_64 rng(71);
  return fixtures::random_painting(rng, 24, 20, 3, 5, 2.0, 4.0);
}

struct Replies {
  std::vector<nlohmann::json> got;
  SimHost::Reply sink() {
    return [this](const nlohmann::json& j) { got.push_back(j); };
  }
};

}  // namespace

TEST_CASE("ssf1 frames round-trip") {
  Image img(3, 2, Rgb(1, 0, 0));
  img.set_pixel(2, 1, Rgb(0, 0, 1));
  const auto bytes = encode_ssf1(img);
  REQUIRE(bytes.size() == 12 + 4 * 6);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SSF1");
  CHECK(bytes[4] == 3);
  CHECK(bytes[8] == 2);
  const Ssf1Frame f = decode_ssf1(bytes);
  CHECK(f.width == 3);
  CHECK(f.height == 2);
  CHECK(f.rgba == to_rgba8(img));
  CHECK(f.rgba[0] == 255);
  CHECK(f.rgba[3] == 255);
  CHECK(f.rgba[4 * 5 + 2] == 255);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK(fixtures::thrown_kind([&] { decode_ssf1(bad); }) == ErrorKind::ParseError);
  auto shortened = bytes;
  shortened.pop_back();
  CHECK(fixtures::thrown_kind([&] { decode_ssf1(shortened); }) == ErrorKind::ParseError);
  CHECK(fixtures::thrown_kind([] { decode_ssf1(std::vector<std::uint8_t>(5)); }) == ErrorKind::ParseError);
}

TEST_CASE("sim host applies commands between ticks") {
  SimHost host(small_painting(), small_config());
  const std::size_t n0 = host.initial_particle_count();
  REQUIRE(n0 > 0);
  REQUIRE(host.latest_frame());
  CHECK(decode_ssf1(*host.latest_frame()).width == 24);
  Replies r;

  host.submit(PauseCommand{}, r.sink());
  CHECK(r.got.empty());
  host.tick();
  REQUIRE(r.got.size() == 1);
  CHECK(r.got[0] == nlohmann::json{{"type", "ack"}, {"command", "pause"}});
  const auto step = host.state().at("step").get<std::int64_t>();
  host.tick();
  CHECK(host.state().at("step") == step);
  CHECK(host.state().at("paused") == true);

  host.submit(ResumeCommand{}, r.sink());
  host.tick();
  CHECK(host.state().at("step") == step + 2);

  host.submit(DepositStrokeCommand{StrokeId{1}, std::nullopt}, r.sink());
  host.tick();
  CHECK(host.state().at("particles").get<std::size_t>() > n0);
  host.submit(ResetCommand{}, r.sink());
  host.tick();
  CHECK(host.state().at("particles") == n0);

  host.submit(DepositStrokeCommand{StrokeId{999}, std::nullopt}, r.sink());
  host.tick();
  CHECK(r.got.back().at("type") == "error");
  CHECK(r.got.back().at("kind") == "InvalidArgument");

  host.submit(PlayScriptCommand{0, 2}, r.sink());
  host.tick();
  CHECK(host.state().at("script_pending") == 1);
  host.tick();
  CHECK(host.state().at("script_pending") == 0);
  CHECK(host.state().at("particles").get<std::size_t>() > n0);
}

TEST_CASE("set_param accepts live keys only") {
  SimHost host(small_painting(), small_config());
  Replies r;
  auto kind_of = [&](const std::string& key, const std::string& value) {
    host.submit(SetParamCommand{key, value}, r.sink());
    host.tick();
    const auto& last = r.got.back();
    return last.at("type") == "ack" ? std::string("ack") : last.at("kind").get<std::string>();
  };
  CHECK(kind_of("sim.dt", "1e-4") == "ack");
  CHECK(kind_of("service.v_threshold", "0.2") == "ack");
  CHECK(kind_of("sim.nx", "40") == "InvalidArgument");
  CHECK(kind_of("lift.px_to_m", "0.01") == "InvalidArgument");
  CHECK(kind_of("service.port", "9") == "InvalidArgument");
  CHECK(kind_of("iterations", "3") == "InvalidArgument");
  CHECK(kind_of("sim.dt", "soon") == "ParseError");
  CHECK(kind_of("sim.dt", "-1") == "InvalidArgument");
}

TEST_CASE("text commands report parse errors as JSON") {
  SimHost host(small_painting(), small_config());
  Replies r;
  host.submit_text("{oops", r.sink());
  REQUIRE(r.got.size() == 1);
  CHECK(r.got[0].at("type") == "error");
  CHECK(r.got[0].at("kind") == "ParseError");
  host.submit_text(R"({"type":"smear","x":100,"y":1})", r.sink());
  CHECK(r.got.back().at("kind") == "InvalidArgument");
}

TEST_CASE("smear sets resting sand in motion") {
  AppConfig cfg = small_config();
  cfg.sim.gravity = Vec3::Zero();
  SimHost host(small_painting(), cfg);
  host.tick();
  CHECK(host.state().at("kinetic_energy") == 0.0);
  Replies r;
  host.submit(SmearCommand{12, 10, 1, 0, 10, 0.5}, r.sink());
  host.tick();
  CHECK(r.got.at(0).at("command") == "smear");
  CHECK(host.state().at("kinetic_energy").get<double>() > 0.0);
}

TEST_CASE("service answers http and websocket clients") {
  SandService service(small_painting(), small_config());
  service.start();
  const unsigned short port = service.port();
  REQUIRE(port != 0);

  const auto state = fixtures::http_get(port, "/state");
  CHECK(state.result_int() == 200);
  const auto doc = nlohmann::json::parse(state.body());
  CHECK(doc.at("width") == 24);
  CHECK(doc.at("particles").get<std::size_t>() == service.host().initial_particle_count());

  const auto frame = fixtures::http_get(port, "/frame");
  CHECK(frame.result_int() == 200);
  CHECK(frame[fixtures::http::field::content_type] == "image/png");
  const Image png = decode_png(std::vector<std::uint8_t>(frame.body().begin(), frame.body().end()));
  CHECK(png.width() == 24);
  CHECK(png.height() == 20);

  CHECK(fixtures::http_get(port, "/nothing").result_int() == 404);

  {
    fixtures::WsClient ws(port, "/any/path");
    const auto first = ws.read();
    REQUIRE_FALSE(first.text);
    const Ssf1Frame f = decode_ssf1(std::span(reinterpret_cast<const std::uint8_t*>(first.data.data()), first.data.size()));
    CHECK(f.width == 24);
    CHECK(f.height == 20);
    ws.send(R"({"type":"pause"})");
    CHECK(nlohmann::json::parse(ws.read_text()).at("command") == "pause");
    ws.send("not json");
    CHECK(nlohmann::json::parse(ws.read_text()).at("kind") == "ParseError");
  }

  AppConfig clash = small_config();
  clash.service.port = port;
  SandService second(small_painting(), clash);
  CHECK(fixtures::thrown_kind([&] { second.start(); }) == ErrorKind::IoError);
  service.stop();
}
