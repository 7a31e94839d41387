#include "sandsim/commands.hpp"

#include <cmath>

#include "sandsim/error.hpp"

namespace sandsim {

namespace {

double finite_number(const nlohmann::json& doc, const char* key) {
  const auto& v = doc.at(key);
  if (!v.is_number()) fail(ErrorKind::ParseError, std::string("'") + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) fail(ErrorKind::ParseError, std::string("'") + key + "' must be finite");
  return d;
}

double optional_number(const nlohmann::json& doc, const char* key, double fallback) {
  return doc.contains(key) ? finite_number(doc, key) : fallback;
}

SmearCommand parse_smear(const nlohmann::json& doc, int w, int h) {
  SmearCommand c;
  c.x = finite_number(doc, "x");
  c.y = finite_number(doc, "y");
  c.dx = optional_number(doc, "dx", 0.0);
  c.dy = optional_number(doc, "dy", 0.0);
  c.radius_px = optional_number(doc, "radius_px", c.radius_px);
  c.strength = optional_number(doc, "strength", c.strength);
  if (c.x < 0 || c.y < 0 || c.x > w - 1 || c.y > h - 1) {
    fail(ErrorKind::InvalidArgument, "smear center lies outside the canvas");
  }
  if (!(c.radius_px > 0)) fail(ErrorKind::InvalidArgument, "radius_px must be positive");
  if (!(c.strength > 0)) fail(ErrorKind::InvalidArgument, "strength must be positive");
  return c;
}

}  // namespace

Command parse_command(const nlohmann::json& doc, int canvas_width, int canvas_height) {
  if (!doc.is_object()) fail(ErrorKind::ParseError, "command must be a JSON object");
  if (!doc.contains("type") || !doc["type"].is_string()) fail(ErrorKind::ParseError, "command needs a string 'type'");
  const std::string type = doc["type"].get<std::string>();
  try {
    if (type == "smear") return parse_smear(doc, canvas_width, canvas_height);
    if (type == "pause") return PauseCommand{};
    if (type == "resume") return ResumeCommand{};
    if (type == "reset") return ResetCommand{};
    if (type == "deposit_stroke") {
      DepositStrokeCommand c;
      if (doc.contains("stroke_id")) c.stroke_id = StrokeId{doc["stroke_id"].get<std::int64_t>()};
      if (doc.contains("stroke")) c.stroke = stroke_from_json(doc["stroke"]);
      if (c.stroke_id.has_value() == c.stroke.has_value()) {
        fail(ErrorKind::ParseError, "deposit_stroke needs exactly one of 'stroke_id' or 'stroke'");
      }
      return c;
    }
    if (type == "set_param") {
      SetParamCommand c;
      c.key = doc.at("key").get<std::string>();
      const auto& v = doc.at("value");
      c.value = v.is_string() ? v.get<std::string>() : v.dump();
      return c;
    }
    if (type == "play_script") {
      PlayScriptCommand c;
      c.begin = doc.value("begin", 0);
      c.end = doc.value("end", -1);
      if (c.begin < 0 || (c.end >= 0 && c.end < c.begin)) fail(ErrorKind::InvalidArgument, "invalid event range");
      return c;
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, type + ": " + e.what());
  }
  fail(ErrorKind::ParseError, "unknown command type '" + type + "'");
}

Command parse_command_text(const std::string& text, int canvas_width, int canvas_height) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("malformed JSON: ") + e.what());
  }
  return parse_command(doc, canvas_width, canvas_height);
}

std::string command_name(const Command& command) {
  struct Visitor {
    std::string operator()(const SmearCommand&) const { return "smear"; }
    std::string operator()(const DepositStrokeCommand&) const { return "deposit_stroke"; }
    std::string operator()(const PauseCommand&) const { return "pause"; }
    std::string operator()(const ResumeCommand&) const { return "resume"; }
    std::string operator()(const ResetCommand&) const { return "reset"; }
    std::string operator()(const SetParamCommand&) const { return "set_param"; }
    std::string operator()(const PlayScriptCommand&) const { return "play_script"; }
  };
  return std::visit(Visitor{}, command);
}

nlohmann::json to_json(const Command& command) {
  nlohmann::json doc = {{"type", command_name(command)}};
  if (const auto* s = std::get_if<SmearCommand>(&command)) {
    doc.update({{"x", s->x}, {"y", s->y}, {"dx", s->dx}, {"dy", s->dy}, {"radius_px", s->radius_px},
                {"strength", s->strength}});
  } else if (const auto* d = std::get_if<DepositStrokeCommand>(&command)) {
    if (d->stroke_id) doc["stroke_id"] = raw(*d->stroke_id);
    if (d->stroke) doc["stroke"] = stroke_to_json(*d->stroke);
  } else if (const auto* p = std::get_if<SetParamCommand>(&command)) {
    doc.update({{"key", p->key}, {"value", p->value}});
  } else if (const auto* p = std::get_if<PlayScriptCommand>(&command)) {
    doc.update({{"begin", p->begin}, {"end", p->end}});
  }
  return doc;
}

}  // namespace sandsim
