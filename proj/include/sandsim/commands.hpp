#pragma once

#include <optional>
#include <string>
#include <variant>

#include <json.hpp>

#include "sandsim/painting.hpp"

namespace sandsim {

/// Canvas-space smear: center (x, y) in pixels, drag direction (dx, dy).
/// A zero direction presses straight down.
struct SmearCommand {
  double x = 0, y = 0;
  double dx = 0, dy = 0;
  double radius_px = 8;
  double strength = 0.5;  // m/s at the center
};

struct DepositStrokeCommand {
  std::optional<StrokeId> stroke_id;
  std::optional<Stroke> stroke;  // inline stroke, same schema as painting JSON
};

struct PauseCommand {};
struct ResumeCommand {};
struct ResetCommand {};

struct SetParamCommand {
  std::string key;
  std::string value;
};

/// Deposits script events [begin, end) one per tick; end < 0 means all.
struct PlayScriptCommand {
  int begin = 0;
  int end = -1;
};

using Command = std::variant<SmearCommand, DepositStrokeCommand, PauseCommand, ResumeCommand, ResetCommand,
                             SetParamCommand, PlayScriptCommand>;

/// `{"type": "smear", ...}`. Throws ParseError for malformed JSON or fields
/// and InvalidArgument for values outside the canvas or non-positive sizes.
Command parse_command(const nlohmann::json& doc, int canvas_width, int canvas_height);
Command parse_command_text(const std::string& text, int canvas_width, int canvas_height);

std::string command_name(const Command& command);
nlohmann::json to_json(const Command& command);

}  // namespace sandsim
