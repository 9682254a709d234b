#pragma once

// Line-delimited JSON progress events on stderr.

#include <string_view>

#include <json.hpp>

namespace typoprobe {

void set_log_quiet(bool quiet) noexcept;
bool log_quiet() noexcept;

// Emits {"level": ..., "event": ..., <fields>}. Info and warn lines are
// suppressed when quiet; errors always print.
void log_event(std::string_view level, std::string_view event, nlohmann::json fields = nlohmann::json::object());

}  // namespace typoprobe
