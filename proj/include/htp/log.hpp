#pragma once

#include <string_view>

namespace htp::log {

void warn(std::string_view message);

/// Emits `message` only the first time `key` is seen in this process.
void warn_once(std::string_view key, std::string_view message);

void set_quiet(bool quiet);

}  // namespace htp::log
