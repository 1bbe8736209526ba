#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace dbm::timeutil {

using Clock = std::chrono::system_clock;
using TimePoint = Clock::time_point;

/// 2026-10-16T15:51:00.123Z
std::string to_rfc3339(TimePoint tp);
/// Basic (compact) form: 20261016T155100.123Z
std::string to_compact(TimePoint tp);
/// Accepts the extended form written by to_rfc3339 (fraction optional, Z only).
TimePoint parse_rfc3339(std::string_view text);

}  // namespace dbm::timeutil
