#include "common/timeutil.hpp"

#include <cctype>
#include <ctime>
#include <cstdio>

#include "common/error.hpp"

namespace dbm::timeutil {
namespace {

struct Split {
  std::tm tm{};
  int millis = 0;
};

Split split(TimePoint tp) {
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(tp.time_since_epoch()).count();
  std::time_t secs = static_cast<std::time_t>(ms / 1000);
  int frac = static_cast<int>(ms % 1000);
  if (frac < 0) {
    frac += 1000;
    --secs;
  }
  Split s;
  gmtime_r(&secs, &s.tm);
  s.millis = frac;
  return s;
}

}  // namespace

std::string to_rfc3339(TimePoint tp) {
  auto s = split(tp);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", s.tm.tm_year + 1900,
                s.tm.tm_mon + 1, s.tm.tm_mday, s.tm.tm_hour, s.tm.tm_min, s.tm.tm_sec, s.millis);
  return buf;
}

std::string to_compact(TimePoint tp) {
  auto s = split(tp);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d%02d%02dT%02d%02d%02d.%03dZ", s.tm.tm_year + 1900,
                s.tm.tm_mon + 1, s.tm.tm_mday, s.tm.tm_hour, s.tm.tm_min, s.tm.tm_sec, s.millis);
  return buf;
}

TimePoint parse_rfc3339(std::string_view text) {
  std::tm tm{};
  int millis = 0;
  std::string str(text);
  int consumed = 0;
  if (std::sscanf(str.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &tm.tm_year, &tm.tm_mon, &tm.tm_mday,
                  &tm.tm_hour, &tm.tm_min, &tm.tm_sec, &consumed) != 6) {
    throw Error(Errc::InvalidArgument, "bad timestamp: " + str);
  }
  size_t pos = static_cast<size_t>(consumed);
  if (pos < str.size() && str[pos] == '.') {
    ++pos;
    int digits = 0;
    while (pos < str.size() && std::isdigit(static_cast<unsigned char>(str[pos]))) {
      if (digits < 3) millis = millis * 10 + (str[pos] - '0');
      ++digits;
      ++pos;
    }
    for (; digits < 3; ++digits) millis *= 10;
  }
  if (pos >= str.size() || str[pos] != 'Z') {
    throw Error(Errc::InvalidArgument, "timestamp must be UTC: " + str);
  }
  tm.tm_year -= 1900;
  tm.tm_mon -= 1;
  std::time_t secs = timegm(&tm);
  return TimePoint(std::chrono::seconds(secs)) + std::chrono::milliseconds(millis);
}

}  // namespace dbm::timeutil
