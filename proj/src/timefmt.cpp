#include "photonsim/timefmt.hpp"

#include <charconv>
#include <cstdio>
#include <stdexcept>

namespace photonsim {

std::string format_ns(Picoseconds ps) {
  const bool negative = ps < 0;
  const auto mag = static_cast<std::uint64_t>(negative ? -(ps + 1) : ps) + (negative ? 1 : 0);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%s%llu.%03llu", negative ? "-" : "",
                static_cast<unsigned long long>(mag / 1000), static_cast<unsigned long long>(mag % 1000));
  return buf;
}

Picoseconds parse_ns(std::string_view text) {
  auto fail = [&]() -> Picoseconds {
    throw std::invalid_argument("invalid nanosecond timestamp '" + std::string(text) + "'");
  };
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r'))
    text.remove_suffix(1);
  bool negative = false;
  if (!text.empty() && (text.front() == '-' || text.front() == '+')) {
    negative = text.front() == '-';
    text.remove_prefix(1);
  }
  const auto dot = text.find('.');
  const std::string_view whole = text.substr(0, dot);
  const std::string_view frac = dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
  if (whole.empty() && frac.empty()) return fail();
  if (frac.size() > 3) return fail();

  std::int64_t ns = 0;
  if (!whole.empty()) {
    auto [p, ec] = std::from_chars(whole.data(), whole.data() + whole.size(), ns);
    if (ec != std::errc{} || p != whole.data() + whole.size()) return fail();
  }
  std::int64_t sub = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    sub *= 10;
    if (i < frac.size()) {
      const char ch = frac[i];
      if (ch < '0' || ch > '9') return fail();
      sub += ch - '0';
    }
  }
  const std::int64_t ps = ns * 1000 + sub;
  return negative ? -ps : ps;
}

}  // namespace photonsim
