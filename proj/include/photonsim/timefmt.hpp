#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace photonsim {

/// Integer picoseconds; the tick unit of all detector timestamps.
using Picoseconds = std::int64_t;

inline Picoseconds seconds_to_ps(double seconds) { return std::llround(seconds * 1e12); }
inline double ps_to_seconds(Picoseconds ps) { return static_cast<double>(ps) * 1e-12; }
inline double ps_to_ns(Picoseconds ps) { return static_cast<double>(ps) * 1e-3; }

/// Fixed-point nanoseconds with exactly three decimals, e.g. "-12.075".
std::string format_ns(Picoseconds ps);

/// Inverse of format_ns. Accepts up to three decimals; exact for any
/// representable tick count.
Picoseconds parse_ns(std::string_view text);

}  // namespace photonsim
