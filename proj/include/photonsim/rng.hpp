#pragma once

#include <cstdint>
#include <random>

namespace photonsim {

using Engine = std::mt19937_64;

/// Independent sub-streams used by the pipeline. Each (seed, stream, index)
/// triple names one engine, so results never depend on execution order.
enum class Stream : std::uint32_t {
  trajectory = 1,
  detection = 2,
  sequence = 3,
  loading = 4,
  intensity_noise = 5,
  test = 99,
};

/// Engine for item `index` of `stream` under `master_seed`.
inline Engine make_engine(std::uint64_t master_seed, Stream stream, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                    static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return Engine(seq);
}

/// Uniform draw on (0, 1]; safe as a log argument or a jump threshold.
inline double uniform_open0(Engine& rng) {
  return static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
}

/// Uniform draw on [0, 1).
inline double uniform01(Engine& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Pulse-to-pulse multiplicative intensity factor: Gaussian(1, sigma)
/// truncated to non-negative values by rejection.
class IntensityNoise {
 public:
  explicit IntensityNoise(double rel_sigma) : sigma_(rel_sigma), normal_(1.0, rel_sigma > 0 ? rel_sigma : 1.0) {}

  double operator()(Engine& rng) {
    if (sigma_ <= 0.0) return 1.0;
    for (;;) {
      const double x = normal_(rng);
      if (x >= 0.0) return x;
    }
  }

 private:
  double sigma_;
  std::normal_distribution<double> normal_;
};

}  // namespace photonsim
