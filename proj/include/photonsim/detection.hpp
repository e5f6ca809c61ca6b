#pragma once

#include "photonsim/quantum_jump.hpp"
#include "photonsim/rng.hpp"
#include "photonsim/timefmt.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace photonsim {

enum class Detector : std::uint8_t { A, B };

/// Simulation ground truth. Analysis code never reads it.
enum class Origin : std::uint8_t { fluorescence, dark, stray, molasses, unknown };

const char* to_string(Detector d);
const char* to_string(Origin o);

struct DetectionEvent {
  Detector detector = Detector::A;
  Picoseconds timestamp = 0;
  Origin origin = Origin::unknown;
};

/// Half-open time interval [begin, end) in picoseconds.
struct Window {
  Picoseconds begin = 0;
  Picoseconds end = 0;

  Picoseconds duration() const { return end - begin; }
  bool contains(Picoseconds t) const { return t >= begin && t < end; }
};

/// Rates are totals over both detectors and are split evenly between them.
struct DetectorParams {
  double dark_count_rate = 150.0;              ///< s^-1
  double stray_light_rate = 175.0;             ///< s^-1, excitation windows only
  Picoseconds timestamp_resolution = 1175;     ///< counting-card tick
  Picoseconds dead_time = 0;

  void validate() const;
};

struct DetectionStreams {
  std::vector<DetectionEvent> a;
  std::vector<DetectionEvent> b;

  std::size_t size() const { return a.size() + b.size(); }
  void append(const DetectionStreams& other);
};

/// Sorted copy of `gates`; throws std::invalid_argument on overlap or an
/// empty interval.
std::vector<Window> normalize_gates(std::span<const Window> gates);

/// Photon times are seconds relative to `origin`; gates are picoseconds in
/// the same frame. Output timestamps are floored to the resolution grid and
/// shifted by `origin`, which must lie on that grid. Only events whose
/// quantized time falls inside a gate are kept. Dark and stray counts are
/// drawn inside the gates, which is all the gated card can see.
DetectionStreams detect(std::span<const PhotonRecord> photons, double efficiency,
                        const DetectorParams& params, std::span<const Window> gates, Engine& rng,
                        Picoseconds origin = 0);

DetectionStreams detect(std::span<const PhotonRecord> photons, double efficiency,
                        const DetectorParams& params, std::span<const Window> gates,
                        std::uint64_t seed);

/// Floor of `seconds` onto the tick grid, in picoseconds.
Picoseconds quantize(double seconds, Picoseconds resolution);

/// Events inside `windows` divided by their total duration, s^-1.
double count_rate(std::span<const DetectionEvent> events, std::span<const Window> windows);
double count_rate(const DetectionStreams& streams, std::span<const Window> windows);

/// Event file: header `detector,timestamp_ns,origin`, rows merged in time
/// order.
void write_events(std::ostream& os, const DetectionStreams& streams);

/// Reads the event file format; the origin column may be absent.
DetectionStreams read_events(std::istream& is);

}  // namespace photonsim
