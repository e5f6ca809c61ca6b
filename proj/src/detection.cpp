#include "photonsim/detection.hpp"

#include "photonsim/errors.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

namespace photonsim {

const char* to_string(Detector d) { return d == Detector::A ? "A" : "B"; }

const char* to_string(Origin o) {
  switch (o) {
    case Origin::fluorescence: return "fluorescence";
    case Origin::dark: return "dark";
    case Origin::stray: return "stray";
    case Origin::molasses: return "molasses";
    case Origin::unknown: break;
  }
  return "unknown";
}

namespace {

Origin parse_origin(const std::string& s) {
  if (s == "fluorescence") return Origin::fluorescence;
  if (s == "dark") return Origin::dark;
  if (s == "stray") return Origin::stray;
  if (s == "molasses") return Origin::molasses;
  if (s == "unknown" || s.empty()) return Origin::unknown;
  throw std::invalid_argument("event file: unknown origin '" + s + "'");
}

bool by_time(const DetectionEvent& x, const DetectionEvent& y) {
  if (x.timestamp != y.timestamp) return x.timestamp < y.timestamp;
  return x.origin < y.origin;
}

void apply_dead_time(std::vector<DetectionEvent>& events, Picoseconds dead_time) {
  if (dead_time <= 0 || events.empty()) return;
  std::size_t kept = 1;
  Picoseconds last = events.front().timestamp;
  for (std::size_t i = 1; i < events.size(); ++i) {
    if (events[i].timestamp - last >= dead_time) {
      last = events[i].timestamp;
      events[kept++] = events[i];
    }
  }
  events.resize(kept);
}

const Window* find_gate(std::span<const Window> gates, Picoseconds t) {
  auto it = std::upper_bound(gates.begin(), gates.end(), t,
                             [](Picoseconds v, const Window& w) { return v < w.begin; });
  if (it == gates.begin()) return nullptr;
  --it;
  return it->contains(t) ? &*it : nullptr;
}

}  // namespace

void DetectorParams::validate() const {
  require(dark_count_rate >= 0.0 && stray_light_rate >= 0.0, "DetectorParams: rates must be >= 0");
  require(timestamp_resolution > 0, "DetectorParams: resolution must be positive");
  require(dead_time >= 0, "DetectorParams: dead time must be >= 0");
}

void DetectionStreams::append(const DetectionStreams& other) {
  a.insert(a.end(), other.a.begin(), other.a.end());
  b.insert(b.end(), other.b.begin(), other.b.end());
}

std::vector<Window> normalize_gates(std::span<const Window> gates) {
  std::vector<Window> out(gates.begin(), gates.end());
  std::sort(out.begin(), out.end(), [](const Window& x, const Window& y) { return x.begin < y.begin; });
  for (std::size_t i = 0; i < out.size(); ++i) {
    require(out[i].end > out[i].begin, "gates: empty or reversed window");
    if (i > 0) require(out[i].begin >= out[i - 1].end, "gates: overlapping windows");
  }
  return out;
}

Picoseconds quantize(double seconds, Picoseconds resolution) {
  const double ticks = std::floor(seconds * 1e12 / static_cast<double>(resolution));
  return static_cast<Picoseconds>(ticks) * resolution;
}

DetectionStreams detect(std::span<const PhotonRecord> photons, double efficiency,
                        const DetectorParams& params, std::span<const Window> gates, Engine& rng,
                        Picoseconds origin) {
  require(efficiency >= 0.0 && efficiency <= 1.0, "detect: efficiency outside [0,1]");
  params.validate();
  require(origin % params.timestamp_resolution == 0, "detect: origin is off the tick grid");
  const std::vector<Window> windows = normalize_gates(gates);
  const Picoseconds res = params.timestamp_resolution;

  DetectionStreams out;
  auto push = [&](Picoseconds local, Detector d, Origin o) {
    if (!find_gate(windows, local)) return;
    auto& stream = d == Detector::A ? out.a : out.b;
    stream.push_back({d, local + origin, o});
  };

  for (const PhotonRecord& p : photons) {
    if (!(uniform01(rng) < efficiency)) continue;
    const Detector side = uniform01(rng) < 0.5 ? Detector::A : Detector::B;
    push(quantize(p.emission_time, res), side, Origin::fluorescence);
  }

  auto noise = [&](double total_rate, Origin origin_tag) {
    if (total_rate <= 0.0) return;
    for (const Window& w : windows) {
      const double seconds = ps_to_seconds(w.duration());
      for (const Detector d : {Detector::A, Detector::B}) {
        std::poisson_distribution<long> count(0.5 * total_rate * seconds);
        const long n = count(rng);
        for (long i = 0; i < n; ++i) {
          const double t = static_cast<double>(w.begin) + uniform01(rng) * static_cast<double>(w.duration());
          const Picoseconds tick = static_cast<Picoseconds>(std::floor(t / static_cast<double>(res))) * res;
          push(tick, d, origin_tag);
        }
      }
    }
  };
  noise(params.dark_count_rate, Origin::dark);
  noise(params.stray_light_rate, Origin::stray);

  for (auto* s : {&out.a, &out.b}) {
    std::stable_sort(s->begin(), s->end(), by_time);
    apply_dead_time(*s, params.dead_time);
  }
  return out;
}

DetectionStreams detect(std::span<const PhotonRecord> photons, double efficiency,
                        const DetectorParams& params, std::span<const Window> gates,
                        std::uint64_t seed) {
  Engine rng = make_engine(seed, Stream::detection);
  return detect(photons, efficiency, params, gates, rng);
}

double count_rate(std::span<const DetectionEvent> events, std::span<const Window> windows) {
  require(!windows.empty(), "count_rate: no windows");
  const std::vector<Window> sorted = normalize_gates(windows);
  Picoseconds total = 0;
  for (const Window& w : sorted) total += w.duration();
  require(total > 0, "count_rate: zero total window duration");
  std::size_t n = 0;
  for (const DetectionEvent& e : events)
    if (find_gate(sorted, e.timestamp)) ++n;
  return static_cast<double>(n) / ps_to_seconds(total);
}

double count_rate(const DetectionStreams& streams, std::span<const Window> windows) {
  return count_rate(streams.a, windows) + count_rate(streams.b, windows);
}

void write_events(std::ostream& os, const DetectionStreams& streams) {
  os << "detector,timestamp_ns,origin\n";
  std::size_t i = 0, j = 0;
  auto row = [&](const DetectionEvent& e) {
    os << to_string(e.detector) << ',' << format_ns(e.timestamp) << ',' << to_string(e.origin) << '\n';
  };
  while (i < streams.a.size() || j < streams.b.size()) {
    if (j >= streams.b.size() || (i < streams.a.size() && streams.a[i].timestamp <= streams.b[j].timestamp))
      row(streams.a[i++]);
    else
      row(streams.b[j++]);
  }
}

DetectionStreams read_events(std::istream& is) {
  DetectionStreams out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#' || line.rfind("detector", 0) == 0) continue;
    std::stringstream ss(line);
    std::string det, ts, origin;
    if (!std::getline(ss, det, ',') || !std::getline(ss, ts, ','))
      throw std::invalid_argument("event file: malformed line " + std::to_string(lineno));
    std::getline(ss, origin);
    DetectionEvent e;
    if (det == "A") e.detector = Detector::A;
    else if (det == "B") e.detector = Detector::B;
    else throw std::invalid_argument("event file: unknown detector '" + det + "' on line " + std::to_string(lineno));
    e.timestamp = parse_ns(ts);
    e.origin = parse_origin(origin);
    (e.detector == Detector::A ? out.a : out.b).push_back(e);
  }
  for (auto* s : {&out.a, &out.b}) std::stable_sort(s->begin(), s->end(), by_time);
  return out;
}

}  // namespace photonsim
