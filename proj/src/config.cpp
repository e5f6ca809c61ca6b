#include "photonsim/config.hpp"

#include "photonsim/errors.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

namespace photonsim {

namespace {

constexpr double kPi = std::numbers::pi;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) throw ConfigError("not a number: '" + text + "'");
  return v;
}

std::uint64_t to_uint(const std::string& text) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ConfigError("not a non-negative integer: '" + text + "'");
  return v;
}

bool to_bool(const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError("not a boolean: '" + text + "'");
}

std::vector<double> to_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(item));
  return out;
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  // Shortest form within 12 significant digits; unit scaling leaves noise
  // in the last few bits.
  char buf[40];
  for (int digits = 6; digits <= 12; ++digits) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    const double back = std::strtod(buf, nullptr);
    if (std::abs(back - v) <= 1e-12 * std::abs(v)) break;
  }
  return buf;
}

double& budget_factor(RunConfig& c, const std::string& label) {
  for (BudgetFactor& f : c.budget.budget.factors)
    if (f.label == label) return f.factor;
  c.budget.budget.factors.push_back({label, 1.0});
  return c.budget.budget.factors.back().factor;
}

double budget_factor(const RunConfig& c, const std::string& label) {
  for (const BudgetFactor& f : c.budget.budget.factors)
    if (f.label == label) return f.factor;
  return 1.0;
}

struct Key {
  const char* section;
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Scaled double field: value_in_file * scale = value_in_struct.
template <typename Field>
Key scaled(const char* section, const char* name, Field field, double scale) {
  return {section, name,
          [=](RunConfig& c, const std::string& v) { field(c) = to_double(v) * scale; },
          [=](const RunConfig& c) { return fmt(field(const_cast<RunConfig&>(c)) / scale); }};
}

template <typename Field>
Key integer(const char* section, const char* name, Field field) {
  return {section, name,
          [=](RunConfig& c, const std::string& v) {
            using T = std::remove_reference_t<decltype(field(c))>;
            const std::uint64_t x = to_uint(v);
            if (x > std::numeric_limits<T>::max()) throw ConfigError(std::string(name) + " is too large");
            field(c) = static_cast<T>(x);
          },
          [=](const RunConfig& c) { return std::to_string(field(const_cast<RunConfig&>(c))); }};
}

template <typename Field>
Key picoseconds_ns(const char* section, const char* name, Field field) {
  return {section, name,
          [=](RunConfig& c, const std::string& v) { field(c) = std::llround(to_double(v) * 1000.0); },
          [=](const RunConfig& c) { return format_ns(field(const_cast<RunConfig&>(c))); }};
}

Key budget_key(const char* name) {
  return {"budget", name, [=](RunConfig& c, const std::string& v) { budget_factor(c, name) = to_double(v); },
          [=](const RunConfig& c) { return fmt(budget_factor(c, name)); }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    k.push_back({"atom", "lifetime_ns",
                 [](RunConfig& c, const std::string& v) {
                   const double tau = to_double(v);
                   if (!(tau > 0.0)) throw ConfigError("atom.lifetime_ns must be positive");
                   c.pipeline.atom.gamma = 1.0 / (tau * 1e-9);
                 },
                 [](const RunConfig& c) { return fmt(1e9 / c.pipeline.atom.gamma); }});
    k.push_back(scaled("atom", "detuning_mhz", [](RunConfig& c) -> double& { return c.pipeline.atom.detuning; }, 2.0 * kPi * 1e6));

    k.push_back(scaled("pulse", "duration_ns", [](RunConfig& c) -> double& { return c.pipeline.train.pulse_duration; }, 1e-9));
    k.push_back(scaled("pulse", "period_ns", [](RunConfig& c) -> double& { return c.pipeline.train.period; }, 1e-9));
    // Holds the area in radians while parsing; parse_config divides by
    // the duration at the end.
    k.push_back({"pulse", "area_pi",
                 [](RunConfig& c, const std::string& v) { c.pipeline.train.peak_rabi = to_double(v) * kPi; },
                 [](const RunConfig& c) { return fmt(c.pipeline.train.pulse_area() / kPi); }});
    k.push_back(scaled("pulse", "intensity_noise_rel", [](RunConfig& c) -> double& { return c.pipeline.train.intensity_noise_rel_sigma; }, 1.0));

    k.push_back(scaled("levels", "depump_probability", [](RunConfig& c) -> double& { return c.pipeline.levels.depump_prob_per_excitation; }, 1.0));
    k.push_back(scaled("levels", "repump_rate_hz", [](RunConfig& c) -> double& { return c.pipeline.levels.repump_rate; }, 1.0));
    k.push_back(scaled("levels", "pi_fraction_emitted", [](RunConfig& c) -> double& { return c.pipeline.levels.pi_fraction_emitted; }, 1.0));

    k.push_back(scaled("geometry", "numerical_aperture", [](RunConfig& c) -> double& { return c.geometry.numerical_aperture; }, 1.0));
    k.push_back(scaled("geometry", "axis_angle_deg", [](RunConfig& c) -> double& { return c.geometry.axis_angle; }, kPi / 180.0));
    k.push_back(scaled("geometry", "solid_angle_fraction", [](RunConfig& c) -> double& { return c.geometry.solid_angle_fraction; }, 1.0));
    k.push_back(scaled("geometry", "measured_contrast", [](RunConfig& c) -> double& { return c.measured_contrast; }, 1.0));

    for (const char* name : {"lens_transmission", "solid_angle_fraction", "pattern_correction", "imaging_optics",
                             "pinhole_and_quantum_efficiency"})
      k.push_back(budget_key(name));
    k.push_back(scaled("budget", "measured_efficiency", [](RunConfig& c) -> double& { return c.budget.measured_efficiency; }, 1.0));
    k.push_back(scaled("budget", "measured_efficiency_sigma", [](RunConfig& c) -> double& { return c.budget.measured_efficiency_sigma; }, 1.0));

    k.push_back(scaled("detector", "efficiency", [](RunConfig& c) -> double& { return c.pipeline.detection_efficiency; }, 1.0));
    k.push_back(scaled("detector", "dark_count_rate_hz", [](RunConfig& c) -> double& { return c.pipeline.detector.dark_count_rate; }, 1.0));
    k.push_back(scaled("detector", "stray_light_rate_hz", [](RunConfig& c) -> double& { return c.pipeline.detector.stray_light_rate; }, 1.0));
    k.push_back({"detector", "resolution_ps",
                 [](RunConfig& c, const std::string& v) { c.pipeline.detector.timestamp_resolution = static_cast<Picoseconds>(to_uint(v)); },
                 [](const RunConfig& c) { return std::to_string(c.pipeline.detector.timestamp_resolution); }});
    k.push_back(picoseconds_ns("detector", "dead_time_ns", [](RunConfig& c) -> Picoseconds& { return c.pipeline.detector.dead_time; }));

    k.push_back({"source", "ideal_single_photon",
                 [](RunConfig& c, const std::string& v) { c.pipeline.single_photon = to_bool(v); },
                 [](const RunConfig& c) { return std::string(c.pipeline.single_photon ? "true" : "false"); }});

    k.push_back(scaled("sequence", "excitation_window_us", [](RunConfig& c) -> double& { return c.sequence.excitation_window; }, 1e-6));
    k.push_back(scaled("sequence", "cooling_window_us", [](RunConfig& c) -> double& { return c.sequence.cooling_window; }, 1e-6));
    k.push_back(integer("sequence", "cycles", [](RunConfig& c) -> std::uint32_t& { return c.sequence.cycles_per_sequence; }));
    k.push_back(scaled("sequence", "trap_lifetime_ms", [](RunConfig& c) -> double& { return c.sequence.trap_lifetime; }, 1e-3));
    k.push_back(scaled("sequence", "capture_rate_hz", [](RunConfig& c) -> double& { return c.sequence.capture_rate; }, 1.0));
    k.push_back(scaled("sequence", "molasses_background_rate_hz", [](RunConfig& c) -> double& { return c.sequence.molasses_background_rate; }, 1.0));

    k.push_back(picoseconds_ns("analysis", "stop_delay_ns", [](RunConfig& c) -> Picoseconds& { return c.analysis.stop_delay; }));
    k.push_back(picoseconds_ns("analysis", "max_delay_ns", [](RunConfig& c) -> Picoseconds& { return c.analysis.max_delay; }));
    k.push_back(integer("analysis", "rebin_factor", [](RunConfig& c) -> std::size_t& { return c.analysis.rebin_factor; }));
    k.push_back(scaled("analysis", "peak_halfwindow_ns", [](RunConfig& c) -> double& { return c.analysis.peak_halfwindow_ns; }, 1.0));
    k.push_back(scaled("analysis", "background_min_distance_ns", [](RunConfig& c) -> double& { return c.analysis.background_min_distance_ns; }, 1.0));
    k.push_back(integer("analysis", "min_fit_counts", [](RunConfig& c) -> std::uint64_t& { return c.analysis.min_fit_counts; }));
    k.push_back(scaled("analysis", "trace_bin_us", [](RunConfig& c) -> double& { return c.analysis.trace_bin; }, 1e-6));

    k.push_back(scaled("rabi_scan", "pi_power_au", [](RunConfig& c) -> double& { return c.rabi.pi_power; }, 1.0));
    k.push_back({"rabi_scan", "powers_au",
                 [](RunConfig& c, const std::string& v) { c.rabi.powers = to_list(v); },
                 [](const RunConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.rabi.powers.size(); ++i) s += (i ? "," : "") + fmt(c.rabi.powers[i]);
                   return s;
                 }});
    k.push_back(scaled("rabi_scan", "max_power_au", [](RunConfig& c) -> double& { return c.rabi.max_power; }, 1.0));
    k.push_back(integer("rabi_scan", "points", [](RunConfig& c) -> std::size_t& { return c.rabi.points; }));
    k.push_back(integer("rabi_scan", "samples_per_point", [](RunConfig& c) -> std::size_t& { return c.rabi.samples_per_point; }));

    k.push_back(integer("run", "seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; }));
    k.push_back(integer("run", "sequences", [](RunConfig& c) -> std::size_t& { return c.sequences; }));
    k.push_back(integer("run", "threads", [](RunConfig& c) -> unsigned& { return c.threads; }));
    k.push_back(integer("run", "photon_export_sequences", [](RunConfig& c) -> std::size_t& { return c.photon_export_sequences; }));
    return k;
  }();
  return table;
}

}  // namespace

void RunConfig::validate() const {
  try {
    sequence.validate();
    pipeline.validate();
    geometry.validate();
    budget.budget.validate();
    pulses_per_window(sequence, pipeline.train);
    require(measured_contrast >= -1.0 && measured_contrast <= 1.0, "geometry.measured_contrast outside [-1, 1]");
    require(budget.measured_efficiency > 0.0 && budget.measured_efficiency_sigma >= 0.0,
            "budget: measured efficiency must be positive");
    require(analysis.stop_delay >= 0 && analysis.max_delay > 0, "analysis: delays must be positive");
    require(analysis.rebin_factor >= 1, "analysis.rebin_factor must be >= 1");
    require(analysis.trace_bin > 0.0, "analysis.trace_bin_us must be positive");
    const double period_ns = pipeline.train.period * 1e9;
    require(analysis.peak_halfwindow_ns > 0.0 && analysis.peak_halfwindow_ns < 0.5 * period_ns,
            "analysis.peak_halfwindow_ns must be below half the pulse period");
    require(analysis.background_min_distance_ns >= analysis.peak_halfwindow_ns &&
                analysis.background_min_distance_ns < 0.5 * period_ns,
            "analysis.background_min_distance_ns must lie between the half window and half the period");
    require(rabi.pi_power > 0.0, "rabi_scan.pi_power_au must be positive");
    require(rabi.powers.empty() ? rabi.points >= 2 && rabi.max_power > 0.0 : true,
            "rabi_scan: need at least two points up to a positive power");
    for (const double p : rabi.powers) require(p >= 0.0, "rabi_scan.powers_au must be >= 0");
    require(rabi.samples_per_point >= 1, "rabi_scan.samples_per_point must be >= 1");
    require(sequences >= 1, "run.sequences must be >= 1");
    require(threads >= 1, "run.threads must be >= 1");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

PeakAnalysisOptions RunConfig::peak_options() const {
  PeakAnalysisOptions o;
  o.period_ns = pipeline.train.period * 1e9;
  o.halfwindow_ns = analysis.peak_halfwindow_ns;
  o.background_min_distance_ns = analysis.background_min_distance_ns;
  o.min_fit_counts = analysis.min_fit_counts;
  return o;
}

HbtOptions RunConfig::hbt_options() const {
  HbtOptions o;
  o.n_sequences = sequences;
  o.seed = seed;
  o.threads = threads;
  o.stop_delay = analysis.stop_delay;
  o.max_delay = analysis.max_delay;
  o.rebin_factor = analysis.rebin_factor;
  o.trace_bin = analysis.trace_bin;
  o.photon_sequences = photon_export_sequences;
  return o;
}

std::vector<double> RunConfig::rabi_powers() const {
  if (!rabi.powers.empty()) return rabi.powers;
  std::vector<double> p(rabi.points);
  for (std::size_t i = 0; i < rabi.points; ++i)
    p[i] = rabi.max_power * static_cast<double>(i) / static_cast<double>(rabi.points - 1);
  return p;
}

RunConfig parse_config(std::istream& is) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(e.what());
  }
  RunConfig config;
  config.pipeline.train.peak_rabi = config.pipeline.train.pulse_area();
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("key '" + section + "' outside any section");
    for (const auto& [name, value] : body) {
      const Key* key = nullptr;
      for (const Key& k : keys())
        if (section == k.section && name == k.name) key = &k;
      if (!key) throw ConfigError("unknown key '" + section + "." + name + "'");
      try {
        key->set(config, value.data());
      } catch (const ConfigError& e) {
        throw ConfigError(section + "." + name + ": " + e.what());
      }
    }
  }
  config.pipeline.train.peak_rabi /= config.pipeline.train.pulse_duration;
  config.validate();
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in);
}

void write_config(std::ostream& os, const RunConfig& config) {
  std::string current;
  for (const Key& k : keys()) {
    if (current != k.section) {
      os << (current.empty() ? "" : "\n") << '[' << k.section << "]\n";
      current = k.section;
    }
    os << k.name << " = " << k.get(config) << '\n';
  }
}

}  // namespace photonsim
