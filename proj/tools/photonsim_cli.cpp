#include "photonsim/bloch.hpp"
#include "photonsim/config.hpp"
#include "photonsim/correlator.hpp"
#include "photonsim/errors.hpp"
#include "photonsim/optics.hpp"
#include "photonsim/quantum_jump.hpp"
#include "photonsim/sequencer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace photonsim;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> sequences;
  std::optional<unsigned> threads;
  std::string out = ".";
  std::string events;
};

std::string num(double v, const char* format = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string pm(double v, double s, const char* format = "%.6g") {
  return num(v, format) + " ± " + num(s, format);
}

RunConfig resolve(const Flags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (f.seed) c.seed = *f.seed;
  if (f.sequences) c.sequences = *f.sequences;
  if (f.threads) c.threads = *f.threads;
  c.validate();
  return c;
}

std::ofstream open_out(const fs::path& dir, const std::string& name) {
  std::ofstream os(dir / name, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
  return os;
}

// Writes to the file and echoes to stdout.
void emit(const fs::path& dir, const std::string& name, const std::string& text) {
  open_out(dir, name) << text;
  std::cout << text;
}

int cmd_rabi_scan(const RunConfig& c, const fs::path& out) {
  const std::vector<double> powers = c.rabi_powers();
  const RabiCalibration calib = RabiCalibration::from_pi_power(c.rabi.pi_power, c.pipeline.train.pulse_duration);
  const std::size_t samples = c.pipeline.train.intensity_noise_rel_sigma > 0.0 ? c.rabi.samples_per_point : 1;
  const std::vector<RabiPoint> scan = rabi_scan(c.pipeline.atom, c.pipeline.train, powers, calib, samples, c.seed);
  const double scale = c.pipeline.train.repetition_rate() * c.pipeline.detection_efficiency;

  auto csv = open_out(out, "rabi_scan.csv");
  csv << "power,probability,count_rate\n";
  for (const RabiPoint& p : scan)
    csv << num(p.power) << ',' << num(p.excitation_probability, "%.8f") << ','
        << num(p.emitted_photons * scale, "%.3f") << '\n';

  std::string report;
  for (const RabiFringe& f : rabi_fringes(scan, calib, c.pipeline.train.pulse_duration, true))
    report += "fringe[" + std::to_string(f.index) + "]: max " + num(f.max_value * scale, "%.1f") + " at " +
              num(f.max_power) + ", min " + num(f.min_value * scale, "%.1f") + " at " + num(f.min_power) +
              ", contrast " + num(f.contrast(), "%.4f") + '\n';
  emit(out, "rabi_fringes.txt", report);
  return 0;
}

void write_histograms(const fs::path& out, const Histogram& raw, const Histogram& rebinned,
                      const PeakReport& report) {
  auto h1 = open_out(out, "histogram_raw.csv");
  write_histogram_csv(h1, raw);
  auto h2 = open_out(out, "histogram.csv");
  write_histogram_csv(h2, rebinned);
  std::ostringstream r;
  r << "n_starts: " << rebinned.metadata.n_starts << '\n'
    << "acquisition_time_s: " << num(rebinned.metadata.acquisition_time, "%.6f") << '\n';
  if (!rebinned.metadata.gates.empty()) r << "gates: " << rebinned.metadata.gates << '\n';
  r << "bin_width_ns: " << format_ns(rebinned.bin_width) << '\n'
    << "coincidences: " << rebinned.total() << '\n'
    << "dropped_on_rebin: " << rebinned.metadata.dropped_counts << '\n';
  write_peak_report(r, report);
  emit(out, "peak_report.txt", r.str());
}

int cmd_hbt(const RunConfig& c, const fs::path& out) {
  HbtOptions options = c.hbt_options();
  options.keep_events = true;
  HbtRun run = run_hbt(c.sequence, c.pipeline, options);

  {
    auto os = open_out(out, "events.csv");
    os << "detector,timestamp_ns,origin\n";
    for (const SequenceRecord& s : run.sequences) {
      std::ostringstream rows;
      write_events(rows, s.gated);
      const std::string text = rows.str();
      os << text.substr(text.find('\n') + 1);
    }
  }
  {
    auto os = open_out(out, "sequences.csv");
    os << "index,start_ns,survival_ms\n";
    for (const SequenceRecord& s : run.sequences)
      os << s.index << ',' << format_ns(s.start) << ',' << num(s.survival_time * 1e3, "%.6f") << '\n';
  }
  if (!run.photons.empty()) {
    auto os = open_out(out, "photons.csv");
    write_photon_header(os);
    for (std::size_t i = 0; i < run.photons.size(); ++i) write_photon_records(os, i, run.photons[i]);
  }
  {
    auto os = open_out(out, "trace.csv");
    write_trace_csv(os, run.trace);
  }
  {
    auto os = open_out(out, "config_used.ini");
    write_config(os, c);
  }

  const PeakReport report = peak_analysis(run.rebinned, c.peak_options());
  write_histograms(out, run.raw, run.rebinned, report);

  std::ostringstream s;
  s << "sequences: " << options.n_sequences << '\n'
    << "excitation_time_s: " << num(run.excitation_time, "%.3f") << '\n'
    << "gated_counts: " << run.gated_counts << '\n'
    << "mean_excitation_rate_hz: " << num(run.gated_counts / run.excitation_time, "%.1f") << '\n'
    << "expected_mean_excitation_rate_hz: " << num(expected_sequence_average_rate(c.sequence, c.pipeline), "%.1f") << '\n'
    << "expected_peak_rate_hz: " << num(expected_peak_rate(c.pipeline), "%.1f") << '\n';
  const std::vector<WindowRate> windows = excitation_window_rates(run.trace, c.sequence);
  if (!windows.empty())
    s << "first_window_rate_detector_a_hz: " << pm(windows.front().rate, windows.front().sigma, "%.1f") << '\n';
  if (windows.size() >= 3 && !std::isinf(c.sequence.trap_lifetime)) {
    const EnvelopeFit fit = fit_envelope(windows);
    s << "envelope_lifetime_ms: " << pm(fit.lifetime * 1e3, fit.lifetime_sigma * 1e3, "%.3f") << '\n'
      << "envelope_amplitude_hz: " << num(fit.amplitude, "%.1f") << '\n'
      << "envelope_offset_hz: " << num(fit.offset, "%.1f") << '\n';
    const KsResult ks = ks_exponential(run.survival_times, c.sequence.trap_lifetime);
    s << "survival_ks_statistic: " << num(ks.statistic, "%.5f") << '\n'
      << "survival_ks_p_value: " << num(ks.p_value, "%.4f") << '\n';
  }
  emit(out, "summary.txt", s.str());
  return 0;
}

int cmd_correlate(const RunConfig& c, const Flags& f, const fs::path& out) {
  if (f.events.empty()) throw ConfigError("correlate needs --events");
  std::ifstream in(f.events);
  if (!in) throw ConfigError("cannot open event file '" + f.events + "'");
  const DetectionStreams streams = read_events(in);
  const Picoseconds res = c.pipeline.detector.timestamp_resolution;
  Histogram raw = start_stop_histogram(streams.a, streams.b, res, c.analysis.max_delay, c.analysis.stop_delay);
  const Histogram rebinned = rebin(raw, c.analysis.rebin_factor);
  write_histograms(out, raw, rebinned, peak_analysis(rebinned, c.peak_options()));
  return 0;
}

int cmd_budget(const RunConfig& c, const fs::path& out) {
  std::ostringstream s;
  for (const BudgetFactor& f : c.budget.budget.factors) s << f.label << ": " << num(f.factor, "%.4f") << '\n';
  const double overall = overall_efficiency(c.budget.budget);
  const bool ok = compatible(overall, c.budget.measured_efficiency, c.budget.measured_efficiency_sigma);
  s << "overall_efficiency: " << num(overall, "%.6f") << '\n'
    << "measured_efficiency: " << pm(c.budget.measured_efficiency, c.budget.measured_efficiency_sigma, "%.6f") << '\n'
    << "compatible_2sigma: " << (ok ? "yes" : "no") << '\n'
    << "geometric_solid_angle_fraction: " << num(c.geometry.geometric_solid_angle_fraction(), "%.4f") << '\n'
    << "computed_pattern_correction: "
    << num(pattern_correction_factor(c.geometry, DipolePattern::sigma_plus), "%.4f") << '\n';
  emit(out, "budget.txt", s.str());
  return 0;
}

int cmd_contrast(const RunConfig& c, const fs::path& out) {
  std::ostringstream s;
  const PolarizedCollection sigma = collect_polarized(c.geometry, DipolePattern::sigma_plus);
  const PolarizedCollection pi = collect_polarized(c.geometry, DipolePattern::pi);
  s << "numerical_aperture: " << num(c.geometry.numerical_aperture, "%.4f") << '\n'
    << "sigma_contrast: " << num(sigma.contrast(), "%.4f") << '\n'
    << "pi_contrast: " << num(pi.contrast(), "%.4f") << '\n'
    << "pattern_correction_sigma: "
    << num(pattern_correction_factor(c.geometry, DipolePattern::sigma_plus), "%.4f") << '\n'
    << "measured_contrast: " << num(c.measured_contrast, "%.4f") << '\n';
  const double collected = invert_pi_fraction(c.geometry, c.measured_contrast);
  s << "pi_fraction_collected: " << num(collected, "%.4f") << '\n'
    << "pi_fraction_emitted: " << num(emitted_pi_fraction(c.geometry, collected), "%.4f") << '\n';
  emit(out, "contrast.txt", s.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-atom triggered photon source simulator"};
  app.require_subcommand(1);
  Flags flags;
  app.add_option("--config", flags.config, "Run configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", flags.seed, "Master seed");
  app.add_option("--out", flags.out, "Output directory");
  app.add_option("--sequences", flags.sequences, "Number of sequences (hbt)");
  app.add_option("--threads", flags.threads, "Worker threads")->check(CLI::PositiveNumber);

  auto* rabi = app.add_subcommand("rabi-scan", "Excitation probability and count rate versus power");
  auto* hbt = app.add_subcommand("hbt", "Full sequence run, start-stop histogram and peak analysis");
  auto* budget = app.add_subcommand("budget", "Collection efficiency budget");
  auto* contrast = app.add_subcommand("contrast", "Polarization contrast and pi fraction");
  auto* correlate = app.add_subcommand("correlate", "Histogram and peak analysis of an event file");
  correlate->add_option("--events", flags.events, "Event file")->required()->check(CLI::ExistingFile);
  auto* defaults = app.add_subcommand("defaults", "Print the default configuration");
  for (auto* sub : {rabi, hbt, budget, contrast, correlate, defaults}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (defaults->parsed()) {
      write_config(std::cout, RunConfig{});
      return 0;
    }
    const RunConfig config = resolve(flags);
    const fs::path out(flags.out);
    fs::create_directories(out);
    if (rabi->parsed()) return cmd_rabi_scan(config, out);
    if (hbt->parsed()) return cmd_hbt(config, out);
    if (budget->parsed()) return cmd_budget(config, out);
    if (contrast->parsed()) return cmd_contrast(config, out);
    if (correlate->parsed()) return cmd_correlate(config, flags, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
