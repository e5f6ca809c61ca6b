#pragma once

#include "photonsim/bloch.hpp"
#include "photonsim/correlator.hpp"
#include "photonsim/detection.hpp"
#include "photonsim/quantum_jump.hpp"

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

namespace photonsim {

struct SequenceConfig {
  double excitation_window = 115e-6;  ///< s
  double cooling_window = 885e-6;     ///< s
  std::uint32_t cycles_per_sequence = 100;
  double trap_lifetime = 34e-3;       ///< s; infinity disables loss
  double capture_rate = 3.0;          ///< s^-1
  /// Both detectors, during cooling while the atom is trapped. Not gated
  /// into the correlator; it only shows up in the trace.
  double molasses_background_rate = 3000.0;

  double cycle_period() const { return excitation_window + cooling_window; }
  double duration() const { return cycles_per_sequence * cycle_period(); }
  void validate() const;
};

/// Everything between the atom and the time-tagged clicks.
struct SourcePipeline {
  AtomModel atom;
  PulseTrain train;  ///< n_pulses is ignored; the window sets it
  LevelScheme levels;
  double detection_efficiency = 0.006;
  DetectorParams detector;
  /// Keep only the first photon of every pulse (an ideal single-photon source).
  bool single_photon = false;

  void validate() const;
};

std::uint64_t pulses_per_window(const SequenceConfig& config, const PulseTrain& train);

/// Excitation windows of one sequence, in picoseconds from its start.
std::vector<Window> excitation_gates(const SequenceConfig& config);
std::vector<Window> cooling_windows(const SequenceConfig& config);

struct SequenceRecord {
  std::uint64_t index = 0;
  Picoseconds start = 0;        ///< absolute start of the sequence
  double duration = 0.0;        ///< s
  double survival_time = 0.0;   ///< s after start; may exceed duration
  DetectionStreams gated;       ///< excitation-window clicks, absolute time
  DetectionStreams cooling;     ///< ungated cooling-window clicks
  std::vector<PhotonRecord> photons;  ///< emitted photons, only on request

  Window span() const { return {start, start + seconds_to_ps(duration)}; }
};

/// One atom, one sequence. Each excitation window starts with the atom in
/// the bright ground state; emission stops at the survival time.
SequenceRecord run_sequence(const SequenceConfig& config, const SourcePipeline& pipeline,
                            std::uint64_t seed, std::uint64_t index, Picoseconds start = 0,
                            bool keep_photons = false);

/// Start times of `n` consecutive sequences, each followed by an
/// exponential wait for the next atom, snapped up to the tick grid.
std::vector<Picoseconds> sequence_starts(const SequenceConfig& config, std::size_t n,
                                         std::uint64_t seed, Picoseconds resolution);

// ---------------------------------------------------------------------------
// Loading

struct OccupancyStep {
  double time = 0.0;
  int occupancy = 0;
};

struct LoadingRecord {
  std::vector<double> arrivals;          ///< every atom entering the trap
  std::vector<OccupancyStep> occupancy;  ///< piecewise constant, starts empty at t = 0
  std::vector<double> load_waits;        ///< empty-trap dwell before each load
  double horizon = 0.0;

  double mean_occupancy() const;
  int max_occupancy() const;
};

/// Collisional blockade: an atom entering an empty trap stays; one entering
/// an occupied trap ejects both. `loss_rate` adds single-atom loss.
LoadingRecord simulate_loading(double capture_rate, double horizon, std::uint64_t seed,
                               double loss_rate = 0.0);

// ---------------------------------------------------------------------------
// Trace

struct FluorescenceTrace {
  double bin_width_us = 0.0;
  std::vector<double> time_us;       ///< bin start
  std::vector<double> mean_rate_hz;  ///< per sequence
  std::vector<std::uint64_t> counts;
  std::uint64_t n_sequences = 0;
};

/// Running per-bin click totals for one detector, all channels included.
class TraceAccumulator {
 public:
  TraceAccumulator(double duration, double bin_width, Detector detector = Detector::A);

  void add(const SequenceRecord& record);
  void merge(const TraceAccumulator& other);
  FluorescenceTrace result() const;

 private:
  void add_stream(std::span<const DetectionEvent> events, Picoseconds start);

  double duration_;
  Picoseconds bin_;
  Detector detector_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t n_ = 0;
};

FluorescenceTrace average_trace(std::span<const SequenceRecord> sequences, double bin_width,
                                Detector detector = Detector::A);

/// `time_us,mean_rate_hz,n_sequences`.
void write_trace_csv(std::ostream& os, const FluorescenceTrace& trace);

struct WindowRate {
  double time = 0.0;   ///< window center, s
  double rate = 0.0;   ///< s^-1
  double sigma = 0.0;  ///< Poisson
};

/// Mean trace rate over the bins lying fully inside each excitation window.
std::vector<WindowRate> excitation_window_rates(const FluorescenceTrace& trace,
                                                const SequenceConfig& config);

struct EnvelopeFit {
  double amplitude = 0.0;
  double offset = 0.0;
  double lifetime = 0.0;
  double lifetime_sigma = 0.0;
  double chi2 = 0.0;
};

/// Weighted fit of amplitude * exp(-t / lifetime) + offset. lifetime_sigma
/// is the counting error only; survival fluctuations are shared by every
/// window of a sequence and add roughly lifetime / sqrt(n_sequences).
EnvelopeFit fit_envelope(std::span<const WindowRate> points);

struct KsResult {
  double statistic = 0.0;
  double p_value = 0.0;
};

/// One-sample Kolmogorov-Smirnov test against an exponential of `mean`,
/// with the asymptotic p-value.
KsResult ks_exponential(std::vector<double> samples, double mean);

// ---------------------------------------------------------------------------
// Closed forms and the full run

/// Mean photons per pulse, averaged over the intensity noise.
double mean_photons_per_pulse(const AtomModel& atom, const PulseTrain& train);

/// Detected rate on both detectors during excitation with a trapped atom,
/// noise included.
double expected_peak_rate(const SourcePipeline& pipeline);

/// Excitation-window rate averaged over the sequence, including atom loss.
double expected_sequence_average_rate(const SequenceConfig& config, const SourcePipeline& pipeline);

struct HbtOptions {
  std::size_t n_sequences = 20000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  Picoseconds stop_delay = 705000;
  Picoseconds max_delay = 705000;
  std::size_t rebin_factor = 4;
  double trace_bin = 5e-6;       ///< s
  bool keep_events = false;      ///< retain every SequenceRecord
  std::size_t photon_sequences = 0;  ///< keep emitted photons of the first n sequences
};

struct HbtRun {
  Histogram raw;      ///< resolution-width bins
  Histogram rebinned;
  FluorescenceTrace trace;
  std::vector<double> survival_times;
  std::vector<SequenceRecord> sequences;  ///< only with keep_events
  std::vector<std::vector<PhotonRecord>> photons;  ///< first photon_sequences sequences
  std::uint64_t gated_counts = 0;
  double excitation_time = 0.0;  ///< s, gate time summed over sequences
};

/// Runs the sequences, correlates A (start) against delayed B (stop) and
/// averages the trace. Output does not depend on the thread count.
HbtRun run_hbt(const SequenceConfig& config, const SourcePipeline& pipeline, const HbtOptions& options);

}  // namespace photonsim
