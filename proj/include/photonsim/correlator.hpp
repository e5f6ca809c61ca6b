#pragma once

#include "photonsim/detection.hpp"
#include "photonsim/timefmt.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace photonsim {

struct HistogramMetadata {
  std::uint64_t n_starts = 0;
  double acquisition_time = 0.0;  ///< s of gated acquisition
  std::string gates;
  std::uint64_t dropped_counts = 0;  ///< lost to a trailing partial bin on rebinning
};

/// Start-stop delay histogram. Bin i covers
/// [origin_delay + i * bin_width, origin_delay + (i + 1) * bin_width).
struct Histogram {
  Picoseconds bin_width = 1;
  Picoseconds origin_delay = 0;
  std::vector<std::uint64_t> counts;
  HistogramMetadata metadata;

  std::size_t size() const { return counts.size(); }
  double bin_width_ns() const { return ps_to_ns(bin_width); }
  double bin_start_ns(std::size_t i) const {
    return ps_to_ns(origin_delay + static_cast<Picoseconds>(i) * bin_width);
  }
  double bin_center_ns(std::size_t i) const { return bin_start_ns(i) + 0.5 * bin_width_ns(); }
  /// Index of the bin containing `delay`, or size() if outside.
  std::size_t bin_of(Picoseconds delay) const;
  std::uint64_t total() const;

  /// Element-wise sum; binning must match.
  Histogram& operator+=(const Histogram& other);
};

/// For each start, the delay to the first stop at or after it. Stops pass
/// through a delay line of `stop_delay`, so delays in
/// [-stop_delay, max_delay) are recorded; later first stops and starts
/// without any stop are discarded. Both streams must be time-sorted.
Histogram start_stop_histogram(std::span<const DetectionEvent> starts,
                               std::span<const DetectionEvent> stops, Picoseconds bin_width,
                               Picoseconds max_delay, Picoseconds stop_delay = 0);

/// Sums groups of `factor` bins. A trailing partial group is dropped and
/// its counts recorded in metadata.dropped_counts.
Histogram rebin(const Histogram& h, std::size_t factor);

struct Measured {
  double value = 0.0;
  double sigma = 0.0;
};

struct PeakAnalysisOptions {
  double period_ns = 200.0;
  double halfwindow_ns = 80.0;
  double background_min_distance_ns = 90.0;
  std::uint64_t min_fit_counts = 5;
  int max_iterations = 100;
};

struct PeakReport {
  std::vector<double> centers_ns;
  std::vector<Measured> areas;        ///< background- and crosstalk-corrected
  std::vector<Measured> half_widths;  ///< per-peak 1/e half-width, ns (non-central)
  std::size_t central = 0;            ///< index of the zero-delay peak
  Measured central_ratio;             ///< central area / mean non-central area; NaN without side peaks
  double raw_central_ratio = 0.0;     ///< same with plain window sums
  Measured background_per_bin;
  Measured half_width_ns;             ///< weighted mean over non-central peaks
  int iterations = 0;
};

/// Peak areas, zero-delay residual and peak width of a periodic
/// coincidence histogram. The flat background is estimated from bins
/// farther than background_min_distance_ns from every peak center, after
/// removing the exponential tails of the peaks themselves.
PeakReport peak_analysis(const Histogram& h, const PeakAnalysisOptions& options = {});

/// `bin_start_ns,bin_width_ns,counts`.
void write_histogram_csv(std::ostream& os, const Histogram& h);

/// Structured text, one `label: value ± uncertainty` line per quantity.
void write_peak_report(std::ostream& os, const PeakReport& report);

}  // namespace photonsim
