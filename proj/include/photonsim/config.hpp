#pragma once

#include "photonsim/correlator.hpp"
#include "photonsim/optics.hpp"
#include "photonsim/sequencer.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace photonsim {

struct BudgetConfig {
  EfficiencyBudget budget = EfficiencyBudget::measured_setup();
  double measured_efficiency = 0.006;
  double measured_efficiency_sigma = 0.0004;
};

struct AnalysisConfig {
  Picoseconds stop_delay = 705000;
  Picoseconds max_delay = 705000;
  std::size_t rebin_factor = 4;
  double peak_halfwindow_ns = 80.0;
  double background_min_distance_ns = 90.0;
  std::uint64_t min_fit_counts = 5;
  double trace_bin = 5e-6;  ///< s
};

struct RabiScanConfig {
  double pi_power = 1.0;             ///< arbitrary power unit
  std::vector<double> powers;        ///< explicit list; overrides the grid
  double max_power = 50.0;
  std::size_t points = 501;
  std::size_t samples_per_point = 2000;
};

/// Everything a CLI command needs. Defaults reproduce the measured setup.
struct RunConfig {
  SequenceConfig sequence;
  SourcePipeline pipeline;
  CollectionGeometry geometry;
  double measured_contrast = 0.72;
  BudgetConfig budget;
  AnalysisConfig analysis;
  RabiScanConfig rabi;
  std::uint64_t seed = 1;
  std::size_t sequences = 20000;
  unsigned threads = 1;
  std::size_t photon_export_sequences = 0;

  /// Runs every module's checks; failures become ConfigError.
  void validate() const;
  PeakAnalysisOptions peak_options() const;
  HbtOptions hbt_options() const;
  std::vector<double> rabi_powers() const;
};

/// Sectioned `key = value` text. Unknown sections or keys, malformed
/// numbers and failed validation throw ConfigError.
RunConfig parse_config(std::istream& is);
RunConfig load_config(const std::string& path);

/// Every key with its current value; parse_config reads it back to 12
/// significant digits.
void write_config(std::ostream& os, const RunConfig& config);

}  // namespace photonsim
