#pragma once

#include "photonsim/bloch.hpp"
#include "photonsim/rng.hpp"

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

namespace photonsim {

enum class Polarization : std::uint8_t { sigma_plus, pi };

const char* to_string(Polarization p);

struct PhotonRecord {
  double emission_time = 0.0;  ///< s, absolute
  std::uint64_t pulse_index = 0;
  Polarization polarization = Polarization::sigma_plus;
};

/// Effective bright/dark extension of the two-level atom. Each emission
/// pumps the atom into the dark F=1 manifold with `depump_prob_per_excitation`;
/// it returns to the bright ground state at `repump_rate`.
struct LevelScheme {
  double depump_prob_per_excitation = 1.0 / 120.0;
  double repump_rate = 2.4e6;       ///< s^-1
  double pi_fraction_emitted = 0.0;  ///< probability an emitted photon is pi-polarized

  /// Closed two-level system: no depumping and no pi photons.
  static LevelScheme closed() { return {0.0, 0.0, 0.0}; }
  void validate() const;
};

/// Per-pulse photon-number probabilities p_0 .. p_max. The last entry
/// holds the probability of max_n or more photons.
struct PhotonNumberDistribution {
  std::vector<double> probabilities;

  std::size_t max_n() const { return probabilities.size() - 1; }
  double mean() const;
  /// Sum over n of n (n - 1) p_n.
  double second_factorial_moment() const;
  void validate() const;
};

/// exp(-i H_eff t) for the no-jump evolution of (c_g, c_e) under constant
/// drive, with H_eff = -detuning |e><e| + (omega/2) sigma_x - i (gamma/2) |e><e|.
class NoJumpPropagator {
 public:
  NoJumpPropagator(const AtomModel& model, double omega);

  Eigen::Matrix2cd operator()(double t) const;
  double gamma() const { return gamma_; }

 private:
  Eigen::Matrix2cd shifted_;  // generator minus its mean eigenvalue
  std::complex<double> mean_;
  std::complex<double> split_;  // half the eigenvalue difference
  double gamma_;
};

struct TrajectoryWindow {
  double start_time = 0.0;  ///< time of the first pulse's leading edge, s
  double stop_time = std::numeric_limits<double>::infinity();  ///< emissions at or after are dropped
};

/// Quantum-jump unraveling over `train.n_pulses` pulses. The atom starts in
/// the bright ground state; photons emitted after a pulse belong to that
/// pulse, and the free decay after the last pulse runs to completion
/// unless `window.stop_time` intervenes.
std::vector<PhotonRecord> sample_trajectory(const AtomModel& model, const PulseTrain& train,
                                            const LevelScheme& scheme, Engine& rng,
                                            const TrajectoryWindow& window = {});

/// Trajectory `index` under `seed`; independent of any other index.
std::vector<PhotonRecord> sample_trajectory(const AtomModel& model, const PulseTrain& train,
                                            const LevelScheme& scheme, std::uint64_t seed,
                                            std::uint64_t index = 0);

/// Photon-number distribution for a ground-state atom and one square pulse
/// (plus the free decay that follows), obtained by conditioning on the
/// first emission time. `grid_steps` sets the time grid over the pulse.
PhotonNumberDistribution photon_number_distribution(const AtomModel& model, double omega,
                                                    double pulse_duration, std::size_t max_n = 4,
                                                    std::size_t grid_steps = 8000);

/// Zero-delay to far-peak HBT area ratio for independent pulses,
/// sum n(n-1) p_n / (sum n p_n)^2.
double expected_central_peak_ratio(const PhotonNumberDistribution& dist);

/// Steady-state fraction of time on the cycling transition from the
/// bright/dark rate balance. Returns 0 when there is depumping without
/// repumping.
double cycling_occupancy(const LevelScheme& scheme, const PulseTrain& train);

/// Photon stream text format:
/// `trajectory_id,pulse_index,emission_time_ns,polarization`.
void write_photon_header(std::ostream& os);
void write_photon_records(std::ostream& os, std::uint64_t trajectory_id,
                          std::span<const PhotonRecord> photons);

struct TaggedPhoton {
  std::uint64_t trajectory_id = 0;
  std::uint64_t pulse_index = 0;
  std::int64_t emission_time_ps = 0;
  Polarization polarization = Polarization::sigma_plus;
};

std::vector<TaggedPhoton> read_photon_stream(std::istream& is);

}  // namespace photonsim
