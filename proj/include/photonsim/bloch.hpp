#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace photonsim {

/// Resonantly driven two-level atom with spontaneous decay.
struct AtomModel {
  double gamma = 1.0 / 26e-9;  ///< decay rate, s^-1
  double detuning = 0.0;       ///< laser minus atom frequency, rad/s
  std::string transition_label = "F=2,mF=+2 -> F'=3,mF'=+3";

  double lifetime() const { return 1.0 / gamma; }
  void validate() const;
};

enum class PulseShape { square };

/// Periodic square-pulse excitation. `peak_rabi` is the nominal Rabi
/// frequency; each pulse's power is scaled by an independent truncated
/// Gaussian factor of relative width `intensity_noise_rel_sigma`.
struct PulseTrain {
  double pulse_duration = 4e-9;  ///< s
  double period = 200e-9;        ///< s
  double peak_rabi = std::numbers::pi / 4e-9;
  double intensity_noise_rel_sigma = 0.10;
  std::uint64_t n_pulses = 1;
  PulseShape shape = PulseShape::square;

  double repetition_rate() const { return 1.0 / period; }
  double pulse_area() const { return peak_rabi * pulse_duration; }
  void validate() const;
};

/// Density matrix of the two-level atom. `coherence` is rho_eg.
struct BlochState {
  double population_excited = 0.0;
  double population_ground = 1.0;
  double coherence_re = 0.0;
  double coherence_im = 0.0;

  static BlochState ground() { return {}; }
  static BlochState excited() { return {1.0, 0.0, 0.0, 0.0}; }

  /// Throws NumericError if populations do not sum to one or the state is
  /// not a valid density matrix (both within 1e-9).
  void check_invariants() const;
};

/// Components ordered (rho_ee, rho_gg, Re rho_eg, Im rho_eg).
template <typename Scalar>
using BlochVector = Eigen::Matrix<Scalar, 4, 1>;

template <typename Scalar>
using BlochGenerator = Eigen::Matrix<Scalar, 4, 4>;

template <typename Scalar>
BlochVector<Scalar> to_vector(const BlochState& s) {
  return BlochVector<Scalar>(Scalar(s.population_excited), Scalar(s.population_ground),
                             Scalar(s.coherence_re), Scalar(s.coherence_im));
}

template <typename Derived>
BlochState to_state(const Eigen::MatrixBase<Derived>& v) {
  return {double(v(0)), double(v(1)), double(v(2)), double(v(3))};
}

/// Optical Bloch equations as a linear generator d/dt v = L v, for
/// H = -detuning |e><e| + (omega/2)(|e><g| + |g><e|) and decay at gamma.
template <typename Scalar>
BlochGenerator<Scalar> bloch_generator(Scalar gamma, Scalar detuning, Scalar omega) {
  const Scalar half = Scalar(0.5);
  BlochGenerator<Scalar> L;
  // clang-format off
  L << -gamma,        Scalar(0),     Scalar(0),        -omega,
        gamma,        Scalar(0),     Scalar(0),         omega,
        Scalar(0),    Scalar(0),    -half * gamma,     -detuning,
        half * omega, -half * omega, detuning,         -half * gamma;
  // clang-format on
  return L;
}

/// One classical RK4 step of size h for a constant linear generator,
/// written as the equivalent step matrix.
template <typename Derived>
auto rk4_step_matrix(const Eigen::MatrixBase<Derived>& L, typename Derived::Scalar h) {
  using Matrix = typename Derived::PlainObject;
  const Matrix A = h * L;
  const Matrix A2 = A * A;
  const Matrix A3 = A2 * A;
  using Scalar = typename Derived::Scalar;
  return Matrix(Matrix::Identity(L.rows(), L.cols()) + A + A2 / Scalar(2) + A3 / Scalar(6) +
                A3 * A / Scalar(24));
}

/// Largest integration step allowed for (gamma, omega):
/// min(1/gamma, 2 pi/omega) / 20.
double max_step(const AtomModel& model, double omega);

/// sin^2(omega t / 2).
double ideal_excitation_probability(double omega, double t);

/// Single RK4 step; throws std::invalid_argument if dt exceeds max_step.
BlochState rk4_step(const BlochState& state, const AtomModel& model, double omega, double dt);

/// Advances `state` by `duration` under constant drive using equal RK4
/// substeps that respect max_step.
BlochState evolve_bloch(const BlochState& state, const AtomModel& model, double omega,
                        double duration);

/// Ground-state atom driven by one square pulse, followed by free decay.
struct PulseResponse {
  BlochState end_of_pulse;
  double emitted_during_pulse = 0.0;  ///< gamma * integral of rho_ee over the pulse
  /// Mean photons emitted per pulse including the free-decay tail.
  double emitted_photons() const { return emitted_during_pulse + end_of_pulse.population_excited; }
};

PulseResponse pulse_response(const AtomModel& model, double omega, double pulse_duration);

struct TimeSpectrum {
  Eigen::VectorXd times;          ///< s, from pulse start
  Eigen::VectorXd emission_rate;  ///< s^-1
};

/// Emission rate gamma * rho_ee(t) for a square pulse starting at t = 0 and
/// free decay afterwards, sampled on a uniform grid up to `horizon`.
TimeSpectrum pulse_time_spectrum(const AtomModel& model, double omega, double pulse_duration,
                                 double horizon, double grid_dt);

/// Omega(P) = omega_per_sqrt_power * sqrt(P).
struct RabiCalibration {
  double omega_per_sqrt_power = 0.0;

  /// Calibration that makes `pi_power` a pi pulse of length `pulse_duration`.
  static RabiCalibration from_pi_power(double pi_power, double pulse_duration);
  double omega(double power) const;
};

struct RabiPoint {
  double power = 0.0;
  double excitation_probability = 0.0;  ///< mean rho_ee at pulse end
  double emitted_photons = 0.0;         ///< mean photons per pulse
};

/// Averaged single-pulse response versus relative power. Each of the
/// `samples_per_point` noise draws is shared by all power points.
std::vector<RabiPoint> rabi_scan(const AtomModel& model, const PulseTrain& train,
                                 std::span<const double> powers, const RabiCalibration& calib,
                                 std::size_t samples_per_point, std::uint64_t seed);

/// k-th Rabi maximum of a scan and the minimum that follows it.
struct RabiFringe {
  int index = 0;
  double max_power = 0.0;
  double max_value = 0.0;
  double min_power = 0.0;
  double min_value = 0.0;
  double contrast() const { return (max_value - min_value) / (max_value + min_value); }
};

/// Locates fringes by searching the scan near pulse areas (2k-1) pi for
/// maxima and 2k pi for minima. Uses `emitted_photons` when requested,
/// excitation probability otherwise.
std::vector<RabiFringe> rabi_fringes(std::span<const RabiPoint> scan, const RabiCalibration& calib,
                                     double pulse_duration, bool use_emitted_photons = false);

}  // namespace photonsim
