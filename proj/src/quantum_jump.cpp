#include "photonsim/quantum_jump.hpp"

#include "photonsim/errors.hpp"
#include "photonsim/timefmt.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

namespace photonsim {

namespace {

using cd = std::complex<double>;
constexpr cd kI{0.0, 1.0};

Eigen::Matrix2cd no_jump_generator(const AtomModel& model, double omega) {
  Eigen::Matrix2cd A;
  A << cd(0.0), -kI * (0.5 * omega), -kI * (0.5 * omega), kI * model.detuning - 0.5 * model.gamma;
  return A;
}

double norm2(const Eigen::Vector2cd& c) { return c.squaredNorm(); }

}  // namespace

const char* to_string(Polarization p) { return p == Polarization::pi ? "pi" : "sigma_plus"; }

void LevelScheme::validate() const {
  require(depump_prob_per_excitation >= 0.0 && depump_prob_per_excitation <= 1.0,
          "LevelScheme: depump probability outside [0,1]");
  require(pi_fraction_emitted >= 0.0 && pi_fraction_emitted <= 1.0,
          "LevelScheme: pi fraction outside [0,1]");
  require(repump_rate >= 0.0, "LevelScheme: repump_rate must be >= 0");
}

double PhotonNumberDistribution::mean() const {
  double m = 0.0;
  for (std::size_t n = 0; n < probabilities.size(); ++n) m += static_cast<double>(n) * probabilities[n];
  return m;
}

double PhotonNumberDistribution::second_factorial_moment() const {
  double m = 0.0;
  for (std::size_t n = 2; n < probabilities.size(); ++n)
    m += static_cast<double>(n * (n - 1)) * probabilities[n];
  return m;
}

void PhotonNumberDistribution::validate() const {
  require(probabilities.size() >= 2, "PhotonNumberDistribution: need p0 and p1 at least");
  double sum = 0.0;
  for (const double p : probabilities) {
    require(p >= 0.0, "PhotonNumberDistribution: negative probability");
    sum += p;
  }
  require(std::abs(sum - 1.0) <= 1e-9, "PhotonNumberDistribution: probabilities do not sum to 1");
}

// ---------------------------------------------------------------------------

NoJumpPropagator::NoJumpPropagator(const AtomModel& model, double omega) : gamma_(model.gamma) {
  const Eigen::Matrix2cd A = no_jump_generator(model, omega);
  mean_ = 0.5 * A.trace();
  shifted_ = A - mean_ * Eigen::Matrix2cd::Identity();
  // shifted_^2 = split_^2 * I for a traceless 2x2 matrix.
  split_ = std::sqrt(mean_ * mean_ - A.determinant());
}

Eigen::Matrix2cd NoJumpPropagator::operator()(double t) const {
  const cd qt = split_ * t;
  cd c, s;  // e^{mean t} cosh(q t) and e^{mean t} sinh(q t) / q
  if (std::abs(qt) < 1e-4) {
    const cd e = std::exp(mean_ * t);
    const cd q2t2 = qt * qt;
    c = e * (1.0 + q2t2 / 2.0 + q2t2 * q2t2 / 24.0);
    s = e * t * (1.0 + q2t2 / 6.0 + q2t2 * q2t2 / 120.0);
  } else {
    const cd e1 = std::exp((mean_ + split_) * t);
    const cd e2 = std::exp((mean_ - split_) * t);
    c = 0.5 * (e1 + e2);
    s = (e1 - e2) / (2.0 * split_);
  }
  return c * Eigen::Matrix2cd::Identity() + s * shifted_;
}

// ---------------------------------------------------------------------------

namespace {

// Drives one trajectory segment by segment. The unnormalized no-jump state
// decays in norm; an emission happens when the norm falls to `threshold_`.
class JumpSampler {
 public:
  JumpSampler(const AtomModel& model, const PulseTrain& train, const LevelScheme& scheme,
              Engine& rng, const TrajectoryWindow& window, std::vector<PhotonRecord>& out)
      : model_(model), train_(train), scheme_(scheme), rng_(rng), window_(window), out_(out) {
    reset_bright();
  }

  bool done() const { return done_; }

  // Evolves over [begin, end) with constant drive omega.
  void segment(double begin, double end, double omega) {
    double t = std::max(begin, now_);
    std::optional<NoJumpPropagator> prop;
    while (!done_ && t < end) {
      if (t >= window_.stop_time) {
        done_ = true;
        return;
      }
      if (dark_) {
        if (dark_until_ >= end) {
          now_ = end;
          return;
        }
        t = dark_until_;
        dark_ = false;
        reset_bright();
        continue;
      }
      const double span = end - t;
      double jump_after = -1.0;
      if (omega > 0.0) {
        if (!prop) prop.emplace(model_, omega);
        jump_after = drive(*prop, span);
      } else {
        jump_after = free_decay(span);
      }
      if (jump_after < 0.0) {
        t = end;
        break;
      }
      t += jump_after;
      emit(t);
    }
    now_ = std::max(now_, t);
  }

 private:
  void reset_bright() {
    state_ = Eigen::Vector2cd(cd(1.0), cd(0.0));
    threshold_ = uniform_open0(rng_);
  }

  // Returns the jump delay within span, or -1 after propagating the state
  // to the end of the span without a jump.
  double drive(const NoJumpPropagator& prop, double span) {
    const Eigen::Vector2cd end_state = prop(span) * state_;
    if (norm2(end_state) >= threshold_) {
      state_ = end_state;
      return -1.0;
    }
    // Safeguarded Newton on N(s) = threshold; dN/ds = -gamma |c_e(s)|^2.
    double lo = 0.0, hi = span;
    double s = span * (norm2(state_) - threshold_) / (norm2(state_) - norm2(end_state));
    Eigen::Vector2cd c = state_;
    for (int it = 0; it < 100; ++it) {
      c = prop(s) * state_;
      const double f = norm2(c) - threshold_;
      if (f > 0.0) lo = s; else hi = s;
      if (std::abs(f) < 1e-15 || hi - lo < 1e-19) break;
      const double slope = -prop.gamma() * std::norm(c(1));
      double next = slope < 0.0 ? s - f / slope : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      s = next;
    }
    return s;
  }

  double free_decay(double span) {
    const double pg = std::norm(state_(0));
    const double pe = std::norm(state_(1));
    const double excess = threshold_ - pg;
    if (excess > 0.0 && pe > excess) {
      const double s = std::log(pe / excess) / model_.gamma;
      if (s < span) return s;
    }
    if (std::isfinite(span))
      state_(1) *= std::exp((kI * model_.detuning - 0.5 * model_.gamma) * span);
    return -1.0;
  }

  void emit(double t) {
    if (t >= window_.stop_time) {
      done_ = true;
      return;
    }
    const double rel = (t - window_.start_time) / train_.period;
    const auto last = train_.n_pulses - 1;
    const auto pulse = rel <= 0.0 ? 0 : std::min<std::uint64_t>(static_cast<std::uint64_t>(rel), last);
    Polarization pol = Polarization::sigma_plus;
    if (scheme_.pi_fraction_emitted > 0.0 && uniform01(rng_) < scheme_.pi_fraction_emitted)
      pol = Polarization::pi;
    out_.push_back({t, pulse, pol});

    if (scheme_.depump_prob_per_excitation > 0.0 &&
        uniform01(rng_) < scheme_.depump_prob_per_excitation) {
      dark_ = true;
      dark_until_ = scheme_.repump_rate > 0.0
                        ? t - std::log(uniform_open0(rng_)) / scheme_.repump_rate
                        : std::numeric_limits<double>::infinity();
      if (!std::isfinite(dark_until_)) done_ = true;
    } else {
      reset_bright();
    }
  }

  const AtomModel& model_;
  const PulseTrain& train_;
  const LevelScheme& scheme_;
  Engine& rng_;
  const TrajectoryWindow& window_;
  std::vector<PhotonRecord>& out_;

  Eigen::Vector2cd state_;
  double threshold_ = 1.0;
  double now_ = -std::numeric_limits<double>::infinity();
  bool dark_ = false;
  double dark_until_ = 0.0;
  bool done_ = false;
};

}  // namespace

std::vector<PhotonRecord> sample_trajectory(const AtomModel& model, const PulseTrain& train,
                                            const LevelScheme& scheme, Engine& rng,
                                            const TrajectoryWindow& window) {
  model.validate();
  train.validate();
  scheme.validate();
  std::vector<PhotonRecord> out;
  if (train.n_pulses == 0) return out;

  IntensityNoise noise(train.intensity_noise_rel_sigma);
  JumpSampler sampler(model, train, scheme, rng, window, out);
  const double inf = std::numeric_limits<double>::infinity();
  for (std::uint64_t k = 0; k < train.n_pulses && !sampler.done(); ++k) {
    const double lead = window.start_time + static_cast<double>(k) * train.period;
    const double trail = lead + train.pulse_duration;
    const double next = k + 1 < train.n_pulses ? lead + train.period : inf;
    const double omega = train.peak_rabi * std::sqrt(noise(rng));
    sampler.segment(lead, trail, omega);
    sampler.segment(trail, next, 0.0);
  }
  return out;
}

std::vector<PhotonRecord> sample_trajectory(const AtomModel& model, const PulseTrain& train,
                                            const LevelScheme& scheme, std::uint64_t seed,
                                            std::uint64_t index) {
  Engine rng = make_engine(seed, Stream::trajectory, index);
  return sample_trajectory(model, train, scheme, rng);
}

// ---------------------------------------------------------------------------

PhotonNumberDistribution photon_number_distribution(const AtomModel& model, double omega,
                                                    double pulse_duration, std::size_t max_n,
                                                    std::size_t grid_steps) {
  model.validate();
  require(max_n >= 2, "photon_number_distribution: max_n must be >= 2");
  require(omega >= 0.0, "photon_number_distribution: omega must be >= 0");
  require(pulse_duration > 0.0, "photon_number_distribution: pulse_duration must be positive");
  require(grid_steps >= 16, "photon_number_distribution: grid too coarse");

  // No-jump amplitudes from the ground state on a uniform grid (RK4).
  const std::size_t n = grid_steps;
  const double h = pulse_duration / static_cast<double>(n);
  const Eigen::Matrix2cd step = rk4_step_matrix(no_jump_generator(model, omega), cd(h));
  Eigen::VectorXd ground(n + 1), excited(n + 1);
  Eigen::Vector2cd c(1.0, 0.0);
  for (std::size_t j = 0; j <= n; ++j) {
    ground(j) = std::norm(c(0));
    excited(j) = std::norm(c(1));
    c = step * c;
  }

  // P_k(tau): probability of k photons given the atom is reset to the
  // ground state with tau of the pulse remaining.
  //   P_0 = |c_g(tau)|^2
  //   P_1 = |c_e(tau)|^2 + int_0^tau gamma |c_e(t)|^2 P_0(tau - t) dt
  //   P_k = int_0^tau gamma |c_e(t)|^2 P_{k-1}(tau - t) dt
  const Eigen::VectorXd density = model.gamma * excited;
  auto convolve = [&](const Eigen::VectorXd& prev) {
    Eigen::VectorXd out(n + 1);
    for (std::size_t j = 0; j <= n; ++j) {
      const auto len = static_cast<Eigen::Index>(j + 1);
      const double full = density.head(len).dot(prev.head(len).reverse());
      const double ends = 0.5 * (density(0) * prev(j) + density(j) * prev(0));
      out(j) = h * (full - ends);
    }
    return out;
  };

  PhotonNumberDistribution dist;
  dist.probabilities.resize(max_n + 1);
  Eigen::VectorXd prev = ground;
  dist.probabilities[0] = prev(n);
  double below = prev(n);
  for (std::size_t k = 1; k < max_n; ++k) {
    Eigen::VectorXd cur = convolve(prev);
    if (k == 1) cur += excited;
    dist.probabilities[k] = cur(n);
    below += cur(n);
    prev = std::move(cur);
  }
  // Tail bin holds max_n or more.
  dist.probabilities[max_n] = std::max(0.0, 1.0 - below);
  return dist;
}

double expected_central_peak_ratio(const PhotonNumberDistribution& dist) {
  dist.validate();
  const double mean = dist.mean();
  if (!(mean > 0.0)) throw std::invalid_argument("expected_central_peak_ratio: zero mean photon number");
  return dist.second_factorial_moment() / (mean * mean);
}

double cycling_occupancy(const LevelScheme& scheme, const PulseTrain& train) {
  scheme.validate();
  train.validate();
  if (scheme.depump_prob_per_excitation == 0.0) return 1.0;
  if (scheme.repump_rate == 0.0) return 0.0;
  const double excitation = ideal_excitation_probability(train.peak_rabi, train.pulse_duration);
  const double depump_rate = train.repetition_rate() * excitation * scheme.depump_prob_per_excitation;
  const double bright_dwell = 1.0 / depump_rate;
  const double dark_dwell = 1.0 / scheme.repump_rate;
  return bright_dwell / (bright_dwell + dark_dwell);
}

// ---------------------------------------------------------------------------

void write_photon_header(std::ostream& os) {
  os << "trajectory_id,pulse_index,emission_time_ns,polarization\n";
}

void write_photon_records(std::ostream& os, std::uint64_t trajectory_id,
                          std::span<const PhotonRecord> photons) {
  for (const PhotonRecord& p : photons) {
    os << trajectory_id << ',' << p.pulse_index << ','
       << format_ns(seconds_to_ps(p.emission_time)) << ',' << to_string(p.polarization) << '\n';
  }
}

std::vector<TaggedPhoton> read_photon_stream(std::istream& is) {
  std::vector<TaggedPhoton> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line.rfind("trajectory_id", 0) == 0) continue;
    std::stringstream ss(line);
    std::string id, pulse, time, pol;
    if (!std::getline(ss, id, ',') || !std::getline(ss, pulse, ',') ||
        !std::getline(ss, time, ',') || !std::getline(ss, pol))
      throw std::invalid_argument("photon stream: malformed line " + std::to_string(lineno));
    TaggedPhoton p;
    p.trajectory_id = std::stoull(id);
    p.pulse_index = std::stoull(pulse);
    p.emission_time_ps = parse_ns(time);
    if (pol == "pi") p.polarization = Polarization::pi;
    else if (pol == "sigma_plus") p.polarization = Polarization::sigma_plus;
    else throw std::invalid_argument("photon stream: unknown polarization '" + pol + "'");
    out.push_back(p);
  }
  return out;
}

}  // namespace photonsim
