#include "oracles.hpp"

#include "photonsim/quantum_jump.hpp"
#include "photonsim/timefmt.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

using namespace photonsim;
constexpr double pi = std::numbers::pi;

namespace {

PulseTrain single_pulse(double area = pi) {
  PulseTrain t;
  t.n_pulses = 1;
  t.peak_rabi = area / t.pulse_duration;
  t.intensity_noise_rel_sigma = 0.0;
  return t;
}

}  // namespace

TEST_CASE("no drive gives no photons") {
  PulseTrain t = single_pulse();
  t.n_pulses = 50;
  t.peak_rabi = 0.0;
  for (std::uint64_t i = 0; i < 100; ++i)
    CHECK(sample_trajectory(AtomModel{}, t, LevelScheme{}, 7, i).empty());
}

TEST_CASE("certain depumping without repump stops after one photon") {
  PulseTrain t = single_pulse();
  t.n_pulses = 50;
  const LevelScheme scheme{1.0, 0.0, 0.0};
  for (std::uint64_t i = 0; i < 500; ++i)
    CHECK(sample_trajectory(AtomModel{}, t, scheme, 3, i).size() <= 1);
}

TEST_CASE("no-jump propagator agrees with fine amplitude integration") {
  AtomModel m;
  m.detuning = 2.0 * pi * 15e6;
  const double omega = 1.7 * pi / 4e-9;
  const NoJumpPropagator prop(m, omega);
  const double T = 7e-9;
  const int steps = 20000;
  const double h = T / steps;
  Eigen::Matrix2cd A;
  const std::complex<double> i(0.0, 1.0);
  A << 0.0, -i * 0.5 * omega, -i * 0.5 * omega, i * m.detuning - 0.5 * m.gamma;
  Eigen::Vector2cd c(1.0, 0.0);
  for (int k = 0; k < steps; ++k) {
    const Eigen::Vector2cd k1 = A * c;
    const Eigen::Vector2cd k2 = A * (c + 0.5 * h * k1);
    const Eigen::Vector2cd k3 = A * (c + 0.5 * h * k2);
    const Eigen::Vector2cd k4 = A * (c + h * k3);
    c += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  const Eigen::Vector2cd closed = prop(T) * Eigen::Vector2cd(1.0, 0.0);
  CHECK((closed - c).norm() < 1e-10);
  CHECK((prop(0.0) - Eigen::Matrix2cd::Identity()).norm() < 1e-14);
}

TEST_CASE("photon number distribution at the default pi pulse") {
  const AtomModel m;
  const auto d = photon_number_distribution(m, pi / 4e-9, 4e-9);
  REQUIRE(d.max_n() == 4);
  CHECK_NOTHROW(d.validate());
  CHECK(d.probabilities[1] == doctest::Approx(0.981).epsilon(0.005));
  CHECK(d.probabilities[2] == doctest::Approx(0.0183).epsilon(0.05));
  CHECK(d.probabilities[3] < 1e-3);
  CHECK(d.probabilities[4] < 1e-5);
  // Mean photon number is the integrated emission, known independently.
  CHECK(std::abs(d.mean() - oracle::photons_per_pulse(m.gamma, pi / 4e-9, 4e-9)) < 1e-5);
}

TEST_CASE("photon number distribution matches quantum-jump sampling") {
  const AtomModel m;
  const PulseTrain t = single_pulse();
  const auto d = photon_number_distribution(m, t.peak_rabi, t.pulse_duration);
  constexpr std::size_t n = 1000000;
  std::array<double, 4> counts{};
  Engine rng = make_engine(11, Stream::test);
  for (std::size_t i = 0; i < n; ++i) {
    const auto photons = sample_trajectory(m, t, LevelScheme::closed(), rng);
    ++counts[std::min<std::size_t>(photons.size(), 3)];
  }
  const std::array<double, 4> expected{d.probabilities[0], d.probabilities[1], d.probabilities[2],
                                       d.probabilities[3] + d.probabilities[4]};
  for (std::size_t k = 0; k < 4; ++k) {
    const double p = counts[k] / n;
    const double se = std::sqrt(std::max(expected[k], 1.0 / n) * (1.0 - expected[k]) / n);
    INFO("k = " << k << " sampled " << p << " expected " << expected[k]);
    CHECK(std::abs(p - expected[k]) < 3.0 * se + 1e-6);
  }
}

TEST_CASE("short pulses suppress two-photon emission") {
  const AtomModel m;
  double last = 1.0;
  for (const double T : {4e-9, 1e-9, 0.25e-9, 0.05e-9}) {
    const auto d = photon_number_distribution(m, pi / T, T);
    CHECK(d.probabilities[2] < last);
    last = d.probabilities[2];
  }
  CHECK(last < 1e-3);
}

TEST_CASE("photon number distribution preconditions") {
  const AtomModel m;
  CHECK_THROWS_AS(photon_number_distribution(m, 1e9, 4e-9, 1), std::invalid_argument);
  CHECK_THROWS_AS(photon_number_distribution(m, -1.0, 4e-9), std::invalid_argument);
  CHECK_THROWS_AS(photon_number_distribution(m, 1e9, 0.0), std::invalid_argument);
}

TEST_CASE("central peak ratio from the photon number distribution") {
  CHECK(expected_central_peak_ratio({{0.0, 1.0, 0.0}}) == 0.0);
  const double r = expected_central_peak_ratio({{0.0, 0.981, 0.019}});
  CHECK(r == doctest::Approx(0.038 / (1.019 * 1.019)).epsilon(1e-12));
  CHECK(r == doctest::Approx(0.0366).epsilon(0.01));
  CHECK_THROWS_AS(expected_central_peak_ratio({{1.0, 0.0, 0.0}}), std::invalid_argument);
  CHECK_THROWS_AS(expected_central_peak_ratio({{0.5, 0.6, 0.0}}), std::invalid_argument);
  // Poissonian light gives one.
  const double mu = 0.3;
  std::vector<double> p;
  double sum = 0.0;
  for (int k = 0; k < 30; ++k) {
    p.push_back(std::exp(-mu) * std::pow(mu, k) / std::tgamma(k + 1.0));
    sum += p.back();
  }
  p.back() += 1.0 - sum;
  CHECK(expected_central_peak_ratio({p}) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("cycling occupancy limits") {
  const PulseTrain t;
  CHECK(cycling_occupancy(LevelScheme::closed(), t) == 1.0);
  CHECK(cycling_occupancy({1.0 / 120.0, 0.0, 0.0}, t) == 0.0);
  const double occ = cycling_occupancy(LevelScheme{}, t);
  CHECK(occ > 0.9);
  CHECK(occ < 1.0);
  LevelScheme slow;
  slow.repump_rate = 1e5;
  CHECK(cycling_occupancy(slow, t) < occ);
}

TEST_CASE("cycling occupancy agrees with a long jump trajectory") {
  const AtomModel m;
  PulseTrain t;
  t.intensity_noise_rel_sigma = 0.0;
  t.n_pulses = 200000;
  const LevelScheme scheme;
  const auto photons = sample_trajectory(m, t, scheme, 5, 0);
  const double per_pulse = static_cast<double>(photons.size()) / t.n_pulses;
  // Photons per bright pulse from the no-depump trajectory statistics.
  const double bright = photon_number_distribution(m, t.peak_rabi, t.pulse_duration).mean();
  const double occupancy_mc = per_pulse / bright;
  CHECK(occupancy_mc == doctest::Approx(cycling_occupancy(scheme, t)).epsilon(0.01));
}

TEST_CASE("emission times follow the time spectrum") {
  const AtomModel m;
  const PulseTrain t = single_pulse();
  const double bin = 1e-9;
  const std::size_t nbins = 60;
  const TimeSpectrum ts = pulse_time_spectrum(m, t.peak_rabi, t.pulse_duration, nbins * bin, 0.01e-9);
  std::vector<double> expected(nbins + 1, 0.0);
  for (Eigen::Index i = 0; i + 1 < ts.times.size(); ++i) {
    const auto b = static_cast<std::size_t>(std::floor(0.5 * (ts.times(i) + ts.times(i + 1)) / bin));
    if (b < nbins) expected[b] += 0.5 * (ts.emission_rate(i) + ts.emission_rate(i + 1)) * 0.01e-9;
  }
  double inside = 0.0;
  for (std::size_t b = 0; b < nbins; ++b) inside += expected[b];
  const double mean = oracle::photons_per_pulse(m.gamma, t.peak_rabi, t.pulse_duration);
  expected[nbins] = mean - inside;

  constexpr std::size_t n = 300000;
  std::vector<double> counts(nbins + 1, 0.0);
  Engine rng = make_engine(12, Stream::test);
  for (std::size_t i = 0; i < n; ++i)
    for (const PhotonRecord& p : sample_trajectory(m, t, LevelScheme::closed(), rng))
      counts[std::min(nbins, static_cast<std::size_t>(p.emission_time / bin))] += 1.0;

  double chi2 = 0.0;
  for (std::size_t b = 0; b <= nbins; ++b) {
    const double e = expected[b] * n;
    chi2 += (counts[b] - e) * (counts[b] - e) / e;
  }
  CHECK(chi2 < oracle::chi2_quantile(static_cast<double>(nbins), 3.09));
}

TEST_CASE("pi tagging follows the emitted pi fraction") {
  PulseTrain t;
  t.n_pulses = 2000;
  const LevelScheme scheme{0.0, 0.0, 0.05};
  const auto photons = sample_trajectory(AtomModel{}, t, scheme, 8, 0);
  const double n = static_cast<double>(photons.size());
  const double pis = static_cast<double>(
      std::count_if(photons.begin(), photons.end(), [](const PhotonRecord& p) { return p.polarization == Polarization::pi; }));
  CHECK(std::abs(pis / n - 0.05) < 3.0 * std::sqrt(0.05 * 0.95 / n));
}

TEST_CASE("trajectories are reproducible and ordered") {
  PulseTrain t;
  t.n_pulses = 300;
  const auto a = sample_trajectory(AtomModel{}, t, LevelScheme{}, 21, 4);
  const auto b = sample_trajectory(AtomModel{}, t, LevelScheme{}, 21, 4);
  const auto c = sample_trajectory(AtomModel{}, t, LevelScheme{}, 21, 5);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].emission_time == b[i].emission_time);
    CHECK(a[i].polarization == b[i].polarization);
  }
  CHECK((a.size() != c.size() || a.front().emission_time != c.front().emission_time));
  for (std::size_t i = 1; i < a.size(); ++i) CHECK(a[i].emission_time > a[i - 1].emission_time);
  for (const PhotonRecord& p : a) {
    const auto k = static_cast<std::uint64_t>(p.emission_time / t.period);
    CHECK(p.pulse_index == std::min<std::uint64_t>(k, t.n_pulses - 1));
  }
}

TEST_CASE("trajectory window offsets and truncates") {
  PulseTrain t;
  t.n_pulses = 100;
  Engine r1 = make_engine(2, Stream::trajectory);
  const auto full = sample_trajectory(AtomModel{}, t, LevelScheme::closed(), r1, {1e-3, 1e-3 + 10e-6});
  REQUIRE(!full.empty());
  for (const PhotonRecord& p : full) {
    CHECK(p.emission_time >= 1e-3);
    CHECK(p.emission_time < 1e-3 + 10e-6);
  }
  CHECK(full.back().pulse_index < 50);
}

TEST_CASE("photon stream round trip") {
  PulseTrain t;
  t.n_pulses = 20;
  const auto photons = sample_trajectory(AtomModel{}, t, LevelScheme{0.0, 0.0, 0.5}, 4, 0);
  std::stringstream ss;
  write_photon_header(ss);
  write_photon_records(ss, 17, photons);
  const auto back = read_photon_stream(ss);
  REQUIRE(back.size() == photons.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].trajectory_id == 17);
    CHECK(back[i].pulse_index == photons[i].pulse_index);
    CHECK(back[i].polarization == photons[i].polarization);
    CHECK(back[i].emission_time_ps == seconds_to_ps(photons[i].emission_time));
  }
  std::stringstream bad("1,2,3.000,circular\n");
  CHECK_THROWS_AS(read_photon_stream(bad), std::invalid_argument);
  std::stringstream short_line("1,2\n");
  CHECK_THROWS_AS(read_photon_stream(short_line), std::invalid_argument);
}
