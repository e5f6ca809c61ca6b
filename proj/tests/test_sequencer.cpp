#include "oracles.hpp"

#include "photonsim/sequencer.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

using namespace photonsim;

namespace {

// Pipeline without fluorescence; runs fast and keeps the survival draws.
SourcePipeline dark_pipeline() {
  SourcePipeline p;
  p.train.peak_rabi = 0.0;
  return p;
}

std::size_t count_origin(const DetectionStreams& s, Origin o) {
  std::size_t n = 0;
  for (const auto* v : {&s.a, &s.b})
    for (const DetectionEvent& e : *v) n += e.origin == o;
  return n;
}

}  // namespace

TEST_CASE("sequence timing") {
  const SequenceConfig c;
  CHECK(c.cycle_period() == doctest::Approx(1e-3));
  CHECK(c.duration() == doctest::Approx(0.1));
  CHECK(pulses_per_window(c, PulseTrain{}) == 575);
  const auto gates = excitation_gates(c);
  const auto cool = cooling_windows(c);
  REQUIRE(gates.size() == 100);
  REQUIRE(cool.size() == 100);
  for (std::size_t k = 0; k < gates.size(); ++k) {
    CHECK(gates[k].begin == static_cast<Picoseconds>(k) * 1000000000);
    CHECK(gates[k].duration() == 115000000);
    CHECK(cool[k].begin == gates[k].end);
    CHECK(cool[k].duration() == 885000000);
  }
  SequenceConfig bad;
  bad.capture_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("blockade loading never holds two atoms") {
  const LoadingRecord r = simulate_loading(3.0, 20000.0, 1);
  CHECK(r.max_occupancy() == 1);
  for (const OccupancyStep& s : r.occupancy) CHECK((s.occupancy == 0 || s.occupancy == 1));
  // Empty and occupied dwells are both exponential with the capture rate.
  CHECK(r.mean_occupancy() == doctest::Approx(0.5).epsilon(0.03));
  const double n = static_cast<double>(r.load_waits.size());
  const double mean = std::accumulate(r.load_waits.begin(), r.load_waits.end(), 0.0) / n;
  CHECK(std::abs(mean - 1.0 / 3.0) < 3.0 * (1.0 / 3.0) / std::sqrt(n));
  CHECK(r.arrivals.size() >= r.load_waits.size());
}

TEST_CASE("extra single-atom loss lowers the occupancy") {
  const double R = 3.0, L = 3.0;
  const LoadingRecord r = simulate_loading(R, 20000.0, 2, L);
  CHECK(r.max_occupancy() == 1);
  // Dwell 1/R empty, 1/(R + L) occupied.
  const double expected = (1.0 / (R + L)) / (1.0 / R + 1.0 / (R + L));
  CHECK(r.mean_occupancy() == doctest::Approx(expected).epsilon(0.04));
  CHECK_THROWS_AS(simulate_loading(0.0, 1.0, 1), std::invalid_argument);
}

TEST_CASE("sequence starts leave an exponential wait between sequences") {
  const SequenceConfig c;
  const std::size_t n = 20000;
  const auto starts = sequence_starts(c, n, 3, 1175);
  double sum = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    CHECK(starts[i] % 1175 == 0);
    const double wait = ps_to_seconds(starts[i] - starts[i - 1]) - c.duration();
    CHECK(wait >= 0.0);
    sum += wait;
  }
  const double mean = sum / static_cast<double>(n - 1);
  CHECK(std::abs(mean - 1.0 / 3.0) < 3.0 * (1.0 / 3.0) / std::sqrt(n - 1.0));
}

TEST_CASE("survival times are exponential with the trap lifetime") {
  SequenceConfig c;
  c.cycles_per_sequence = 1;  // survival is drawn past the sequence end too
  std::vector<double> t;
  for (std::uint64_t i = 0; i < 10000; ++i) t.push_back(run_sequence(c, dark_pipeline(), 4, i).survival_time);
  CHECK(ks_exponential(t, c.trap_lifetime).p_value > 0.01);
  CHECK(ks_exponential(t, 2.0 * c.trap_lifetime).p_value < 1e-6);
}

TEST_CASE("kolmogorov-smirnov test") {
  Engine rng = make_engine(5, Stream::test);
  std::exponential_distribution<double> e(1.0);
  std::vector<double> s(5000);
  for (double& x : s) x = e(rng);
  const KsResult r = ks_exponential(s, 1.0);
  CHECK(r.p_value > 0.01);
  CHECK(r.statistic < 0.03);
  std::vector<double> u(5000);
  for (double& x : u) x = uniform01(rng);
  CHECK(ks_exponential(u, 1.0).p_value < 1e-6);
  CHECK_THROWS_AS(ks_exponential({}, 1.0), std::invalid_argument);
}

TEST_CASE("fluorescence stops once at the survival time") {
  SequenceConfig c;
  SourcePipeline p;
  p.detection_efficiency = 0.05;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const SequenceRecord r = run_sequence(c, p, 6, i, 0);
    const Picoseconds loss = seconds_to_ps(r.survival_time);
    Picoseconds last = -1;
    for (const auto* v : {&r.gated.a, &r.gated.b})
      for (const DetectionEvent& e : *v)
        if (e.origin == Origin::fluorescence) {
          CHECK(e.timestamp < loss);
          last = std::max(last, e.timestamp);
        }
    // Bright until the loss: the last window before it still fluoresces.
    if (r.survival_time > 2e-3 && r.survival_time < c.duration()) {
      const auto k = static_cast<Picoseconds>(r.survival_time / c.cycle_period());
      CHECK(last >= (k - 1) * 1000000000);
    }
    for (const auto* v : {&r.cooling.a, &r.cooling.b})
      for (const DetectionEvent& e : *v)
        if (e.origin == Origin::molasses) CHECK(e.timestamp < loss);
  }
}

TEST_CASE("gated output holds no cooling-window events") {
  SequenceConfig c;
  c.trap_lifetime = std::numeric_limits<double>::infinity();
  SourcePipeline p;
  p.detection_efficiency = 0.05;
  const Picoseconds start = 1175 * 123456;
  const SequenceRecord r = run_sequence(c, p, 7, 0, start);
  const auto gates = excitation_gates(c);
  auto in_gate = [&](Picoseconds t) {
    return std::any_of(gates.begin(), gates.end(), [&](const Window& w) { return w.contains(t - start); });
  };
  for (const auto* v : {&r.gated.a, &r.gated.b})
    for (const DetectionEvent& e : *v) CHECK(in_gate(e.timestamp));
  for (const auto* v : {&r.cooling.a, &r.cooling.b})
    for (const DetectionEvent& e : *v) {
      CHECK(!in_gate(e.timestamp));
      CHECK(e.origin != Origin::fluorescence);
      CHECK(e.origin != Origin::stray);
    }
  CHECK(count_origin(r.gated, Origin::fluorescence) > 0);
  CHECK(count_origin(r.cooling, Origin::molasses) > 0);
}

TEST_CASE("without trap loss all windows share one rate") {
  SequenceConfig c;
  c.trap_lifetime = std::numeric_limits<double>::infinity();
  SourcePipeline p;
  p.detection_efficiency = 0.05;
  const auto gates = excitation_gates(c);
  std::vector<double> per_window(gates.size(), 0.0);
  for (std::uint64_t i = 0; i < 40; ++i) {
    const SequenceRecord r = run_sequence(c, p, 8, i);
    CHECK(r.survival_time == std::numeric_limits<double>::infinity());
    for (const auto* v : {&r.gated.a, &r.gated.b})
      for (const DetectionEvent& e : *v) per_window[static_cast<std::size_t>(e.timestamp / 1000000000)] += 1.0;
  }
  const double mean = std::accumulate(per_window.begin(), per_window.end(), 0.0) / gates.size();
  double chi2 = 0.0;
  for (const double n : per_window) chi2 += (n - mean) * (n - mean) / mean;
  CHECK(chi2 < oracle::chi2_quantile(gates.size() - 1.0, 3.09));
}

TEST_CASE("identical sequences average to themselves") {
  SourcePipeline p;
  p.detection_efficiency = 0.05;
  const SequenceRecord r = run_sequence(SequenceConfig{}, p, 9, 0);
  const std::vector<SequenceRecord> one{r};
  const std::vector<SequenceRecord> three{r, r, r};
  const FluorescenceTrace a = average_trace(one, 5e-6);
  const FluorescenceTrace b = average_trace(three, 5e-6);
  CHECK(b.n_sequences == 3);
  CHECK(a.mean_rate_hz == b.mean_rate_hz);
  for (const double x : a.mean_rate_hz) CHECK(x >= 0.0);
  SequenceRecord other = r;
  other.duration = 0.05;
  const std::vector<SequenceRecord> mixed{r, other};
  CHECK_THROWS_AS(average_trace(mixed, 5e-6), std::invalid_argument);
}

TEST_CASE("envelope fit recovers a synthetic decay") {
  Engine rng = make_engine(10, Stream::test);
  std::vector<WindowRate> pts;
  const double tau = 34e-3, amp = 15000.0, off = 200.0, exposure = 115e-6 * 20000;
  for (int k = 0; k < 100; ++k) {
    const double t = (k + 0.0575) * 1e-3;
    const double mean = (amp * std::exp(-t / tau) + off) * exposure;
    std::poisson_distribution<long> draw(mean);
    const double counts = static_cast<double>(draw(rng));
    pts.push_back({t, counts / exposure, std::sqrt(counts) / exposure});
  }
  const EnvelopeFit f = fit_envelope(pts);
  CHECK(std::abs(f.lifetime - tau) < 3.0 * f.lifetime_sigma);
  CHECK(f.lifetime_sigma < 1e-3);
  CHECK(f.amplitude == doctest::Approx(amp).epsilon(0.02));
  CHECK(f.chi2 < oracle::chi2_quantile(97.0, 3.09));
  CHECK_THROWS_AS(fit_envelope(std::vector<WindowRate>(pts.begin(), pts.begin() + 2)), std::invalid_argument);
}

TEST_CASE("closed-form rates") {
  const SourcePipeline p;
  const double noiseless = [] {
    PulseTrain t;
    t.intensity_noise_rel_sigma = 0.0;
    return mean_photons_per_pulse(AtomModel{}, t);
  }();
  const PulseTrain t0 = [] {
    PulseTrain t;
    t.intensity_noise_rel_sigma = 0.0;
    return t;
  }();
  CHECK(noiseless == doctest::Approx(photon_number_distribution(AtomModel{}, t0.peak_rabi, t0.pulse_duration).mean())
                         .epsilon(1e-5));
  // Noise only lowers the mean at a pi pulse.
  CHECK(mean_photons_per_pulse(p.atom, p.train) < noiseless);

  const double peak = expected_peak_rate(p);
  CHECK(peak == doctest::Approx(2.9e4).epsilon(0.2 / 2.9));
  const double occ = cycling_occupancy(p.levels, p.train);
  const double manual = p.train.repetition_rate() * mean_photons_per_pulse(p.atom, p.train) * occ *
                            p.detection_efficiency + p.detector.dark_count_rate + p.detector.stray_light_rate;
  CHECK(peak == doctest::Approx(manual).epsilon(1e-12));

  const SequenceConfig c;
  const double avg = expected_sequence_average_rate(c, p);
  const double tau = c.trap_lifetime, T = c.duration();
  const double fluo = peak - p.detector.dark_count_rate - p.detector.stray_light_rate;
  const double approx = fluo * tau / T * (1.0 - std::exp(-T / tau)) + p.detector.dark_count_rate +
                        p.detector.stray_light_rate;
  CHECK(avg == doctest::Approx(approx).epsilon(0.03));
  CHECK(avg == doctest::Approx(9.6e3).epsilon(1.5 / 9.6));
}

TEST_CASE("hbt run does not depend on the thread count") {
  const SequenceConfig c;
  const SourcePipeline p;
  HbtOptions o;
  o.n_sequences = 30;
  o.seed = 11;
  o.threads = 1;
  const HbtRun one = run_hbt(c, p, o);
  o.threads = 3;
  const HbtRun three = run_hbt(c, p, o);
  CHECK(one.raw.counts == three.raw.counts);
  CHECK(one.trace.counts == three.trace.counts);
  CHECK(one.survival_times == three.survival_times);
  CHECK(one.gated_counts == three.gated_counts);
  CHECK(one.raw.metadata.n_starts == three.raw.metadata.n_starts);
  CHECK(one.rebinned.bin_width_ns() == doctest::Approx(4.7));
  CHECK(one.trace.n_sequences == 30);
}
