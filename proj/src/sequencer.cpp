#include "photonsim/sequencer.hpp"

#include "photonsim/errors.hpp"
#include "photonsim/optics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

namespace photonsim {

void SequenceConfig::validate() const {
  require(excitation_window > 0.0 && cooling_window > 0.0, "SequenceConfig: windows must be positive");
  require(cycles_per_sequence > 0, "SequenceConfig: need at least one cycle");
  require(trap_lifetime > 0.0, "SequenceConfig: trap lifetime must be positive");
  require(capture_rate > 0.0 && std::isfinite(capture_rate), "SequenceConfig: capture rate must be positive");
  require(molasses_background_rate >= 0.0, "SequenceConfig: molasses rate must be >= 0");
}

void SourcePipeline::validate() const {
  atom.validate();
  train.validate();
  levels.validate();
  detector.validate();
  require(detection_efficiency >= 0.0 && detection_efficiency <= 1.0,
          "SourcePipeline: detection efficiency outside [0,1]");
}

std::uint64_t pulses_per_window(const SequenceConfig& config, const PulseTrain& train) {
  const auto n = static_cast<std::uint64_t>(std::floor(config.excitation_window / train.period + 1e-9));
  require(n >= 1, "excitation window shorter than one pulse period");
  return n;
}

std::vector<Window> excitation_gates(const SequenceConfig& config) {
  std::vector<Window> gates;
  const Picoseconds period = seconds_to_ps(config.cycle_period());
  const Picoseconds width = seconds_to_ps(config.excitation_window);
  for (std::uint32_t c = 0; c < config.cycles_per_sequence; ++c)
    gates.push_back({c * period, c * period + width});
  return gates;
}

std::vector<Window> cooling_windows(const SequenceConfig& config) {
  std::vector<Window> out;
  const Picoseconds period = seconds_to_ps(config.cycle_period());
  const Picoseconds width = seconds_to_ps(config.excitation_window);
  for (std::uint32_t c = 0; c < config.cycles_per_sequence; ++c)
    out.push_back({c * period + width, (c + 1) * period});
  return out;
}

namespace {

void keep_first_per_pulse(std::vector<PhotonRecord>& photons) {
  std::size_t kept = 0;
  for (std::size_t i = 0; i < photons.size(); ++i)
    if (kept == 0 || photons[kept - 1].pulse_index != photons[i].pulse_index) photons[kept++] = photons[i];
  photons.resize(kept);
}

double exponential(Engine& rng, double rate) { return -std::log(uniform_open0(rng)) / rate; }

}  // namespace

SequenceRecord run_sequence(const SequenceConfig& config, const SourcePipeline& pipeline,
                            std::uint64_t seed, std::uint64_t index, Picoseconds start,
                            bool keep_photons) {
  config.validate();
  pipeline.validate();
  const Picoseconds res = pipeline.detector.timestamp_resolution;
  require(start % res == 0, "run_sequence: start is off the tick grid");

  SequenceRecord r;
  r.index = index;
  r.start = start;
  r.duration = config.duration();
  Engine seq_rng = make_engine(seed, Stream::sequence, index);
  r.survival_time = std::isinf(config.trap_lifetime)
                        ? std::numeric_limits<double>::infinity()
                        : exponential(seq_rng, 1.0 / config.trap_lifetime);

  PulseTrain train = pipeline.train;
  train.n_pulses = pulses_per_window(config, train);
  Engine traj = make_engine(seed, Stream::trajectory, index);
  std::vector<PhotonRecord> photons;
  for (std::uint32_t c = 0; c < config.cycles_per_sequence; ++c) {
    const double t0 = c * config.cycle_period();
    if (t0 >= r.survival_time) break;
    std::vector<PhotonRecord> w =
        sample_trajectory(pipeline.atom, train, pipeline.levels, traj, {t0, r.survival_time});
    if (pipeline.single_photon) keep_first_per_pulse(w);
    photons.insert(photons.end(), w.begin(), w.end());
  }
  const std::vector<Window> gates = excitation_gates(config);
  Engine det = make_engine(seed, Stream::detection, index);
  r.gated = detect(photons, pipeline.detection_efficiency, pipeline.detector, gates, det, start);
  if (keep_photons) r.photons = std::move(photons);

  // Cooling windows: dark counts throughout, molasses light while trapped.
  const double trapped_until = std::min(r.survival_time, r.duration);
  for (const Window& w : cooling_windows(config)) {
    const double begin = ps_to_seconds(w.begin), end = ps_to_seconds(w.end);
    const double lit = std::clamp(trapped_until, begin, end) - begin;
    for (const Detector d : {Detector::A, Detector::B}) {
      auto& stream = d == Detector::A ? r.cooling.a : r.cooling.b;
      auto draw = [&](double mean, double from, double span, Origin origin) {
        if (mean <= 0.0) return;
        const long n = std::poisson_distribution<long>(mean)(seq_rng);
        for (long i = 0; i < n; ++i)
          stream.push_back({d, quantize(from + uniform01(seq_rng) * span, res) + start, origin});
      };
      draw(0.5 * pipeline.detector.dark_count_rate * (end - begin), begin, end - begin, Origin::dark);
      draw(0.5 * config.molasses_background_rate * lit, begin, lit, Origin::molasses);
    }
  }
  for (auto* s : {&r.cooling.a, &r.cooling.b})
    std::stable_sort(s->begin(), s->end(),
                     [](const DetectionEvent& x, const DetectionEvent& y) { return x.timestamp < y.timestamp; });
  return r;
}

std::vector<Picoseconds> sequence_starts(const SequenceConfig& config, std::size_t n,
                                         std::uint64_t seed, Picoseconds resolution) {
  config.validate();
  require(resolution > 0, "sequence_starts: resolution must be positive");
  Engine rng = make_engine(seed, Stream::loading);
  std::vector<Picoseconds> starts(n);
  Picoseconds t = 0;
  for (std::size_t i = 0; i < n; ++i) {
    starts[i] = t;
    const Picoseconds next = t + seconds_to_ps(config.duration() + exponential(rng, config.capture_rate));
    t = (next + resolution - 1) / resolution * resolution;
  }
  return starts;
}

// ---------------------------------------------------------------------------

double LoadingRecord::mean_occupancy() const {
  if (horizon <= 0.0) return 0.0;
  double area = 0.0;
  for (std::size_t i = 0; i < occupancy.size(); ++i) {
    const double until = i + 1 < occupancy.size() ? occupancy[i + 1].time : horizon;
    area += occupancy[i].occupancy * (until - occupancy[i].time);
  }
  return area / horizon;
}

int LoadingRecord::max_occupancy() const {
  int m = 0;
  for (const OccupancyStep& s : occupancy) m = std::max(m, s.occupancy);
  return m;
}

LoadingRecord simulate_loading(double capture_rate, double horizon, std::uint64_t seed, double loss_rate) {
  require(capture_rate > 0.0, "simulate_loading: capture rate must be positive");
  require(horizon > 0.0, "simulate_loading: horizon must be positive");
  require(loss_rate >= 0.0, "simulate_loading: loss rate must be >= 0");
  Engine rng = make_engine(seed, Stream::loading, 1);
  LoadingRecord rec;
  rec.horizon = horizon;
  rec.occupancy.push_back({0.0, 0});
  double t = 0.0;
  int n = 0;
  for (;;) {
    const double total = n == 0 ? capture_rate : capture_rate + loss_rate;
    const double dt = exponential(rng, total);
    if (t + dt >= horizon) break;
    t += dt;
    const bool arrival = n == 0 || uniform01(rng) * total < capture_rate;
    if (arrival) rec.arrivals.push_back(t);
    if (n == 0) {
      rec.load_waits.push_back(t - rec.occupancy.back().time);
      n = 1;
    } else {
      n = 0;  // ejected by a second atom, or lost
    }
    rec.occupancy.push_back({t, n});
  }
  return rec;
}

// ---------------------------------------------------------------------------

TraceAccumulator::TraceAccumulator(double duration, double bin_width, Detector detector)
    : duration_(duration), bin_(seconds_to_ps(bin_width)), detector_(detector) {
  require(duration > 0.0, "TraceAccumulator: duration must be positive");
  require(bin_ > 0, "TraceAccumulator: bin width must be positive");
  const Picoseconds total = seconds_to_ps(duration);
  counts_.assign(static_cast<std::size_t>((total + bin_ - 1) / bin_), 0);
}

void TraceAccumulator::add_stream(std::span<const DetectionEvent> events, Picoseconds start) {
  for (const DetectionEvent& e : events) {
    const Picoseconds local = e.timestamp - start;
    if (local < 0) continue;
    const auto i = static_cast<std::size_t>(local / bin_);
    if (i < counts_.size()) ++counts_[i];
  }
}

void TraceAccumulator::add(const SequenceRecord& record) {
  require(std::abs(record.duration - duration_) <= 1e-12 * duration_,
          "average_trace: inconsistent sequence lengths");
  const auto& gated = detector_ == Detector::A ? record.gated.a : record.gated.b;
  const auto& cooling = detector_ == Detector::A ? record.cooling.a : record.cooling.b;
  add_stream(gated, record.start);
  add_stream(cooling, record.start);
  ++n_;
}

void TraceAccumulator::merge(const TraceAccumulator& other) {
  require(other.counts_.size() == counts_.size() && other.bin_ == bin_ && other.detector_ == detector_,
          "TraceAccumulator: incompatible traces");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  n_ += other.n_;
}

FluorescenceTrace TraceAccumulator::result() const {
  FluorescenceTrace t;
  t.bin_width_us = ps_to_seconds(bin_) * 1e6;
  t.n_sequences = n_;
  t.counts = counts_;
  const Picoseconds total = seconds_to_ps(duration_);
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    const Picoseconds lo = static_cast<Picoseconds>(i) * bin_;
    const double width = ps_to_seconds(std::min(lo + bin_, total) - lo);
    t.time_us.push_back(ps_to_seconds(lo) * 1e6);
    t.mean_rate_hz.push_back(n_ > 0 ? static_cast<double>(counts_[i]) / (static_cast<double>(n_) * width) : 0.0);
  }
  return t;
}

FluorescenceTrace average_trace(std::span<const SequenceRecord> sequences, double bin_width, Detector detector) {
  require(!sequences.empty(), "average_trace: no sequences");
  TraceAccumulator acc(sequences.front().duration, bin_width, detector);
  for (const SequenceRecord& s : sequences) acc.add(s);
  return acc.result();
}

void write_trace_csv(std::ostream& os, const FluorescenceTrace& trace) {
  os << "time_us,mean_rate_hz,n_sequences\n";
  char buf[96];
  for (std::size_t i = 0; i < trace.time_us.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.3f,%.6g,", trace.time_us[i], trace.mean_rate_hz[i]);
    os << buf << trace.n_sequences << '\n';
  }
}

std::vector<WindowRate> excitation_window_rates(const FluorescenceTrace& trace, const SequenceConfig& config) {
  require(trace.n_sequences > 0, "excitation_window_rates: empty trace");
  const double bin = trace.bin_width_us * 1e-6;
  std::vector<WindowRate> out;
  for (std::uint32_t c = 0; c < config.cycles_per_sequence; ++c) {
    const double lo = c * config.cycle_period(), hi = lo + config.excitation_window;
    std::uint64_t counts = 0;
    double time = 0.0;
    for (std::size_t i = 0; i < trace.time_us.size(); ++i) {
      const double b0 = trace.time_us[i] * 1e-6;
      if (b0 >= lo - 1e-12 && b0 + bin <= hi + 1e-12) {
        counts += trace.counts[i];
        time += bin;
      }
    }
    if (time <= 0.0) continue;
    const double exposure = time * static_cast<double>(trace.n_sequences);
    out.push_back({lo + 0.5 * config.excitation_window, counts / exposure,
                   std::sqrt(std::max<double>(counts, 1.0)) / exposure});
  }
  return out;
}

namespace {

struct LinearPart {
  double amplitude, offset, chi2;
};

LinearPart solve_linear(std::span<const WindowRate> pts, double lifetime) {
  Eigen::Matrix2d normal = Eigen::Matrix2d::Zero();
  Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
  for (const WindowRate& p : pts) {
    const double w = 1.0 / (p.sigma * p.sigma);
    const Eigen::Vector2d g(std::exp(-p.time / lifetime), 1.0);
    normal += w * g * g.transpose();
    rhs += w * p.rate * g;
  }
  const Eigen::Vector2d beta = normal.ldlt().solve(rhs);
  double chi2 = 0.0;
  for (const WindowRate& p : pts) {
    const double r = (p.rate - beta(0) * std::exp(-p.time / lifetime) - beta(1)) / p.sigma;
    chi2 += r * r;
  }
  return {beta(0), beta(1), chi2};
}

}  // namespace

EnvelopeFit fit_envelope(std::span<const WindowRate> points) {
  require(points.size() >= 3, "fit_envelope: need at least three points");
  for (const WindowRate& p : points) require(p.sigma > 0.0, "fit_envelope: uncertainties must be positive");
  double t_min = points.front().time, t_max = t_min;
  for (const WindowRate& p : points) {
    t_min = std::min(t_min, p.time);
    t_max = std::max(t_max, p.time);
  }
  const double span = t_max - t_min;
  require(span > 0.0, "fit_envelope: all points at the same time");

  // Golden-section search on log(lifetime); amplitude and offset are linear.
  auto chi2 = [&](double log_tau) { return solve_linear(points, std::exp(log_tau)).chi2; };
  double a = std::log(span * 1e-3), b = std::log(span * 1e3);
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - g * (b - a), x2 = a + g * (b - a);
  double f1 = chi2(x1), f2 = chi2(x2);
  for (int it = 0; it < 200 && b - a > 1e-10; ++it) {
    if (f1 < f2) {
      b = x2; x2 = x1; f2 = f1;
      x1 = b - g * (b - a); f1 = chi2(x1);
    } else {
      a = x1; x1 = x2; f1 = f2;
      x2 = a + g * (b - a); f2 = chi2(x2);
    }
  }
  const double tau = std::exp(0.5 * (a + b));
  const LinearPart best = solve_linear(points, tau);
  if (!std::isfinite(best.chi2)) throw NumericError("fit_envelope: fit diverged");

  // Curvature of the profile chi^2 gives the lifetime uncertainty.
  const double h = 1e-3 * tau;
  const double c2 = (solve_linear(points, tau + h).chi2 - 2.0 * best.chi2 + solve_linear(points, tau - h).chi2) / (h * h);
  const double dof = static_cast<double>(points.size()) - 3.0;
  const double scale = dof > 0.0 ? std::max(1.0, best.chi2 / dof) : 1.0;
  EnvelopeFit fit;
  fit.amplitude = best.amplitude;
  fit.offset = best.offset;
  fit.lifetime = tau;
  fit.lifetime_sigma = c2 > 0.0 ? std::sqrt(2.0 / c2 * scale) : std::numeric_limits<double>::infinity();
  fit.chi2 = best.chi2;
  return fit;
}

KsResult ks_exponential(std::vector<double> samples, double mean) {
  require(!samples.empty(), "ks_exponential: no samples");
  require(mean > 0.0, "ks_exponential: mean must be positive");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = 1.0 - std::exp(-std::max(0.0, samples[i]) / mean);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    p += (k % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return {d, std::clamp(p, 0.0, 1.0)};
}

// ---------------------------------------------------------------------------

double mean_photons_per_pulse(const AtomModel& atom, const PulseTrain& train) {
  atom.validate();
  train.validate();
  const double sigma = train.intensity_noise_rel_sigma;
  auto photons = [&](double f) {
    return pulse_response(atom, train.peak_rabi * std::sqrt(f), train.pulse_duration).emitted_photons();
  };
  if (sigma <= 0.0) return photons(1.0);
  // Average over the truncated Gaussian intensity factor.
  const GaussRule rule = gauss_legendre(48, std::max(0.0, 1.0 - 8.0 * sigma), 1.0 + 8.0 * sigma);
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < rule.nodes.size(); ++i) {
    const double z = (rule.nodes(i) - 1.0) / sigma;
    const double w = rule.weights(i) * std::exp(-0.5 * z * z);
    num += w * photons(rule.nodes(i));
    den += w;
  }
  return num / den;
}

double expected_peak_rate(const SourcePipeline& pipeline) {
  pipeline.validate();
  const double photons = mean_photons_per_pulse(pipeline.atom, pipeline.train);
  const double occupancy = cycling_occupancy(pipeline.levels, pipeline.train);
  return pipeline.train.repetition_rate() * photons * occupancy * pipeline.detection_efficiency +
         pipeline.detector.dark_count_rate + pipeline.detector.stray_light_rate;
}

double expected_sequence_average_rate(const SequenceConfig& config, const SourcePipeline& pipeline) {
  config.validate();
  const double noise = pipeline.detector.dark_count_rate + pipeline.detector.stray_light_rate;
  const double signal = expected_peak_rate(pipeline) - noise;
  double survival = 0.0;
  const double tau = config.trap_lifetime, w = config.excitation_window;
  for (std::uint32_t c = 0; c < config.cycles_per_sequence; ++c) {
    const double t0 = c * config.cycle_period();
    survival += std::isinf(tau) ? 1.0 : tau / w * (std::exp(-t0 / tau) - std::exp(-(t0 + w) / tau));
  }
  return signal * survival / config.cycles_per_sequence + noise;
}

// ---------------------------------------------------------------------------

HbtRun run_hbt(const SequenceConfig& config, const SourcePipeline& pipeline, const HbtOptions& options) {
  config.validate();
  pipeline.validate();
  require(options.n_sequences >= 1, "run_hbt: need at least one sequence");
  require(options.rebin_factor >= 1, "run_hbt: rebin factor must be >= 1");
  const Picoseconds res = pipeline.detector.timestamp_resolution;
  const std::vector<Picoseconds> starts = sequence_starts(config, options.n_sequences, options.seed, res);
  const unsigned n_threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(options.n_sequences)));

  struct Partial {
    Histogram hist;
    TraceAccumulator trace;
    std::uint64_t gated = 0;
  };
  std::vector<Partial> partials;
  for (unsigned t = 0; t < n_threads; ++t)
    partials.push_back({start_stop_histogram({}, {}, res, options.max_delay, options.stop_delay),
                        TraceAccumulator(config.duration(), options.trace_bin), 0});
  HbtRun run;
  run.survival_times.assign(options.n_sequences, 0.0);
  if (options.keep_events) run.sequences.resize(options.n_sequences);
  run.photons.resize(std::min(options.photon_sequences, options.n_sequences));

  auto worker = [&](unsigned t) {
    Partial& p = partials[t];
    for (std::size_t i = t; i < options.n_sequences; i += n_threads) {
      const bool photons = i < run.photons.size();
      SequenceRecord r = run_sequence(config, pipeline, options.seed, i, starts[i], photons);
      if (photons) run.photons[i] = std::move(r.photons);
      p.hist += start_stop_histogram(r.gated.a, r.gated.b, res, options.max_delay, options.stop_delay);
      p.trace.add(r);
      p.gated += r.gated.size();
      run.survival_times[i] = r.survival_time;
      if (options.keep_events) run.sequences[i] = std::move(r);
    }
  };
  if (n_threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker, t);
    for (auto& th : pool) th.join();
  }

  run.raw = std::move(partials[0].hist);
  TraceAccumulator trace = std::move(partials[0].trace);
  run.gated_counts = partials[0].gated;
  for (unsigned t = 1; t < n_threads; ++t) {
    run.raw += partials[t].hist;
    trace.merge(partials[t].trace);
    run.gated_counts += partials[t].gated;
  }
  run.excitation_time = static_cast<double>(options.n_sequences) * config.cycles_per_sequence * config.excitation_window;
  run.raw.metadata.acquisition_time = run.excitation_time;
  std::ostringstream gates;
  gates << config.cycles_per_sequence << " x " << config.excitation_window * 1e6 << " us every "
        << config.cycle_period() * 1e6 << " us";
  run.raw.metadata.gates = gates.str();
  run.rebinned = rebin(run.raw, options.rebin_factor);
  run.trace = trace.result();
  return run;
}

}  // namespace photonsim
