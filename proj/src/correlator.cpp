#include "photonsim/correlator.hpp"

#include "photonsim/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

namespace photonsim {

std::size_t Histogram::bin_of(Picoseconds delay) const {
  const Picoseconds rel = delay - origin_delay;
  if (rel < 0) return size();
  const auto i = static_cast<std::size_t>(rel / bin_width);
  return i < size() ? i : size();
}

std::uint64_t Histogram::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

Histogram& Histogram::operator+=(const Histogram& other) {
  require(bin_width == other.bin_width && origin_delay == other.origin_delay && size() == other.size(),
          "Histogram: cannot merge histograms with different binning");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  metadata.n_starts += other.metadata.n_starts;
  metadata.acquisition_time += other.metadata.acquisition_time;
  metadata.dropped_counts += other.metadata.dropped_counts;
  return *this;
}

Histogram start_stop_histogram(std::span<const DetectionEvent> starts,
                               std::span<const DetectionEvent> stops, Picoseconds bin_width,
                               Picoseconds max_delay, Picoseconds stop_delay) {
  require(bin_width > 0, "start_stop_histogram: bin width must be positive");
  require(stop_delay >= 0, "start_stop_histogram: stop delay must be >= 0");
  require(max_delay > -stop_delay, "start_stop_histogram: empty delay range");
  auto sorted = [](std::span<const DetectionEvent> s) {
    return std::is_sorted(s.begin(), s.end(), [](const DetectionEvent& x, const DetectionEvent& y) {
      return x.timestamp < y.timestamp;
    });
  };
  require(sorted(starts) && sorted(stops), "start_stop_histogram: input streams must be time-sorted");

  Histogram h;
  h.bin_width = bin_width;
  h.origin_delay = -stop_delay;
  const Picoseconds span = max_delay + stop_delay;
  h.counts.assign(static_cast<std::size_t>((span + bin_width - 1) / bin_width), 0);
  h.metadata.n_starts = starts.size();

  std::size_t j = 0;
  for (const DetectionEvent& start : starts) {
    while (j < stops.size() && stops[j].timestamp + stop_delay < start.timestamp) ++j;
    if (j == stops.size()) break;
    const Picoseconds delay = stops[j].timestamp - start.timestamp;
    if (delay >= max_delay) continue;
    ++h.counts[static_cast<std::size_t>((delay + stop_delay) / bin_width)];
  }
  return h;
}

Histogram rebin(const Histogram& h, std::size_t factor) {
  require(factor >= 1, "rebin: factor must be >= 1");
  Histogram out;
  out.bin_width = h.bin_width * static_cast<Picoseconds>(factor);
  out.origin_delay = h.origin_delay;
  out.metadata = h.metadata;
  const std::size_t full = h.size() / factor;
  out.counts.assign(full, 0);
  for (std::size_t i = 0; i < full * factor; ++i) out.counts[i / factor] += h.counts[i];
  for (std::size_t i = full * factor; i < h.size(); ++i) out.metadata.dropped_counts += h.counts[i];
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Unit-area two-sided exponential exp(-|x - mu| / w) / (2 w).
double laplace_cdf(double x, double mu, double w) {
  const double z = (x - mu) / w;
  return z < 0.0 ? 0.5 * std::exp(z) : 1.0 - 0.5 * std::exp(-z);
}

struct Bins {
  Eigen::VectorXd lo, hi, center, counts;
  Eigen::Index size() const { return counts.size(); }
};

struct PeakSet {
  std::vector<double> centers;  // in-range peaks
  std::vector<double> outside;  // partially visible neighbours, modeled only
  std::size_t central = 0;
};

// Expected counts in every bin for a unit-area peak at mu.
Eigen::VectorXd peak_template(const Bins& b, double mu, double w) {
  Eigen::VectorXd t(b.size());
  for (Eigen::Index i = 0; i < b.size(); ++i) t(i) = laplace_cdf(b.hi(i), mu, w) - laplace_cdf(b.lo(i), mu, w);
  return t;
}

struct WidthFit {
  double width = 0.0;
  double sigma = 0.0;
  bool ok = false;
};

// Weighted least squares of log(counts - rest) against delay on the decaying
// side of one peak; `rest` holds the expected background and neighbour
// tails. Weights and the count threshold use the fitted curve rather than
// the observed counts, which keeps upward fluctuations from flattening the
// slope.
WidthFit fit_decay(const Bins& b, const Eigen::VectorXd& rest, double center, double halfwindow,
                   double min_counts) {
  Eigen::Index peak_bin = -1;
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    if (std::abs(b.center(i) - center) > halfwindow) continue;
    if (peak_bin < 0 || b.counts(i) > b.counts(peak_bin)) peak_bin = i;
  }
  if (peak_bin < 0) return {};
  std::vector<Eigen::Index> side;
  for (Eigen::Index i = peak_bin + 1; i < b.size() && b.center(i) - center <= halfwindow; ++i)
    if (b.counts(i) - rest(i) > 0.0) side.push_back(i);

  Eigen::Vector2d beta;
  Eigen::Matrix2d normal;
  double chi2 = 0.0;
  std::size_t used = 0;
  auto solve = [&](auto weight_of) {
    normal.setZero();
    Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
    std::vector<std::pair<Eigen::Index, double>> pts;
    for (const Eigen::Index i : side) {
      const double w = weight_of(i);
      if (w > 0.0) pts.emplace_back(i, w);
    }
    if (pts.size() < 3) return false;
    for (const auto& [i, w] : pts) {
      const Eigen::Vector2d g(1.0, b.center(i) - center);
      normal += w * g * g.transpose();
      rhs += w * std::log(b.counts(i) - rest(i)) * g;
    }
    beta = normal.ldlt().solve(rhs);
    chi2 = 0.0;
    for (const auto& [i, w] : pts) {
      const double r = std::log(b.counts(i) - rest(i)) - beta(0) - beta(1) * (b.center(i) - center);
      chi2 += w * r * r;
    }
    used = pts.size();
    return true;
  };

  if (!solve([&](Eigen::Index i) { return b.counts(i) >= min_counts ? 1.0 : 0.0; })) return {};
  for (int it = 0; it < 50; ++it) {
    const Eigen::Vector2d prev = beta;
    const bool ok = solve([&](Eigen::Index i) {
      const double mu = std::exp(beta(0) + beta(1) * (b.center(i) - center));
      const double total = mu + rest(i);
      return total >= min_counts ? mu * mu / total : 0.0;
    });
    if (!ok) return {};
    if (std::abs(beta(1) - prev(1)) <= 1e-12 * std::abs(prev(1))) break;
  }
  if (!(beta(1) < 0.0)) return {};
  const double scale = used > 2 ? std::max(1.0, chi2 / static_cast<double>(used - 2)) : 1.0;
  WidthFit out;
  out.width = -1.0 / beta(1);
  out.sigma = std::sqrt(normal.inverse()(1, 1) * scale) / (beta(1) * beta(1));
  out.ok = std::isfinite(out.width) && std::isfinite(out.sigma);
  return out;
}

struct GlobalFit {
  double width = 0.0;
  double background = 0.0;
  std::vector<double> areas;
  double outside_area = 0.0;
  double chi2 = 0.0;
};

// Flat background plus every peak with a shared width, linear in the
// amplitudes for a fixed width. Two passes: Neyman weights, then weights
// from the first-pass model.
GlobalFit fit_all_peaks(const Bins& b, const PeakSet& peaks, double width) {
  const Eigen::Index np = static_cast<Eigen::Index>(peaks.centers.size());
  const bool with_outside = !peaks.outside.empty();
  const Eigen::Index nc = 1 + np + (with_outside ? 1 : 0);
  Eigen::MatrixXd X(b.size(), nc);
  X.col(0).setOnes();
  for (Eigen::Index k = 0; k < np; ++k) X.col(1 + k) = peak_template(b, peaks.centers[static_cast<std::size_t>(k)], width);
  if (with_outside) {
    X.col(nc - 1).setZero();
    for (const double mu : peaks.outside) X.col(nc - 1) += peak_template(b, mu, width);
  }
  Eigen::VectorXd weight = (1.0 / b.counts.array().max(1.0)).matrix();
  Eigen::VectorXd beta;
  for (int pass = 0; pass < 2; ++pass) {
    const Eigen::VectorXd sw = weight.cwiseSqrt();
    const Eigen::MatrixXd Xw = sw.asDiagonal() * X;
    beta = Xw.colPivHouseholderQr().solve(sw.cwiseProduct(b.counts));
    weight = (1.0 / (X * beta).array().max(0.5)).matrix();
  }
  GlobalFit fit;
  fit.width = width;
  fit.background = beta(0);
  for (Eigen::Index k = 0; k < np; ++k) fit.areas.push_back(beta(1 + k));
  if (with_outside) fit.outside_area = beta(nc - 1);
  fit.chi2 = (weight.array() * (b.counts - X * beta).array().square()).sum();
  return fit;
}

}  // namespace

PeakReport peak_analysis(const Histogram& h, const PeakAnalysisOptions& opt) {
  require(opt.period_ns > 0.0, "peak_analysis: period must be positive");
  require(opt.halfwindow_ns > 0.0 && opt.halfwindow_ns < 0.5 * opt.period_ns,
          "peak_analysis: half window must be below half the period");
  require(opt.background_min_distance_ns >= opt.halfwindow_ns &&
              opt.background_min_distance_ns < 0.5 * opt.period_ns,
          "peak_analysis: background distance must lie between the half window and half the period");
  require(h.size() > 0, "peak_analysis: empty histogram");

  Bins b;
  const auto nb = static_cast<Eigen::Index>(h.size());
  b.lo.resize(nb);
  b.hi.resize(nb);
  b.center.resize(nb);
  b.counts.resize(nb);
  for (Eigen::Index i = 0; i < nb; ++i) {
    b.lo(i) = h.bin_start_ns(static_cast<std::size_t>(i));
    b.hi(i) = b.lo(i) + h.bin_width_ns();
    b.center(i) = 0.5 * (b.lo(i) + b.hi(i));
    b.counts(i) = static_cast<double>(h.counts[static_cast<std::size_t>(i)]);
  }
  const double first = b.lo(0), last = b.hi(nb - 1);
  const double period = opt.period_ns, hw = opt.halfwindow_ns;

  PeakSet peaks;
  bool has_central = false;
  const auto k_lo = static_cast<long>(std::floor(first / period)) - 3;
  const auto k_hi = static_cast<long>(std::ceil(last / period)) + 3;
  for (long k = k_lo; k <= k_hi; ++k) {
    const double mu = static_cast<double>(k) * period;
    if (mu - hw >= first && mu + hw <= last) {
      if (k == 0) {
        peaks.central = peaks.centers.size();
        has_central = true;
      }
      peaks.centers.push_back(mu);
    } else if (mu + 0.5 * period > first && mu - 0.5 * period < last) {
      peaks.outside.push_back(mu);
    }
  }
  if (!has_central || peaks.centers.size() < 3)
    throw std::invalid_argument("peak_analysis: need the zero-delay peak and at least two others in range");

  std::vector<std::vector<Eigen::Index>> window(peaks.centers.size());
  std::vector<Eigen::Index> background;
  for (Eigen::Index i = 0; i < nb; ++i) {
    const double x = b.center(i);
    const double nearest = std::round(x / period) * period;
    if (std::abs(x - nearest) > opt.background_min_distance_ns) background.push_back(i);
    for (std::size_t k = 0; k < peaks.centers.size(); ++k)
      if (std::abs(x - peaks.centers[k]) <= hw) window[k].push_back(i);
  }
  if (background.empty()) throw std::invalid_argument("peak_analysis: no background bins in range");

  const std::size_t np = peaks.centers.size();
  auto window_sum = [&](const Eigen::VectorXd& v, std::size_t k) {
    double s = 0.0;
    for (const Eigen::Index i : window[k]) s += v(i);
    return s;
  };

  // Shared width from the whole histogram: the inter-peak region is mostly
  // peak tails, so width and background have to be settled together.
  auto profile = [&](double w) { return fit_all_peaks(b, peaks, w).chi2; };
  double lo = 0.02 * hw, hi = hw;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
  double f1 = profile(x1), f2 = profile(x2);
  while (hi - lo > 1e-6 * hw) {
    if (f1 < f2) {
      hi = x2; x2 = x1; f2 = f1;
      x1 = hi - g * (hi - lo); f1 = profile(x1);
    } else {
      lo = x1; x1 = x2; f1 = f2;
      x2 = lo + g * (hi - lo); f2 = profile(x2);
    }
  }
  const double width = 0.5 * (lo + hi);
  const GlobalFit global = fit_all_peaks(b, peaks, width);
  if (!std::isfinite(global.chi2)) throw NumericError("peak_analysis: global peak fit failed");

  std::vector<Eigen::VectorXd> templ(np);
  for (std::size_t k = 0; k < np; ++k) templ[k] = peak_template(b, peaks.centers[k], width);
  Eigen::VectorXd outside_templ = Eigen::VectorXd::Zero(nb);
  for (const double mu : peaks.outside) outside_templ += peak_template(b, mu, width);

  // Windowed areas after removing the flat level and the neighbours' tails.
  std::vector<double> area = global.areas;
  double bg = global.background;
  PeakReport report;
  report.central = peaks.central;
  report.centers_ns = peaks.centers;
  Eigen::VectorXd peaks_model(nb);
  for (int it = 0; it < opt.max_iterations; ++it) {
    report.iterations = it + 1;
    double mean_side = 0.0;
    for (std::size_t k = 0; k < np; ++k)
      if (k != peaks.central) mean_side += area[k];
    mean_side /= static_cast<double>(np - 1);
    peaks_model = mean_side * outside_templ;
    for (std::size_t k = 0; k < np; ++k) peaks_model += area[k] * templ[k];

    double new_bg = 0.0;
    for (const Eigen::Index i : background) new_bg += b.counts(i) - peaks_model(i);
    new_bg /= static_cast<double>(background.size());
    double change = std::abs(new_bg - bg) / std::max(1.0, std::abs(bg));
    for (std::size_t k = 0; k < np; ++k) {
      const Eigen::VectorXd others = peaks_model - area[k] * templ[k];
      const double a = (window_sum(b.counts - others, k) - new_bg * static_cast<double>(window[k].size())) /
                       window_sum(templ[k], k);
      change += std::abs(a - area[k]) / std::max(1.0, std::abs(area[k]));
      area[k] = a;
    }
    bg = new_bg;
    if (change < 1e-12) break;
  }

  // Uncertainties from Poisson counting.
  double bg_counts = 0.0;
  for (const Eigen::Index i : background) bg_counts += b.counts(i);
  const double n_bg = static_cast<double>(background.size());
  const double sigma_bg = std::sqrt(std::max(bg_counts, 1.0)) / n_bg;
  report.background_per_bin = {bg, sigma_bg};

  report.areas.resize(np);
  double raw_side = 0.0, raw_central = 0.0;
  for (std::size_t k = 0; k < np; ++k) {
    const double inside = window_sum(templ[k], k);
    const double counts = window_sum(b.counts, k);
    const double nw = static_cast<double>(window[k].size());
    const double var = counts + nw * nw * sigma_bg * sigma_bg;
    report.areas[k] = {area[k], std::sqrt(var) / inside};
    if (k == peaks.central) raw_central = counts; else raw_side += counts;
  }
  raw_side /= static_cast<double>(np - 1);
  report.raw_central_ratio = raw_side > 0.0 ? raw_central / raw_side : 0.0;

  double side = 0.0, side_var = 0.0;
  for (std::size_t k = 0; k < np; ++k) {
    if (k == peaks.central) continue;
    side += report.areas[k].value;
    side_var += report.areas[k].sigma * report.areas[k].sigma;
  }
  const double m = static_cast<double>(np - 1);
  side /= m;
  const double sigma_side = std::sqrt(side_var) / m;
  const Measured& c = report.areas[peaks.central];
  if (side > 0.0) {
    const double ratio = c.value / side;
    report.central_ratio = {ratio, std::hypot(c.sigma / side, ratio * sigma_side / side)};
  } else {
    // No side peaks above background: the ratio is undefined.
    report.central_ratio = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  }

  // Per-peak decay fits against the settled background and neighbours.
  double wsum = 0.0, wnorm = 0.0;
  for (std::size_t k = 0; k < np; ++k) {
    if (k == peaks.central) continue;
    const Eigen::VectorXd rest =
        (peaks_model - area[k] * templ[k]).array() + bg;
    const WidthFit f = fit_decay(b, rest, peaks.centers[k], hw, static_cast<double>(opt.min_fit_counts));
    report.half_widths.push_back({f.ok ? f.width : std::numeric_limits<double>::quiet_NaN(),
                                  f.ok ? f.sigma : std::numeric_limits<double>::quiet_NaN()});
    if (f.ok && f.sigma > 0.0) {
      const double wt = 1.0 / (f.sigma * f.sigma);
      wsum += wt * f.width;
      wnorm += wt;
    }
  }
  if (wnorm > 0.0) report.half_width_ns = {wsum / wnorm, std::sqrt(1.0 / wnorm)};
  else report.half_width_ns = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  return report;
}

void write_histogram_csv(std::ostream& os, const Histogram& h) {
  os << "bin_start_ns,bin_width_ns,counts\n";
  for (std::size_t i = 0; i < h.size(); ++i)
    os << format_ns(h.origin_delay + static_cast<Picoseconds>(i) * h.bin_width) << ','
       << format_ns(h.bin_width) << ',' << h.counts[i] << '\n';
}

namespace {

std::string pm(const Measured& m, int digits) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.*f ± %.*f", digits, m.value, digits, m.sigma);
  return buf;
}

}  // namespace

void write_peak_report(std::ostream& os, const PeakReport& r) {
  os << "central_peak_ratio: " << pm(r.central_ratio, 5) << '\n';
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.5f", r.raw_central_ratio);
  os << "raw_central_peak_ratio: " << buf << '\n';
  os << "background_per_bin: " << pm(r.background_per_bin, 4) << '\n';
  os << "peak_half_width_ns: " << pm(r.half_width_ns, 3) << '\n';
  for (std::size_t k = 0; k < r.centers_ns.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.1f", r.centers_ns[k]);
    os << "peak_area[" << buf << "]: " << pm(r.areas[k], 2) << '\n';
  }
  os << "iterations: " << r.iterations << '\n';
}

}  // namespace photonsim
