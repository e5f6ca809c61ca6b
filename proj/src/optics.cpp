#include "photonsim/optics.hpp"

#include "photonsim/errors.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

namespace photonsim {

namespace {

constexpr double kPi = std::numbers::pi;
using cd = std::complex<double>;

Eigen::Vector3cd dipole_vector(DipolePattern pattern) {
  const double r = 1.0 / std::sqrt(2.0);
  switch (pattern) {
    case DipolePattern::sigma_plus: return {cd(r), cd(0.0, r), cd(0.0)};
    case DipolePattern::sigma_minus: return {cd(r), cd(0.0, -r), cd(0.0)};
    case DipolePattern::pi: return {cd(0.0), cd(0.0), cd(1.0)};
    case DipolePattern::isotropic: break;
  }
  throw std::invalid_argument("isotropic emission has no dipole vector");
}

// Lens frame: axis `a`, transverse unit vectors `perp` and `par`, where
// `par` lies along the projection of the quantization axis.
struct LensFrame {
  Eigen::Vector3d axis, perp, par;
};

LensFrame lens_frame(double axis_angle) {
  LensFrame f;
  f.axis = Eigen::Vector3d(std::sin(axis_angle), 0.0, std::cos(axis_angle));
  Eigen::Vector3d z = Eigen::Vector3d::UnitZ() - f.axis.z() * f.axis;
  if (z.norm() < 1e-12) z = Eigen::Vector3d::UnitX();  // viewing along the field
  f.par = z.normalized();
  f.perp = f.par.cross(f.axis);
  return f;
}

}  // namespace

void CollectionGeometry::validate() const {
  require(numerical_aperture > 0.0 && numerical_aperture < 1.0,
          "CollectionGeometry: NA must be in (0, 1)");
  require(axis_angle >= 0.0 && axis_angle <= kPi, "CollectionGeometry: axis angle outside [0, pi]");
  require(solid_angle_fraction > 0.0 && solid_angle_fraction <= 1.0,
          "CollectionGeometry: solid angle fraction must be in (0, 1]");
}

double CollectionGeometry::geometric_solid_angle_fraction() const {
  const double na = numerical_aperture;
  return 0.5 * (1.0 - std::sqrt(1.0 - na * na));
}

bool CollectionGeometry::solid_angle_consistent(double rel_tol) const {
  const double g = geometric_solid_angle_fraction();
  return std::abs(solid_angle_fraction - g) <= rel_tol * g;
}

double dipole_pattern(DipolePattern pattern, double theta) {
  const double c = std::cos(theta);
  switch (pattern) {
    case DipolePattern::sigma_plus:
    case DipolePattern::sigma_minus: return 3.0 / (16.0 * kPi) * (1.0 + c * c);
    case DipolePattern::pi: return 3.0 / (8.0 * kPi) * (1.0 - c * c);
    case DipolePattern::isotropic: return 1.0 / (4.0 * kPi);
  }
  return 0.0;
}

GaussRule gauss_legendre(int n, double a, double b) {
  require(n >= 1, "gauss_legendre: need at least one node");
  // Golub-Welsch: nodes are the eigenvalues of the Jacobi matrix.
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double beta = k / std::sqrt(4.0 * k * k - 1.0);
    J(k, k - 1) = J(k - 1, k) = beta;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  const double half = 0.5 * (b - a);
  GaussRule rule;
  rule.nodes = half * es.eigenvalues().array() + 0.5 * (a + b);
  rule.weights = 2.0 * half * es.eigenvectors().row(0).transpose().array().square();
  return rule;
}

PolarizedCollection collect_polarized(const CollectionGeometry& geometry, DipolePattern pattern,
                                      int nodes) {
  geometry.validate();
  require(nodes >= 2, "collect_polarized: need at least two nodes");
  const double cos_max = std::sqrt(1.0 - geometry.numerical_aperture * geometry.numerical_aperture);
  const GaussRule rule = gauss_legendre(nodes, cos_max, 1.0);
  const int n_phi = 2 * nodes;
  const double dphi = 2.0 * kPi / n_phi;
  const LensFrame f = lens_frame(geometry.axis_angle);
  const double norm = 3.0 / (8.0 * kPi);

  PolarizedCollection out;
  if (pattern == DipolePattern::isotropic) {
    // Unpolarized: split evenly between the polarizer axes.
    const double frac = rule.weights.sum() * 2.0 * kPi / (4.0 * kPi);
    out.perpendicular = out.parallel = 0.5 * frac;
    return out;
  }
  const Eigen::Vector3cd d = dipole_vector(pattern);
  for (Eigen::Index i = 0; i < rule.nodes.size(); ++i) {
    const double u = rule.nodes(i);
    const double s = std::sqrt(std::max(0.0, 1.0 - u * u));
    for (int j = 0; j < n_phi; ++j) {
      const double phi = (j + 0.5) * dphi;
      const double cp = std::cos(phi), sp = std::sin(phi);
      const Eigen::Vector3d radial = cp * f.perp + sp * f.par;
      const Eigen::Vector3d e_s = -sp * f.perp + cp * f.par;
      const Eigen::Vector3d e_p = -s * f.axis + u * radial;
      const cd field_p = d.cwiseProduct(e_p.cast<cd>()).sum();
      const cd field_s = d.cwiseProduct(e_s.cast<cd>()).sum();
      // After collimation p maps onto the radial direction, s is unchanged.
      const cd e_perp = field_p * cp - field_s * sp;
      const cd e_par = field_p * sp + field_s * cp;
      const double w = rule.weights(i) * dphi * norm;
      out.perpendicular += w * std::norm(e_perp);
      out.parallel += w * std::norm(e_par);
    }
  }
  return out;
}

PolarizedCollection collect_polarized(const CollectionGeometry& geometry, DipolePattern pattern) {
  PolarizedCollection prev = collect_polarized(geometry, pattern, 8);
  double change = 0.0;
  for (int n = 16; n <= 1024; n *= 2) {
    const PolarizedCollection cur = collect_polarized(geometry, pattern, n);
    change = std::max(std::abs(cur.perpendicular - prev.perpendicular),
                      std::abs(cur.parallel - prev.parallel));
    prev = cur;
    if (change < 1e-12) return cur;
  }
  if (change < 1e-6) return prev;
  throw NumericError("aperture quadrature did not converge");
}

double pattern_correction_factor(const CollectionGeometry& geometry, DipolePattern pattern, int nodes) {
  return collect_polarized(geometry, pattern, nodes).total() / geometry.geometric_solid_angle_fraction();
}

double pattern_correction_factor(const CollectionGeometry& geometry, DipolePattern pattern) {
  return collect_polarized(geometry, pattern).total() / geometry.geometric_solid_angle_fraction();
}

double polarization_contrast(const CollectionGeometry& geometry, double pi_fraction) {
  require(pi_fraction >= 0.0 && pi_fraction <= 1.0, "polarization_contrast: pi fraction outside [0,1]");
  const double c_sigma = collect_polarized(geometry, DipolePattern::sigma_plus).contrast();
  const double c_pi = collect_polarized(geometry, DipolePattern::pi).contrast();
  return (1.0 - pi_fraction) * c_sigma + pi_fraction * c_pi;
}

double invert_pi_fraction(const CollectionGeometry& geometry, double measured_contrast) {
  const double c_sigma = polarization_contrast(geometry, 0.0);
  const double c_pi = polarization_contrast(geometry, 1.0);
  const double lo = std::min(c_sigma, c_pi), hi = std::max(c_sigma, c_pi);
  require(measured_contrast >= lo - 1e-12 && measured_contrast <= hi + 1e-12,
          "invert_pi_fraction: contrast not reachable for this geometry");
  // Contrast is affine in the collected pi fraction, so the root is exact.
  const double f = (c_sigma - measured_contrast) / (c_sigma - c_pi);
  return std::clamp(f, 0.0, 1.0);
}

double emitted_pi_fraction(const CollectionGeometry& geometry, double collected_pi_fraction) {
  require(collected_pi_fraction >= 0.0 && collected_pi_fraction <= 1.0,
          "emitted_pi_fraction: fraction outside [0,1]");
  const double w_sigma = collect_polarized(geometry, DipolePattern::sigma_plus).total();
  const double w_pi = collect_polarized(geometry, DipolePattern::pi).total();
  const double f = collected_pi_fraction;
  return f * w_sigma / (f * w_sigma + (1.0 - f) * w_pi);
}

EfficiencyBudget EfficiencyBudget::measured_setup() {
  return {{{"lens_transmission", 0.87},
           {"solid_angle_fraction", 0.15},
           {"pattern_correction", 0.85},
           {"imaging_optics", 0.58},
           {"pinhole_and_quantum_efficiency", 0.10}}};
}

void EfficiencyBudget::validate() const {
  require(!factors.empty(), "EfficiencyBudget: empty budget");
  for (const BudgetFactor& f : factors)
    require(f.factor > 0.0 && f.factor <= 1.0, "EfficiencyBudget: factor '" + f.label + "' outside (0, 1]");
}

double overall_efficiency(const EfficiencyBudget& budget) {
  budget.validate();
  double product = 1.0;
  for (const BudgetFactor& f : budget.factors) product *= f.factor;
  return product;
}

bool compatible(double value, double measured, double sigma, double n_sigma) {
  return std::abs(value - measured) <= n_sigma * sigma;
}

double calibrate_efficiency_from_saturation(std::span<const SaturationPoint> points, double gamma) {
  require(!points.empty(), "calibrate_efficiency_from_saturation: no data points");
  require(gamma > 0.0, "calibrate_efficiency_from_saturation: gamma must be positive");
  Eigen::VectorXd model(static_cast<Eigen::Index>(points.size()));
  Eigen::VectorXd rate(model.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double s = points[i].saturation;
    require(s >= 0.0, "calibrate_efficiency_from_saturation: negative saturation parameter");
    require(std::isfinite(points[i].rate), "calibrate_efficiency_from_saturation: non-finite rate");
    const double shape = std::isinf(s) ? 1.0 : s / (1.0 + s);
    model(static_cast<Eigen::Index>(i)) = 0.5 * gamma * shape;
    rate(static_cast<Eigen::Index>(i)) = points[i].rate;
  }
  const double denom = model.squaredNorm();
  if (!(denom > 0.0)) throw NumericError("saturation fit is singular (all s = 0)");
  const double eta = model.dot(rate) / denom;
  if (eta < 0.0) throw NumericError("saturation fit gave a negative efficiency");
  return eta;
}

}  // namespace photonsim
