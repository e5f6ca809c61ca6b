#pragma once

#include <Eigen/Dense>

#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace photonsim {

enum class DipolePattern { sigma_plus, sigma_minus, pi, isotropic };

/// Collection lens looking at the atom. Angles are measured from the
/// quantization (magnetic field) axis.
struct CollectionGeometry {
  double numerical_aperture = 0.7;
  double axis_angle = std::numbers::pi / 2;  ///< lens axis to quantization axis, rad
  double solid_angle_fraction = 0.15;        ///< quoted fraction of 4 pi

  void validate() const;
  /// (1 - cos(asin NA)) / 2 for an ideal lens in vacuum.
  double geometric_solid_angle_fraction() const;
  /// Quoted fraction within `rel_tol` of the geometric one.
  bool solid_angle_consistent(double rel_tol = 0.10) const;
};

/// Normalized angular intensity (sr^-1) at polar angle theta from the
/// quantization axis.
double dipole_pattern(DipolePattern pattern, double theta);

/// Collected power of one emitted photon of the given pattern, resolved
/// on an ideal linear polarizer perpendicular or parallel to the
/// quantization axis after an ideal collimating lens.
struct PolarizedCollection {
  double perpendicular = 0.0;
  double parallel = 0.0;
  double total() const { return perpendicular + parallel; }
  double contrast() const { return (perpendicular - parallel) / total(); }
};

/// Fixed-order aperture integration with `nodes` Gauss-Legendre nodes in
/// the cosine of the angle to the lens axis and 2*nodes azimuthal nodes.
PolarizedCollection collect_polarized(const CollectionGeometry& geometry, DipolePattern pattern,
                                      int nodes);

/// Same, refined by doubling `nodes` until successive results agree to
/// 1e-12. Throws NumericError if 1e-6 is not reached.
PolarizedCollection collect_polarized(const CollectionGeometry& geometry, DipolePattern pattern);

/// Gauss-Legendre nodes and weights on [a, b].
struct GaussRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};
GaussRule gauss_legendre(int n, double a = -1.0, double b = 1.0);

/// Collected fraction of the pattern divided by the aperture's geometric
/// solid-angle fraction.
double pattern_correction_factor(const CollectionGeometry& geometry, DipolePattern pattern);
double pattern_correction_factor(const CollectionGeometry& geometry, DipolePattern pattern, int nodes);

/// (R_perp - R_par) / (R_perp + R_par) when `pi_fraction` of the collected
/// photons are pi-polarized and the rest sigma+.
double polarization_contrast(const CollectionGeometry& geometry, double pi_fraction);

/// Collected pi fraction that produces `measured_contrast`.
double invert_pi_fraction(const CollectionGeometry& geometry, double measured_contrast);

/// Fraction of emitted photons that must be pi-polarized for a collected
/// fraction `collected_pi_fraction`.
double emitted_pi_fraction(const CollectionGeometry& geometry, double collected_pi_fraction);

struct BudgetFactor {
  std::string label;
  double factor = 1.0;
};

/// Ordered multiplicative chain of collection and detection factors.
struct EfficiencyBudget {
  std::vector<BudgetFactor> factors;

  static EfficiencyBudget measured_setup();
  void validate() const;
};

double overall_efficiency(const EfficiencyBudget& budget);

/// True when `value` lies within `n_sigma` standard uncertainties of
/// `measured`.
bool compatible(double value, double measured, double sigma, double n_sigma = 2.0);

struct SaturationPoint {
  double saturation = 0.0;  ///< s = I / I_sat; +inf allowed
  double rate = 0.0;        ///< detected count rate, s^-1
};

/// Least-squares eta for rate = eta * (gamma / 2) * s / (1 + s).
double calibrate_efficiency_from_saturation(std::span<const SaturationPoint> points, double gamma);

}  // namespace photonsim
