#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace shelldec {

/// One scaled shell term C * Omega(r; R, B).
///
/// `radius` is the shell radius R (>= 0), `blur` the Gaussian disorder
/// parameter B (> 0, same units as a displacement factor) and `weight` the
/// signed coefficient C.
struct ShellTerm {
  double radius = 0.0;
  double blur = 1.0;
  double weight = 0.0;

  friend bool operator==(const ShellTerm&, const ShellTerm&) = default;
};

/// Throws std::invalid_argument unless R >= 0 and B > 0 (both finite).
void validate_term(const ShellTerm& term);

/// Non-owning view of (a window of) a sampled radial curve.
struct CurveView {
  std::span<const double> r;
  std::span<const double> f;

  std::size_t size() const { return r.size(); }
};

/// A radial function sampled on a regular grid starting at r = 0.
class SampledCurve {
 public:
  SampledCurve() = default;

  /// Validates the grid: equal lengths >= 2, r[0] == 0, constant step.
  SampledCurve(std::vector<double> r, std::vector<double> f,
               std::string label = {});

  /// Regular grid r_n = n * step, n = 0..count-1, with zero values.
  static SampledCurve regular(double step, std::size_t count,
                              std::string label = {});

  const std::vector<double>& r() const { return r_; }
  const std::vector<double>& f() const { return f_; }
  std::vector<double>& f() { return f_; }
  const std::string& label() const { return label_; }
  void set_label(std::string label) { label_ = std::move(label); }

  std::size_t size() const { return r_.size(); }
  double step() const { return step_; }

  CurveView view() const { return {r_, f_}; }
  /// Inclusive index window [first, last].
  CurveView window(std::size_t first, std::size_t last) const;

  operator CurveView() const { return view(); }

 private:
  std::vector<double> r_;
  std::vector<double> f_;
  std::string label_;
  double step_ = 0.0;
};

/// Normalized 3-D Gaussian (4 pi / B)^{3/2} exp(-4 pi^2 r^2 / B).
double gaussian_radial(double r, double blur);

/// Radial component of the shell function Omega(r; R, B): a unit charge
/// spread uniformly over a sphere of radius R and blurred by B. Reduces to
/// gaussian_radial when R == 0.
double omega_radial(double r, double radius, double blur);

/// Single-Gaussian approximation of a shell peak around r = R, used for
/// the initial parameter estimates. For R == 0 this is gaussian_radial.
double shell_peak_gaussian(double r, double radius, double blur);

struct TermGradient {
  double d_radius = 0.0;
  double d_blur = 0.0;
  double d_weight = 0.0;
};

/// Partial derivatives of C * Omega(r; R, B) with respect to R, B and C.
/// At R == 0 the radius derivative is reported as 0 (Omega is even in R).
TermGradient omega_gradient(double r, const ShellTerm& term);

/// Value of the term C * Omega at r.
inline double term_value(double r, const ShellTerm& term) {
  return term.weight * omega_radial(r, term.radius, term.blur);
}

/// Scale for thresholds given relative to a curve: |f(0)|, or max|f| when
/// the curve vanishes at the origin.
double reference_scale(std::span<const double> values);

/// Converts a relative truncation threshold into an absolute one. The
/// reference scale is `scale` when it is given and non-zero, otherwise the
/// largest peak magnitude among the terms.
double truncation_threshold(double eps_term, std::span<const ShellTerm> terms,
                            std::optional<double> scale = std::nullopt);

/// Sum of C_m * Omega(r_n; R_m, B_m) over `terms` at each grid point.
///
/// Each term is evaluated outward and inward from its peak grid point and
/// dropped beyond the first point where its magnitude falls below
/// `eps_abs`. With eps_abs == 0 every term contributes everywhere.
std::vector<double> evaluate_sum(std::span<const ShellTerm> terms,
                                 std::span<const double> grid,
                                 double eps_abs = 0.0);

/// evaluate_sum on the grid of `reference` with the threshold derived from
/// the relative eps_term and reference_scale(reference).
SampledCurve evaluate_sum(std::span<const ShellTerm> terms,
                          const SampledCurve& reference, double eps_term);

}  // namespace shelldec
