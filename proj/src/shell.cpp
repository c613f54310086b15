#include "shelldec/shell.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace shelldec {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kFourPiSq = 4.0 * kPi * kPi;
constexpr double kEightPiSq = 8.0 * kPi * kPi;
// exp() of anything below this is treated as an exact zero contribution.
constexpr double kExpFloor = -700.0;

double guarded_exp(double arg) { return arg < kExpFloor ? 0.0 : std::exp(arg); }

void check_blur(double blur) {
  if (!(blur > 0.0) || !std::isfinite(blur))
    throw std::invalid_argument("blur parameter B must be positive");
}

void check_args(double r, double radius, double blur) {
  check_blur(blur);
  if (!(radius >= 0.0) || !std::isfinite(radius))
    throw std::invalid_argument("shell radius R must be non-negative");
  if (!(r >= 0.0) || !std::isfinite(r))
    throw std::invalid_argument("distance r must be non-negative");
}

// (4 pi / B)^{3/2}
double gaussian_norm(double blur) {
  const double q = 4.0 * kPi / blur;
  return q * std::sqrt(q);
}

// t / tanh(t) - 1, accurate for small t.
double coth_minus_one(double t) {
  if (t < 0.1) {
    const double t2 = t * t;
    return t2 * (1.0 / 3.0 +
                 t2 * (-1.0 / 45.0 + t2 * (2.0 / 945.0 - t2 / 4725.0)));
  }
  return t / std::tanh(t) - 1.0;
}

}  // namespace

void validate_term(const ShellTerm& term) {
  check_blur(term.blur);
  if (!(term.radius >= 0.0) || !std::isfinite(term.radius))
    throw std::invalid_argument("shell radius R must be non-negative");
  if (!std::isfinite(term.weight))
    throw std::invalid_argument("term weight C must be finite");
}

SampledCurve::SampledCurve(std::vector<double> r, std::vector<double> f,
                           std::string label)
    : r_(std::move(r)), f_(std::move(f)), label_(std::move(label)) {
  if (r_.size() != f_.size())
    throw std::invalid_argument("grid and values differ in length");
  if (r_.size() < 2)
    throw std::invalid_argument("a curve needs at least two grid points");
  if (r_.front() != 0.0)
    throw std::invalid_argument("the grid must start at r = 0");
  step_ = (r_.back() - r_.front()) / static_cast<double>(r_.size() - 1);
  if (!(step_ > 0.0))
    throw std::invalid_argument("the grid must be strictly increasing");
  for (std::size_t n = 0; n + 1 < r_.size(); ++n) {
    const double h = r_[n + 1] - r_[n];
    if (!(h > 0.0) || std::abs(h - step_) > 1e-9 * step_)
      throw std::invalid_argument("the grid step is not regular near index " +
                                  std::to_string(n));
  }
  for (double v : f_)
    if (!std::isfinite(v))
      throw std::invalid_argument("curve values must be finite");
}

SampledCurve SampledCurve::regular(double step, std::size_t count,
                                   std::string label) {
  if (!(step > 0.0)) throw std::invalid_argument("grid step must be positive");
  std::vector<double> r(count);
  for (std::size_t n = 0; n < count; ++n) r[n] = static_cast<double>(n) * step;
  return SampledCurve(std::move(r), std::vector<double>(count, 0.0),
                      std::move(label));
}

CurveView SampledCurve::window(std::size_t first, std::size_t last) const {
  if (first > last || last >= size())
    throw std::out_of_range("curve window outside the grid");
  const std::size_t n = last - first + 1;
  return {std::span<const double>(r_).subspan(first, n),
          std::span<const double>(f_).subspan(first, n)};
}

double gaussian_radial(double r, double blur) {
  check_args(r, 0.0, blur);
  return gaussian_norm(blur) * guarded_exp(-kFourPiSq * r * r / blur);
}

double omega_radial(double r, double radius, double blur) {
  check_args(r, radius, blur);
  if (radius == 0.0)
    return gaussian_norm(blur) * guarded_exp(-kFourPiSq * r * r / blur);
  if (r == 0.0)
    return gaussian_norm(blur) * guarded_exp(-kFourPiSq * radius * radius / blur);

  // exp(-a(r-R)^2) - exp(-a(r+R)^2) = exp(-a(r-R)^2) * (1 - exp(-4arR))
  const double d = r - radius;
  const double near = guarded_exp(-kFourPiSq * d * d / blur);
  if (near == 0.0) return 0.0;
  const double x = 4.0 * kFourPiSq * r * radius / blur;
  return near * -std::expm1(-x) / (r * radius * std::sqrt(4.0 * kPi * blur));
}

double shell_peak_gaussian(double r, double radius, double blur) {
  check_args(r, radius, blur);
  if (radius == 0.0) return gaussian_radial(r, blur);
  const double d = r - radius;
  return guarded_exp(-kFourPiSq * d * d / blur) /
         (radius * radius * std::sqrt(4.0 * kPi * blur));
}

TermGradient omega_gradient(double r, const ShellTerm& term) {
  const double R = term.radius;
  const double B = term.blur;
  const double C = term.weight;
  check_args(r, R, B);

  TermGradient g;
  if (R == 0.0) {
    const double e = guarded_exp(-kFourPiSq * r * r / B);
    g.d_weight = gaussian_norm(B) * e;
    g.d_blur = 4.0 * C * std::pow(kPi, 1.5) * std::pow(B, -3.5) * e *
               (kEightPiSq * r * r - 3.0 * B);
    g.d_radius = 0.0;
    return g;
  }
  if (r == 0.0) {
    const double e = guarded_exp(-kFourPiSq * R * R / B);
    g.d_weight = gaussian_norm(B) * e;
    g.d_radius = -64.0 * std::pow(kPi, 3.5) * C * R * std::pow(B, -2.5) * e;
    g.d_blur = 4.0 * std::pow(kPi, 1.5) * C * std::pow(B, -3.5) *
               (kEightPiSq * R * R - 3.0 * B) * e;
    return g;
  }

  // Both exponentials are factored as exp(-a(r-R)^2) * {1, exp(-x)} with
  // x = 16 pi^2 r R / B, and the brackets rearranged so that no two O(1)
  // quantities cancel when x is small.
  const double d = r - R;
  const double near = guarded_exp(-kFourPiSq * d * d / B);
  if (near == 0.0) return g;
  const double x = 4.0 * kFourPiSq * r * R / B;
  const double s = -std::expm1(-x);  // 1 - exp(-x)
  const double p = 2.0 - s;          // 1 + exp(-x)
  const double phi = s * coth_minus_one(0.5 * x);  // x p / 2 - s

  const double root_pi = std::sqrt(kPi);
  g.d_weight = near * s / (r * R * std::sqrt(4.0 * kPi * B));
  g.d_radius = C * std::pow(B, -1.5) / (2.0 * root_pi * r * R * R) * near *
               (B * phi - kEightPiSq * R * R * s);
  g.d_blur = C * std::pow(B, -2.5) / (4.0 * r * R * root_pi) * near *
             (kEightPiSq * (r * r + R * R) * s - B * (s + x * p));
  return g;
}

double reference_scale(std::span<const double> values) {
  if (values.empty()) return 0.0;
  if (values.front() != 0.0) return std::abs(values.front());
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

double truncation_threshold(double eps_term, std::span<const ShellTerm> terms,
                            std::optional<double> scale) {
  if (!(eps_term >= 0.0))
    throw std::invalid_argument("eps_term must be non-negative");
  if (eps_term == 0.0) return 0.0;
  if (scale && *scale != 0.0) return eps_term * std::abs(*scale);
  double largest = 0.0;
  for (const ShellTerm& t : terms) {
    const double peak = std::max(omega_radial(0.0, t.radius, t.blur),
                                 omega_radial(t.radius, t.radius, t.blur));
    largest = std::max(largest, std::abs(t.weight) * peak);
  }
  return eps_term * largest;
}

std::vector<double> evaluate_sum(std::span<const ShellTerm> terms,
                                 std::span<const double> grid, double eps_abs) {
  if (grid.empty()) throw std::invalid_argument("empty evaluation grid");
  std::vector<double> out(grid.size(), 0.0);
  for (const ShellTerm& t : terms) {
    validate_term(t);
    if (eps_abs <= 0.0) {
      for (std::size_t n = 0; n < grid.size(); ++n)
        out[n] += term_value(grid[n], t);
      continue;
    }
    // Grid point closest to the term maximum.
    const double peak_r = kEightPiSq * t.radius * t.radius > 3.0 * t.blur
                              ? t.radius
                              : 0.0;
    auto it = std::lower_bound(grid.begin(), grid.end(), peak_r);
    std::size_t start = static_cast<std::size_t>(it - grid.begin());
    if (start == grid.size()) {
      start = grid.size() - 1;
    } else if (start > 0 && peak_r - grid[start - 1] < grid[start] - peak_r) {
      --start;
    }
    for (std::size_t n = start; n < grid.size(); ++n) {
      const double v = term_value(grid[n], t);
      if (std::abs(v) < eps_abs) break;
      out[n] += v;
    }
    for (std::size_t n = start; n-- > 0;) {
      const double v = term_value(grid[n], t);
      if (std::abs(v) < eps_abs) break;
      out[n] += v;
    }
  }
  return out;
}

SampledCurve evaluate_sum(std::span<const ShellTerm> terms,
                          const SampledCurve& reference, double eps_term) {
  const double eps_abs =
      truncation_threshold(eps_term, terms, reference_scale(reference.f()));
  SampledCurve model(reference.r(), evaluate_sum(terms, reference.r(), eps_abs),
                     reference.label());
  return model;
}

}  // namespace shelldec
