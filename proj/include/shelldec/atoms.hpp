#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "shelldec/shell.hpp"

namespace shelldec {

/// Argument expected by the tabulated exponents b_i.
enum class ArgumentConvention {
  sin_theta_over_lambda,  ///< exp(-b (s/2)^2); token "stol"
  s,                      ///< exp(-b s^2); token "s"
};

/// Multi-Gaussian scattering factor f(s) = sum a_i exp(-b_i t^2) + c.
struct ScatteringFactor {
  struct Gaussian {
    double a = 0.0;
    double b = 0.0;
  };

  std::string label;
  std::vector<Gaussian> gaussians;
  double constant = 0.0;
  ArgumentConvention convention = ArgumentConvention::sin_theta_over_lambda;
};

/// Table parse failure; `line()` is 1-based.
class TableError : public std::runtime_error {
 public:
  TableError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Reads a scattering table: '#' comments, one record per line:
///   label K a_1 b_1 ... a_K b_K c convention
std::vector<ScatteringFactor> load_scattering_table(std::istream& in);
std::vector<ScatteringFactor> load_scattering_table_file(const std::string& path);

const ScatteringFactor* find_scatterer(std::span<const ScatteringFactor> table,
                                       std::string_view label);

/// f(s) with s = 2 sin(theta) / lambda.
double scattering_factor(const ScatteringFactor& sf, double s);

/// Composite Simpson rule on equally spaced samples (odd count >= 3).
double simpson_integrate(std::span<const double> values, double step);

struct AtomImageSpec {
  std::string label;
  double resolution = 1.0;   ///< D = d_high, Angstrom
  double b0 = 0.0;           ///< isotropic displacement factor, Angstrom^2
  double r_max = 10.0;
  double r_step = 0.01;
  std::size_t s_points = 2001;  ///< odd number of points on [0, 1/D]

  void validate() const;
};

/// Radius below which the small-r integrand replaces sin(2 pi r s) / r.
double small_r_switch_radius(double resolution);

/// Resolution-limited, B-blurred radial image of one scatterer.
SampledCurve atom_image(const ScatteringFactor& sf, const AtomImageSpec& spec);

/// Single point of the image; `r` may be any non-negative distance.
double atom_image_value(const ScatteringFactor& sf, const AtomImageSpec& spec,
                        double r);

}  // namespace shelldec
