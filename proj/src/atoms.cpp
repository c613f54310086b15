#include "shelldec/atoms.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace shelldec {

namespace {

constexpr double kPi = std::numbers::pi;

double parse_number(const std::string& token, std::size_t line, const char* what) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(token, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != token.size() || !std::isfinite(value))
    throw TableError(line, std::string("malformed ") + what + " '" + token + "'");
  return value;
}

// s-grid samples of s^k f(s) exp(-B s^2 / 4) on [0, 1/D].
std::vector<double> weighted_samples(const ScatteringFactor& sf,
                                     const AtomImageSpec& spec, int power,
                                     double& step) {
  const double s_max = 1.0 / spec.resolution;
  const std::size_t count = spec.s_points;
  step = s_max / static_cast<double>(count - 1);
  std::vector<double> w(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double s = static_cast<double>(i) * step;
    w[i] = std::pow(s, power) * scattering_factor(sf, s) * std::exp(-spec.b0 * s * s / 4.0);
  }
  return w;
}

}  // namespace

std::vector<ScatteringFactor> load_scattering_table(std::istream& in) {
  std::vector<ScatteringFactor> table;
  std::set<std::string> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    const auto hash = text.find('#');
    if (hash != std::string::npos) text.erase(hash);
    std::istringstream fields(text);
    std::vector<std::string> tok;
    for (std::string t; fields >> t;) tok.push_back(t);
    if (tok.empty()) continue;

    ScatteringFactor sf;
    sf.label = tok[0];
    if (tok.size() < 2) throw TableError(line, "missing Gaussian count");
    const double k_value = parse_number(tok[1], line, "Gaussian count");
    if (k_value < 1 || k_value != std::floor(k_value))
      throw TableError(line, "Gaussian count must be a positive integer");
    const auto k = static_cast<std::size_t>(k_value);
    if (tok.size() != 2 + 2 * k + 2)
      throw TableError(line, "expected " + std::to_string(2 * k + 4) +
                                 " fields, found " + std::to_string(tok.size()));
    for (std::size_t i = 0; i < k; ++i) {
      sf.gaussians.push_back({parse_number(tok[2 + 2 * i], line, "coefficient a"),
                              parse_number(tok[3 + 2 * i], line, "exponent b")});
    }
    sf.constant = parse_number(tok[2 + 2 * k], line, "constant c");
    const std::string& conv = tok.back();
    if (conv == "stol") {
      sf.convention = ArgumentConvention::sin_theta_over_lambda;
    } else if (conv == "s") {
      sf.convention = ArgumentConvention::s;
    } else {
      throw TableError(line, "unknown argument convention '" + conv +
                                 "' (expected stol or s)");
    }
    if (!seen.insert(sf.label).second)
      throw TableError(line, "duplicate scatterer label '" + sf.label + "'");
    table.push_back(std::move(sf));
  }
  return table;
}

std::vector<ScatteringFactor> load_scattering_table_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scattering table '" + path + "'");
  return load_scattering_table(in);
}

const ScatteringFactor* find_scatterer(std::span<const ScatteringFactor> table,
                                       std::string_view label) {
  for (const ScatteringFactor& sf : table)
    if (sf.label == label) return &sf;
  return nullptr;
}

double scattering_factor(const ScatteringFactor& sf, double s) {
  const double t2 = sf.convention == ArgumentConvention::sin_theta_over_lambda
                        ? 0.25 * s * s
                        : s * s;
  double value = sf.constant;
  for (const auto& g : sf.gaussians) value += g.a * std::exp(-g.b * t2);
  return value;
}

double simpson_integrate(std::span<const double> values, double step) {
  const std::size_t n = values.size();
  if (n < 3) throw std::invalid_argument("Simpson rule needs at least 3 samples");
  if (n % 2 == 0)
    throw std::invalid_argument("Simpson rule needs an odd number of samples");
  double odd = 0.0, even = 0.0;
  for (std::size_t i = 1; i + 1 < n; i += 2) odd += values[i];
  for (std::size_t i = 2; i + 1 < n; i += 2) even += values[i];
  return step / 3.0 * (values.front() + 4.0 * odd + 2.0 * even + values.back());
}

void AtomImageSpec::validate() const {
  if (!(resolution > 0.0)) throw std::invalid_argument("resolution D must be positive");
  if (!(b0 >= 0.0)) throw std::invalid_argument("B0 must be non-negative");
  if (!(r_step > 0.0)) throw std::invalid_argument("grid step must be positive");
  if (!(r_max > 0.0)) throw std::invalid_argument("grid extent must be positive");
  if (s_points < 3 || s_points % 2 == 0)
    throw std::invalid_argument("s-grid needs an odd number (>= 3) of points");
}

double small_r_switch_radius(double resolution) { return 1e-5 * resolution; }

double atom_image_value(const ScatteringFactor& sf, const AtomImageSpec& spec,
                        double r) {
  spec.validate();
  double h = 0.0;
  if (r < small_r_switch_radius(spec.resolution)) {
    const std::vector<double> w = weighted_samples(sf, spec, 2, h);
    return 4.0 * kPi * simpson_integrate(w, h);
  }
  std::vector<double> w = weighted_samples(sf, spec, 1, h);
  for (std::size_t i = 0; i < w.size(); ++i)
    w[i] *= std::sin(2.0 * kPi * r * static_cast<double>(i) * h);
  return 2.0 / r * simpson_integrate(w, h);
}

SampledCurve atom_image(const ScatteringFactor& sf, const AtomImageSpec& spec) {
  spec.validate();
  const auto count =
      static_cast<std::size_t>(std::floor(spec.r_max / spec.r_step + 1e-9)) + 1;
  SampledCurve curve = SampledCurve::regular(spec.r_step, count,
                                             spec.label.empty() ? sf.label : spec.label);
  double h = 0.0;
  const std::vector<double> w1 = weighted_samples(sf, spec, 1, h);
  const std::vector<double> w2 = weighted_samples(sf, spec, 2, h);
  const double zero_value = 4.0 * kPi * simpson_integrate(w2, h);
  const double switch_r = small_r_switch_radius(spec.resolution);

  std::vector<double> integrand(w1.size());
  for (std::size_t n = 0; n < count; ++n) {
    const double r = curve.r()[n];
    if (r < switch_r) {
      curve.f()[n] = zero_value;
      continue;
    }
    for (std::size_t i = 0; i < w1.size(); ++i)
      integrand[i] = w1[i] * std::sin(2.0 * kPi * r * static_cast<double>(i) * h);
    curve.f()[n] = 2.0 / r * simpson_integrate(integrand, h);
  }
  return curve;
}

}  // namespace shelldec
