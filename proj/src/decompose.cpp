#include "shelldec/decompose.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "shelldec/peaks.hpp"

namespace shelldec {

namespace {

constexpr double kPi = std::numbers::pi;

}  // namespace

std::string_view to_string(Protocol protocol) {
  switch (protocol) {
    case Protocol::iterative: return "iterative";
    case Protocol::single_pass: return "single_pass";
    case Protocol::refine_each: return "refine_each";
  }
  return "unknown";
}

Protocol parse_protocol(std::string_view name) {
  if (name == "iterative") return Protocol::iterative;
  if (name == "single_pass") return Protocol::single_pass;
  if (name == "refine_each") return Protocol::refine_each;
  throw std::invalid_argument("unknown protocol '" + std::string(name) +
                              "' (expected iterative, single_pass or refine_each)");
}

void DecomposeConfig::validate() const {
  if (!(eps_dec > 0.0)) throw std::invalid_argument("eps_dec must be positive");
  if (!(eps_peak > 0.0)) throw std::invalid_argument("eps_peak must be positive");
  if (!(eps_term >= 0.0)) throw std::invalid_argument("eps_term must be non-negative");
  if (max_peaks < 1) throw std::invalid_argument("max_peaks must be at least 1");
  if (max_passes < 1) throw std::invalid_argument("max_passes must be at least 1");
  if (b_min && !(*b_min > 0.0)) throw std::invalid_argument("b_min must be positive");
  if (c_min && !(*c_min > 0.0)) throw std::invalid_argument("c_min must be positive");
  if (range && !(range->first <= range->second))
    throw std::invalid_argument("decomposition range is empty");
  if (memory_depth < 1) throw std::invalid_argument("memory_depth must be at least 1");
  if (max_iterations < 1) throw std::invalid_argument("max_iterations must be at least 1");
}

ResolvedConfig resolve_config(const SampledCurve& curve,
                              const DecomposeConfig& config) {
  config.validate();
  const double scale = reference_scale(curve.f());
  ResolvedConfig out;
  out.eps_dec_abs = config.eps_dec_relative ? config.eps_dec * scale : config.eps_dec;
  out.eps_peak_abs = config.eps_peak * scale;
  out.eps_term_abs = config.eps_term * scale;

  const double h = curve.step();
  // Gaussian whose inflection radius is one grid step.
  out.b_min = config.b_min.value_or(8.0 * kPi * kPi * h * h);
  // Origin-peak height equal to eps_dec at the narrowest width.
  double c_min = out.eps_dec_abs * std::pow(out.b_min / (4.0 * kPi), 1.5);
  if (!(c_min > 0.0)) c_min = std::numeric_limits<double>::min();
  out.c_min = config.c_min.value_or(c_min);

  out.range_first = 0;
  out.range_last = curve.size() - 1;
  if (config.range) {
    const auto& r = curve.r();
    const double tol = 1e-9 * h;
    std::size_t first = 0;
    while (first < r.size() && r[first] < config.range->first - tol) ++first;
    std::size_t last = r.size();
    while (last > 0 && r[last - 1] > config.range->second + tol) --last;
    if (last == 0 || first >= last)
      throw std::invalid_argument("decomposition range contains no grid points");
    out.range_first = first;
    out.range_last = last - 1;
  }
  return out;
}

double score_with_gradient(CurveView curve, std::span<const ShellTerm> terms,
                           std::span<double> gradient) {
  const std::size_t m_count = terms.size();
  if (gradient.size() != 3 * m_count)
    throw std::invalid_argument("gradient size must be 3 * number of terms");
  std::fill(gradient.begin(), gradient.end(), 0.0);
  for (const ShellTerm& t : terms) validate_term(t);

  std::vector<TermGradient> partials(m_count);
  double total = 0.0;
  for (std::size_t n = 0; n < curve.size(); ++n) {
    const double r = curve.r[n];
    double model = 0.0;
    for (std::size_t m = 0; m < m_count; ++m) {
      partials[m] = omega_gradient(r, terms[m]);
      model += terms[m].weight * partials[m].d_weight;
    }
    const double diff = curve.f[n] - model;
    total += diff * diff;
    for (std::size_t m = 0; m < m_count; ++m) {
      gradient[3 * m] -= diff * partials[m].d_radius;
      gradient[3 * m + 1] -= diff * partials[m].d_blur;
      gradient[3 * m + 2] -= diff * partials[m].d_weight;
    }
  }
  return 0.5 * total;
}

double score(CurveView curve, std::span<const ShellTerm> terms) {
  for (const ShellTerm& t : terms) validate_term(t);
  double total = 0.0;
  for (std::size_t n = 0; n < curve.size(); ++n) {
    double model = 0.0;
    for (const ShellTerm& t : terms) model += term_value(curve.r[n], t);
    const double diff = curve.f[n] - model;
    total += diff * diff;
  }
  return 0.5 * total;
}

std::vector<double> score_gradient(CurveView curve, std::span<const ShellTerm> terms) {
  std::vector<double> g(3 * terms.size());
  score_with_gradient(curve, terms, g);
  return g;
}

namespace {

struct RefineRun {
  std::vector<ShellTerm> terms;
  double value = 0.0;
  MinimizeStatus status = MinimizeStatus::converged;
  int iterations = 0;
};

// Minimizes the score from `start`. Radii flagged in `origin_only` stay at
// zero and are left out of the variables.
RefineRun run_refine(CurveView curve, const std::vector<ShellTerm>& start,
                     const std::vector<char>& origin_only, double b_min, double c_min,
                     const DecomposeConfig& config) {
  // Each variable is divided by the square root of its Gauss-Newton
  // curvature at the start, which makes the diagonal of the score Hessian
  // close to one. Radii at the origin have no curvature and use the width
  // of the Gaussian instead. The sign of C stays fixed.
  const std::size_t m_count = start.size();
  std::vector<double> curvature(3 * m_count, 0.0);
  for (std::size_t n = 0; n < curve.size(); ++n) {
    for (std::size_t m = 0; m < m_count; ++m) {
      const TermGradient d = omega_gradient(curve.r[n], start[m]);
      curvature[3 * m] += d.d_radius * d.d_radius;
      curvature[3 * m + 1] += d.d_blur * d.d_blur;
      curvature[3 * m + 2] += d.d_weight * d.d_weight;
    }
  }

  // slot[j] is the parameter index (3 m + k) of variable j.
  std::vector<std::size_t> slot;
  std::vector<double> scale, sign(m_count);
  BoundedProblem problem;
  for (std::size_t m = 0; m < m_count; ++m) {
    const ShellTerm& t = start[m];
    sign[m] = t.weight < 0.0 ? -1.0 : 1.0;
    const double blur = std::max(t.blur, b_min);
    const double fallback[3] = {std::sqrt(blur / (8.0 * kPi * kPi)), blur,
                                std::max(std::abs(t.weight), c_min)};
    const double value[3] = {t.radius, t.blur, std::abs(t.weight)};
    const double floor[3] = {0.0, b_min, c_min};
    for (int k = 0; k < 3; ++k) {
      if (k == 0 && origin_only[m]) continue;
      const double c = curvature[3 * m + k];
      const double sc = c > 0.0 && std::isfinite(c) ? 1.0 / std::sqrt(c) : fallback[k];
      slot.push_back(3 * m + k);
      scale.push_back(sc);
      problem.initial_point.push_back(value[k] / sc);
      problem.lower_bounds.push_back(floor[k] / sc);
    }
  }
  problem.gradient_tolerance = config.gradient_tolerance;
  problem.relative_decrease = config.relative_decrease;
  problem.max_iterations = config.max_iterations;
  problem.memory_depth = config.memory_depth;

  auto unpack = [&](std::span<const double> z) {
    std::vector<ShellTerm> t = start;
    for (std::size_t m = 0; m < m_count; ++m)
      if (origin_only[m]) t[m].radius = 0.0;
    for (std::size_t j = 0; j < slot.size(); ++j) {
      const std::size_t m = slot[j] / 3;
      const double v = z[j] * scale[j];
      switch (slot[j] % 3) {
        case 0: t[m].radius = v; break;
        case 1: t[m].blur = v; break;
        default: t[m].weight = sign[m] * v; break;
      }
    }
    return t;
  };

  std::vector<double> grad(3 * m_count);
  const ObjectiveFn objective = [&](std::span<const double> z, std::span<double> gz) {
    const double value = score_with_gradient(curve, unpack(z), grad);
    for (std::size_t j = 0; j < slot.size(); ++j) {
      const double s = slot[j] % 3 == 2 ? sign[slot[j] / 3] : 1.0;
      gz[j] = grad[slot[j]] * scale[j] * s;
    }
    return value;
  };

  const MinimizeResult result = minimize(problem, objective);
  return {unpack(result.point), result.value, result.status, result.iterations};
}

}  // namespace

RefineResult refine(CurveView curve, std::span<const ShellTerm> terms,
                    double b_min, double c_min, const DecomposeConfig& config) {
  if (terms.empty()) throw std::invalid_argument("refine: no terms to refine");
  if (!(b_min > 0.0) || !(c_min > 0.0))
    throw std::invalid_argument("refine: bounds must be positive");

  RefineResult out;
  out.terms.assign(terms.begin(), terms.end());
  out.score_before = score(curve, terms);
  out.score_after = out.score_before;

  const std::vector<char> none(terms.size(), 0);
  const RefineRun first = run_refine(curve, out.terms, none, b_min, c_min, config);
  out.status = first.status;
  out.iterations = first.iterations;
  if (std::isfinite(first.value) && first.value <= out.score_before) {
    out.terms = first.terms;
    out.score_after = first.value;
  }

  // A shell narrower than its own blur is nearly a Gaussian with a larger B,
  // and the score is extremely flat along that valley. Such terms get one
  // retry as origin Gaussians with the equivalent width.
  std::vector<char> collapse(out.terms.size(), 0);
  std::vector<ShellTerm> seed = out.terms;
  bool any = false;
  for (std::size_t m = 0; m < seed.size(); ++m) {
    const ShellTerm& t = seed[m];
    if (t.radius > 0.0 && 8.0 * kPi * kPi * t.radius * t.radius < t.blur) {
      collapse[m] = 1;
      seed[m].blur += 8.0 * kPi * kPi * t.radius * t.radius / 3.0;
      seed[m].radius = 0.0;
      any = true;
    }
  }
  if (any) {
    const RefineRun second = run_refine(curve, seed, collapse, b_min, c_min, config);
    out.iterations += second.iterations;
    if (std::isfinite(second.value) && second.value <= out.score_after) {
      out.terms = second.terms;
      out.score_after = second.value;
      out.status = second.status;
    }
  }
  return out;
}

RefineResult refine(const SampledCurve& curve, std::span<const ShellTerm> terms,
                    const DecomposeConfig& config) {
  const ResolvedConfig resolved = resolve_config(curve, config);
  return refine(curve.window(resolved.range_first, resolved.range_last), terms,
                resolved.b_min, resolved.c_min, config);
}

Decomposition decompose(const SampledCurve& curve, const DecomposeConfig& config) {
  Decomposition out;
  out.label = curve.label();
  out.resolved = resolve_config(curve, config);
  const ResolvedConfig& rc = out.resolved;
  const CurveView fit_window = curve.window(rc.range_first, rc.range_last);

  std::vector<double> residual = curve.f();
  auto update_residual = [&] {
    const std::vector<double> model =
        evaluate_sum(out.terms, curve.r(), rc.eps_term_abs);
    double full = 0.0, in_range = 0.0;
    for (std::size_t n = 0; n < residual.size(); ++n) {
      residual[n] = curve.f()[n] - model[n];
      const double a = std::abs(residual[n]);
      full = std::max(full, a);
      if (n >= rc.range_first && n <= rc.range_last) in_range = std::max(in_range, a);
    }
    out.residual_max_full = full;
    out.residual_max_range = in_range;
  };

  update_residual();
  if (out.residual_max_full == 0.0) {
    out.converged = true;
    return out;
  }

  const std::size_t budget = static_cast<std::size_t>(config.max_peaks);
  auto next_term = [&](std::size_t start) -> std::optional<std::pair<ShellTerm, std::size_t>> {
    const auto peak = find_next_peak(residual, rc.eps_dec_abs, start, rc.range_last);
    if (!peak) return std::nullopt;
    // Peaks lower than the border threshold keep a window around their
    // upper half instead of collapsing to a single point.
    const double border =
        std::min(rc.eps_peak_abs, 0.5 * std::abs(residual[peak->index]));
    const PeakRegion region = peak_extent(residual, *peak, border);
    return std::pair{estimate_term(CurveView{curve.r(), residual}, region, rc.b_min),
                     peak->index};
  };
  auto refine_all = [&] {
    out.terms = refine(fit_window, out.terms, rc.b_min, rc.c_min, config).terms;
    update_residual();
  };

  for (int pass = 0; pass < config.max_passes; ++pass) {
    if (out.residual_max_range <= rc.eps_dec_abs) break;
    if (out.terms.size() >= budget) break;

    std::size_t added = 0;
    std::size_t start = rc.range_first;
    while (out.terms.size() < budget && start <= rc.range_last) {
      const auto found = next_term(start);
      if (!found) break;
      out.initial_terms.push_back(found->first);
      out.terms.push_back(found->first);
      ++added;
      start = found->second + 1;
      // One term at a time: refine before searching further along the
      // updated residual.
      if (config.protocol == Protocol::refine_each) {
        refine_all();
        if (out.residual_max_range <= rc.eps_dec_abs) break;
      }
    }
    if (added == 0) break;

    if (config.protocol != Protocol::refine_each) refine_all();
    out.history.push_back(out.residual_max_range);
    ++out.iterations_used;

    if (config.protocol == Protocol::single_pass) break;
  }
  out.converged = out.residual_max_range <= rc.eps_dec_abs;
  return out;
}

}  // namespace shelldec
