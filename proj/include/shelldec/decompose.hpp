#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "shelldec/lbfgsb.hpp"
#include "shelldec/shell.hpp"

namespace shelldec {

enum class Protocol {
  iterative,    ///< all peaks of the residual per pass, joint refinement, repeat
  single_pass,  ///< one pass of the above, whatever the residual
  refine_each,  ///< one new term at a time, refined before the next search
};

std::string_view to_string(Protocol protocol);
/// Throws std::invalid_argument for an unknown name.
Protocol parse_protocol(std::string_view name);

struct DecomposeConfig {
  double eps_dec = 1e-3;
  bool eps_dec_relative = true;  ///< eps_dec is a fraction of |f(0)|
  double eps_peak = 5e-3;        ///< relative to |f(0)|
  double eps_term = 1e-13;       ///< relative to |f(0)|
  int max_peaks = 100;
  Protocol protocol = Protocol::iterative;
  /// Upper bound on search/refine passes, independent of max_peaks.
  int max_passes = 60;

  /// Bounds; derived from the grid step and eps_dec when unset.
  std::optional<double> b_min;
  std::optional<double> c_min;

  /// Interval [r_lo, r_hi] on which the accuracy target is enforced.
  std::optional<std::pair<double, double>> range;

  int memory_depth = 7;
  double gradient_tolerance = 1e-10;
  double relative_decrease = 1e-15;
  int max_iterations = 500;

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
};

/// Thresholds and bounds resolved for one curve.
struct ResolvedConfig {
  double eps_dec_abs = 0.0;
  double eps_peak_abs = 0.0;
  double eps_term_abs = 0.0;
  double b_min = 0.0;
  double c_min = 0.0;
  std::size_t range_first = 0;
  std::size_t range_last = 0;
};

ResolvedConfig resolve_config(const SampledCurve& curve,
                              const DecomposeConfig& config);

struct Decomposition {
  std::string label;
  std::vector<ShellTerm> terms;
  std::vector<ShellTerm> initial_terms;
  double residual_max_full = 0.0;
  double residual_max_range = 0.0;
  int iterations_used = 0;
  bool converged = false;
  /// residual_max_range after each pass, in order.
  std::vector<double> history;
  ResolvedConfig resolved;
};

/// Half the sum of squared differences between the curve and the model.
double score(CurveView curve, std::span<const ShellTerm> terms);

/// Gradient of `score`, laid out as (dR, dB, dC) per term.
std::vector<double> score_gradient(CurveView curve, std::span<const ShellTerm> terms);

/// Both at once; `gradient` must hold 3 * terms.size() values.
double score_with_gradient(CurveView curve, std::span<const ShellTerm> terms,
                           std::span<double> gradient);

struct RefineResult {
  std::vector<ShellTerm> terms;
  double score_before = 0.0;
  double score_after = 0.0;
  MinimizeStatus status = MinimizeStatus::converged;
  int iterations = 0;
};

/// Joint bounded refinement of all term parameters against `curve`:
/// R >= 0, B >= b_min and |C| >= c_min with the sign of each C fixed.
RefineResult refine(CurveView curve, std::span<const ShellTerm> terms,
                    double b_min, double c_min, const DecomposeConfig& config);

/// Refinement with bounds taken from resolve_config(curve, config).
RefineResult refine(const SampledCurve& curve, std::span<const ShellTerm> terms,
                    const DecomposeConfig& config);

/// Full shell decomposition of `curve` per config.protocol.
Decomposition decompose(const SampledCurve& curve, const DecomposeConfig& config);

}  // namespace shelldec
