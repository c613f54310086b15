#pragma once

#include <functional>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

namespace shelldec {

/// Lower-bound constrained minimization problem.
struct BoundedProblem {
  std::vector<double> initial_point;
  /// Per-variable floor; -infinity (or an empty vector) means unbounded.
  std::vector<double> lower_bounds;
  /// Stop when the projected gradient max-norm <= gradient_tolerance * max(1, |f|).
  double gradient_tolerance = 1e-10;
  /// Stop when (f_prev - f) <= relative_decrease * max(|f_prev|, |f|, tiny).
  double relative_decrease = 1e-15;
  int max_iterations = 500;
  int memory_depth = 7;
};

enum class MinimizeStatus {
  converged,
  max_iterations,
  line_search_failure,
  evaluation_failure,
};

std::string_view to_string(MinimizeStatus status);

struct MinimizeResult {
  std::vector<double> point;
  double value = std::numeric_limits<double>::quiet_NaN();
  MinimizeStatus status = MinimizeStatus::converged;
  int iterations = 0;
  int evaluations = 0;
};

/// Writes the gradient at `x` into `gradient` and returns the value.
using ObjectiveFn =
    std::function<double(std::span<const double> x, std::span<double> gradient)>;

/// Projected limited-memory BFGS for lower bounds.
///
/// Variables sitting on their bound with the gradient pushing outward are
/// frozen for the step; the quasi-Newton direction is built on the free
/// variables and the trial point is projected back onto the feasible set
/// during a backtracking Armijo search. Accepted values never increase and
/// the objective is only evaluated at feasible points.
MinimizeResult minimize(const BoundedProblem& problem, const ObjectiveFn& objective);

}  // namespace shelldec
