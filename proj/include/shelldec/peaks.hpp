#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "shelldec/shell.hpp"

namespace shelldec {

/// A local extremum of |f| selected for a new term.
struct PeakLocation {
  std::size_t index = 0;
  int sign = 1;          ///< sign of f at the extremum
  bool at_edge = false;  ///< maximum at the last grid point, still rising
};

/// Peak with its fitting window [first, last] (inclusive grid indices).
struct PeakRegion {
  std::size_t peak = 0;
  std::size_t first = 0;
  std::size_t last = 0;
  int sign = 1;
  bool at_edge = false;
};

/// Lowest-index acceptable extremum of |values| at or after `start`, with
/// |f| > eps_dec_abs, searching no further than `scan_end` (inclusive,
/// defaults to the last value). A peak still rising at `scan_end` is
/// followed into the values beyond it when there are any; otherwise it is
/// reported as an edge peak.
std::optional<PeakLocation> find_next_peak(
    std::span<const double> values, double eps_dec_abs, std::size_t start = 0,
    std::optional<std::size_t> scan_end = std::nullopt);

/// Fitting window around a peak: each side ends at the discrete inflection
/// point (sign change of the second difference) or before the value drops
/// below eps_peak_abs, whichever comes first.
PeakRegion peak_extent(std::span<const double> values, const PeakLocation& peak,
                       double eps_peak_abs);

/// Accumulators of the closed-form fit y ~ u - v * x^2.
struct LogFitSums {
  double n12 = 0.0;
  double sr2 = 0.0;
  double sr4 = 0.0;
  double sy = 0.0;
  double syr2 = 0.0;

  void add(double x, double y) {
    const double x2 = x * x;
    n12 += 1.0;
    sr2 += x2;
    sr4 += x2 * x2;
    sy += y;
    syr2 += y * x2;
  }
};

struct LogFit {
  double u = 0.0;
  double v = 0.0;
};

/// Least-squares (u, v) minimizing sum [(u - v x_i^2) - y_i]^2. Returns
/// nullopt when the system is singular (fewer than two distinct x^2).
std::optional<LogFit> solve_log_ls(std::span<const double> x,
                                   std::span<const double> y);
std::optional<LogFit> solve_log_ls(const LogFitSums& sums);

/// Initial (R, B, C) for the peak described by `region`.
///
/// R is the peak grid position; B and C come from a logarithmic Gaussian
/// fit over the region (in r^2 for an origin peak, in (r - R)^2 otherwise).
/// Regions of at most two points, or fits that are not concave, fall back
/// to B = b_min with C matching the peak height. The sign of C follows the
/// sign of the peak.
ShellTerm estimate_term(CurveView curve, const PeakRegion& region,
                        double b_min);

}  // namespace shelldec
