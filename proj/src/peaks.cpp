#include "shelldec/peaks.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace shelldec {

namespace {

constexpr double kPi = std::numbers::pi;

int sign_of(double v) { return v < 0.0 ? -1 : 1; }

// Signed second difference at n; the radial function is even, so the
// value left of r_0 mirrors r_1.
double second_difference(std::span<const double> f, std::size_t n, int sign) {
  const double left = n == 0 ? f[1] : f[n - 1];
  return sign * (left - 2.0 * f[n] + f[n + 1]);
}

}  // namespace

std::optional<PeakLocation> find_next_peak(std::span<const double> values,
                                           double eps_dec_abs,
                                           std::size_t start,
                                           std::optional<std::size_t> scan_end) {
  if (values.size() < 2) return std::nullopt;
  const std::size_t last = values.size() - 1;
  const std::size_t end = std::min(scan_end.value_or(last), last);

  for (std::size_t n = start; n <= end; ++n) {
    const double here_abs = std::abs(values[n]);
    if (!(here_abs > eps_dec_abs)) continue;
    const int s = sign_of(values[n]);

    if (n == 0) {
      if (here_abs >= std::abs(values[1])) return PeakLocation{0, s, false};
      continue;
    }
    const double here = s * values[n];
    if (!(here > s * values[n - 1])) continue;

    // Leftmost index of a plateau is the peak.
    std::size_t m = n + 1;
    while (m <= last && values[m] == values[n]) ++m;

    if (m > last) return PeakLocation{n, s, true};
    if (s * values[m] < here) return PeakLocation{n, s, false};

    if (n == end && end < last) {
      // Still rising at the end of the scan window: follow the lobe into
      // the values known beyond it.
      std::size_t k = m;
      while (k < last && s * values[k + 1] >= s * values[k]) ++k;
      // Step back to the leftmost point of a trailing plateau.
      std::size_t p = k;
      while (p > m && values[p - 1] == values[k]) --p;
      return PeakLocation{p, s, k == last && s * values[k] > s * values[k - 1]};
    }
  }
  return std::nullopt;
}

PeakRegion peak_extent(std::span<const double> values, const PeakLocation& peak,
                       double eps_peak_abs) {
  const std::size_t last = values.size() - 1;
  const int s = peak.sign;
  PeakRegion region{peak.index, peak.index, peak.index, s, peak.at_edge};

  if (peak.at_edge || peak.index == last) {
    region.last = last;
  } else {
    for (std::size_t n = peak.index + 1; n <= last; ++n) {
      if (s * values[n] < eps_peak_abs) {
        region.last = n - 1;
        break;
      }
      if (n == last) {
        region.last = last;
        break;
      }
      const double d2 = second_difference(values, n, s);
      if (d2 > 0.0) {
        // Inflection between n-1 and n; keep the closer of the two.
        const double prev = second_difference(values, n - 1, s);
        const double frac = prev < 0.0 ? prev / (prev - d2) : 0.0;
        region.last = frac >= 0.5 ? n : n - 1;
        break;
      }
      region.last = n;
    }
  }

  if (peak.index == 0) {
    region.first = 0;
    return region;
  }
  for (std::size_t n = peak.index; n-- > 0;) {
    if (s * values[n] < eps_peak_abs) {
      region.first = n + 1;
      break;
    }
    if (n == 0) {
      region.first = 0;
      break;
    }
    const double d2 = second_difference(values, n, s);
    if (d2 > 0.0) {
      const double prev = second_difference(values, n + 1, s);
      const double frac = prev < 0.0 ? prev / (prev - d2) : 0.0;
      region.first = frac >= 0.5 ? n : n + 1;
      break;
    }
    region.first = n;
  }
  return region;
}

std::optional<LogFit> solve_log_ls(const LogFitSums& sums) {
  if (sums.n12 < 2.0) return std::nullopt;
  const double den = sums.sr2 * sums.sr2 - sums.n12 * sums.sr4;
  // Cauchy-Schwarz: den <= 0 with equality iff all x^2 coincide.
  if (!(std::abs(den) > 1e-12 * sums.n12 * sums.sr4)) return std::nullopt;
  LogFit fit;
  fit.u = (sums.sr2 * sums.syr2 - sums.sr4 * sums.sy) / den;
  fit.v = (sums.n12 * sums.syr2 - sums.sr2 * sums.sy) / den;
  return fit;
}

std::optional<LogFit> solve_log_ls(std::span<const double> x,
                                   std::span<const double> y) {
  if (x.size() != y.size())
    throw std::invalid_argument("solve_log_ls: x and y differ in length");
  LogFitSums sums;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
      throw std::invalid_argument("solve_log_ls: non-finite point");
    sums.add(x[i], y[i]);
  }
  return solve_log_ls(sums);
}

ShellTerm estimate_term(CurveView curve, const PeakRegion& region,
                        double b_min) {
  if (!(b_min > 0.0)) throw std::invalid_argument("b_min must be positive");
  if (region.first > region.peak || region.peak > region.last ||
      region.last >= curve.size())
    throw std::invalid_argument("peak region outside the curve");

  const int s = region.sign;
  const auto& r = curve.r;
  const auto& f = curve.f;
  if (!(s * f[region.peak] > 0.0))
    throw std::invalid_argument("peak value has the wrong sign");

  // ln() needs positive values: keep the positive run around the peak.
  std::size_t first = region.peak;
  while (first > region.first && s * f[first - 1] > 0.0) --first;
  std::size_t last = region.peak;
  while (last < region.last && s * f[last + 1] > 0.0) ++last;

  ShellTerm term;
  term.radius = r[region.peak];
  const bool origin = term.radius == 0.0;
  const double R = term.radius;

  bool fitted = false;
  if (last - first >= 2) {
    LogFitSums sums;
    for (std::size_t n = first; n <= last; ++n) {
      const double value = s * f[n];
      if (origin) {
        sums.add(r[n], std::log(value));
      } else {
        sums.add(r[n] - R, std::log(2.0 * value * R * R * std::sqrt(kPi)));
      }
    }
    if (auto fit = solve_log_ls(sums); fit && fit->v > 0.0) {
      const double blur = 4.0 * kPi * kPi / fit->v;
      if (blur >= b_min && std::isfinite(blur)) {
        term.blur = blur;
        term.weight = origin ? std::pow(kPi / fit->v, 1.5) * std::exp(fit->u)
                             : 2.0 * kPi * std::exp(fit->u) / std::sqrt(fit->v);
        fitted = std::isfinite(term.weight);
      }
    }
  }

  if (!fitted) {
    // Too narrow: B at its floor, height matching the peak value.
    term.blur = b_min;
    const double height = s * f[region.peak];
    term.weight = origin ? height * std::pow(b_min / (4.0 * kPi), 1.5)
                         : 2.0 * height * R * R * std::sqrt(kPi * b_min);
  }
  term.weight *= s;
  return term;
}

}  // namespace shelldec
