#include "shelldec/lbfgsb.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace shelldec {

std::string_view to_string(MinimizeStatus status) {
  switch (status) {
    case MinimizeStatus::converged: return "converged";
    case MinimizeStatus::max_iterations: return "max-iterations";
    case MinimizeStatus::line_search_failure: return "line-search-failure";
    case MinimizeStatus::evaluation_failure: return "evaluation-failure";
  }
  return "unknown";
}

namespace {

bool all_finite(double value, std::span<const double> g) {
  if (!std::isfinite(value)) return false;
  return std::all_of(g.begin(), g.end(), [](double v) { return std::isfinite(v); });
}

double dot(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

// Small dense square matrix, row-major, with an LU solve.
class DenseLu {
 public:
  explicit DenseLu(std::size_t n) : n_(n), a_(n * n, 0.0), pivot_(n) {}

  double& at(std::size_t i, std::size_t j) { return a_[i * n_ + j]; }

  // Factorizes in place; false when the matrix is numerically singular.
  bool factor() {
    double largest = 0.0;
    for (double v : a_) largest = std::max(largest, std::abs(v));
    for (std::size_t k = 0; k < n_; ++k) {
      std::size_t p = k;
      for (std::size_t i = k + 1; i < n_; ++i)
        if (std::abs(at(i, k)) > std::abs(at(p, k))) p = i;
      if (!(std::abs(at(p, k)) > 1e-14 * largest)) return false;
      pivot_[k] = p;
      if (p != k)
        for (std::size_t j = 0; j < n_; ++j) std::swap(at(k, j), at(p, j));
      for (std::size_t i = k + 1; i < n_; ++i) {
        at(i, k) /= at(k, k);
        for (std::size_t j = k + 1; j < n_; ++j) at(i, j) -= at(i, k) * at(k, j);
      }
    }
    return true;
  }

  void solve(std::span<double> b) const {
    for (std::size_t k = 0; k < n_; ++k) std::swap(b[k], b[pivot_[k]]);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < i; ++j) b[i] -= a_[i * n_ + j] * b[j];
    for (std::size_t i = n_; i-- > 0;) {
      for (std::size_t j = i + 1; j < n_; ++j) b[i] -= a_[i * n_ + j] * b[j];
      b[i] /= a_[i * n_ + i];
    }
  }

 private:
  std::size_t n_;
  std::vector<double> a_;
  std::vector<std::size_t> pivot_;
};

// L-BFGS-B for lower bounds: generalized Cauchy point along the projected
// gradient path, quasi-Newton minimization over the variables left free
// there, then a backtracking search towards that point. The Hessian model
// uses the compact form B = theta I - W M W^T with W = [Y, theta S].
class Lbfgsb {
 public:
  Lbfgsb(const BoundedProblem& problem, const ObjectiveFn& objective)
      : problem_(problem), objective_(objective), n_(problem.initial_point.size()) {
    if (problem.memory_depth < 1)
      throw std::invalid_argument("memory_depth must be at least 1");
    lower_ = problem.lower_bounds;
    if (lower_.empty()) lower_.assign(n_, -std::numeric_limits<double>::infinity());
    if (lower_.size() != n_)
      throw std::invalid_argument("lower_bounds size does not match the point");
  }

  MinimizeResult run() {
    MinimizeResult result;
    std::vector<double> x = problem_.initial_point;
    for (std::size_t i = 0; i < n_; ++i) x[i] = std::max(x[i], lower_[i]);
    std::vector<double> g(n_);
    double f = evaluate(x, g);
    result.evaluations = 1;
    result.point = x;
    result.value = f;
    if (!all_finite(f, g)) {
      result.status = MinimizeStatus::evaluation_failure;
      return result;
    }

    std::vector<double> d(n_), trial(n_), trial_g(n_);
    for (int iter = 0; iter < problem_.max_iterations; ++iter) {
      result.iterations = iter;
      if (projected_gradient_norm(x, g) <=
          problem_.gradient_tolerance * std::max(1.0, std::abs(f))) {
        result.status = MinimizeStatus::converged;
        return finish(result, x, f);
      }

      bool have_direction = direction(x, g, d);
      double slope = have_direction ? dot(g, d) : 0.0;
      if (!(slope < 0.0) && !s_.empty()) {
        clear_memory();
        have_direction = direction(x, g, d);
        slope = have_direction ? dot(g, d) : 0.0;
      }
      if (!(slope < 0.0)) {
        // Nothing left to gain inside the feasible set.
        result.status = MinimizeStatus::converged;
        return finish(result, x, f);
      }

      double step = 1.0;
      if (s_.empty()) step = std::min(1.0, 1.0 / std::sqrt(dot(d, d)));

      bool accepted = false;
      double trial_f = f;
      for (int ls = 0; ls < 60; ++ls) {
        bool moved = false;
        for (std::size_t i = 0; i < n_; ++i) {
          trial[i] = std::max(lower_[i], x[i] + step * d[i]);
          moved = moved || trial[i] != x[i];
        }
        if (!moved) break;
        trial_f = evaluate(trial, trial_g);
        ++result.evaluations;
        if (!all_finite(trial_f, trial_g)) {
          result.status = MinimizeStatus::evaluation_failure;
          return finish(result, x, f);
        }
        if (trial_f <= f + 1e-4 * step * slope) {
          accepted = true;
          break;
        }
        // Safeguarded minimizer of the interpolating quadratic.
        const double curvature = trial_f - f - step * slope;
        const double next =
            curvature > 0.0 ? -slope * step * step / (2.0 * curvature) : 0.5 * step;
        step = std::clamp(next, 0.1 * step, 0.5 * step);
      }

      if (!accepted) {
        if (!s_.empty()) {
          clear_memory();
          continue;
        }
        result.status = MinimizeStatus::line_search_failure;
        return finish(result, x, f);
      }

      store_pair(x, g, trial, trial_g);
      const double previous = f;
      x.swap(trial);
      g.swap(trial_g);
      f = trial_f;
      if (previous - f <= problem_.relative_decrease *
                              std::max({std::abs(previous), std::abs(f), 1e-300})) {
        result.iterations = iter + 1;
        result.status = MinimizeStatus::converged;
        return finish(result, x, f);
      }
    }
    result.iterations = problem_.max_iterations;
    result.status = MinimizeStatus::max_iterations;
    return finish(result, x, f);
  }

 private:
  double evaluate(std::span<const double> x, std::span<double> g) {
    std::fill(g.begin(), g.end(), 0.0);
    return objective_(x, g);
  }

  double projected_gradient_norm(std::span<const double> x,
                                 std::span<const double> g) const {
    double norm = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      double gi = g[i];
      if (gi > 0.0) gi = std::min(gi, x[i] - lower_[i]);
      norm = std::max(norm, std::abs(gi));
    }
    return norm;
  }

  void clear_memory() {
    s_.clear();
    y_.clear();
    theta_ = 1.0;
  }

  void store_pair(std::span<const double> x, std::span<const double> g,
                  std::span<const double> x_next, std::span<const double> g_next) {
    std::vector<double> s(n_), y(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      s[i] = x_next[i] - x[i];
      y[i] = g_next[i] - g[i];
    }
    const double sy = dot(s, y), yy = dot(y, y);
    if (!(sy > 2.2e-16 * yy)) return;
    s_.push_back(std::move(s));
    y_.push_back(std::move(y));
    if (s_.size() > static_cast<std::size_t>(problem_.memory_depth)) {
      s_.pop_front();
      y_.pop_front();
    }
    theta_ = yy / sy;
  }

  // Row i of W = [Y, theta S].
  void w_row(std::size_t i, std::span<double> out) const {
    const std::size_t k = s_.size();
    for (std::size_t j = 0; j < k; ++j) {
      out[j] = y_[j][i];
      out[k + j] = theta_ * s_[j][i];
    }
  }

  // K = M^{-1} = [[-D, L^T], [L, theta S^T S]].
  bool build_middle(DenseLu& lu) const {
    const std::size_t k = s_.size();
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = 0; b < k; ++b) {
        const double sy = dot(s_[a], y_[b]);
        if (a == b) lu.at(a, b) = -sy;
        if (a > b) {
          lu.at(k + a, b) = sy;
          lu.at(b, k + a) = sy;
        }
        lu.at(k + a, k + b) = theta_ * dot(s_[a], s_[b]);
      }
    }
    return lu.factor();
  }

  // Search direction towards the subspace minimizer; false when the
  // Cauchy point coincides with x.
  bool direction(std::span<const double> x, std::span<const double> g, std::span<double> d) {
    const std::size_t k = s_.size(), k2 = 2 * k;
    DenseLu middle(k2);
    if (k > 0 && !build_middle(middle)) {
      clear_memory();
      return direction(x, g, d);
    }
    auto apply_m = [&](std::span<const double> v, std::span<double> out) {
      std::copy(v.begin(), v.end(), out.begin());
      if (k2 > 0) middle.solve(out);
    };

    // Breakpoints of the projected path x(t) = P(x - t g).
    std::vector<double> t(n_), dir(n_);
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < n_; ++i) {
      dir[i] = -g[i];
      if (g[i] > 0.0 && std::isfinite(lower_[i])) {
        t[i] = (x[i] - lower_[i]) / g[i];
      } else {
        t[i] = std::numeric_limits<double>::infinity();
      }
      if (t[i] == 0.0) dir[i] = 0.0;
      else if (std::isfinite(t[i])) order.push_back(i);
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return t[a] != t[b] ? t[a] < t[b] : a < b;
    });

    std::vector<double> xc(x.begin(), x.end());
    std::vector<double> p(k2, 0.0), c(k2, 0.0), wb(k2), mp(k2), mc(k2), mw(k2);
    for (std::size_t i = 0; i < n_; ++i) {
      if (dir[i] == 0.0 || k2 == 0) continue;
      w_row(i, wb);
      for (std::size_t j = 0; j < k2; ++j) p[j] += wb[j] * dir[i];
    }
    double fp = -dot(dir, dir);
    apply_m(p, mp);
    double fpp = -theta_ * fp - dot(p, mp);
    const double fpp_floor = 1e-14 * std::abs(fp) * theta_;
    fpp = std::max(fpp, fpp_floor);
    double dt_min = fpp > 0.0 ? -fp / fpp : 0.0;
    double t_old = 0.0;

    std::vector<char> at_bound(n_, 0);
    for (std::size_t i = 0; i < n_; ++i) at_bound[i] = t[i] == 0.0;

    std::size_t next = 0;
    for (; next < order.size(); ++next) {
      if (fp >= 0.0) break;
      const std::size_t b = order[next];
      const double dt = t[b] - t_old;
      if (dt_min < dt) break;
      const double gb = g[b];
      const double zb = lower_[b] - x[b];
      xc[b] = lower_[b];
      at_bound[b] = 1;
      for (std::size_t j = 0; j < k2; ++j) c[j] += dt * p[j];
      double wmc = 0.0, wmp = 0.0, wmw = 0.0;
      if (k2 > 0) {
        w_row(b, wb);
        apply_m(c, mc);
        apply_m(wb, mw);
        wmc = dot(wb, mc);
        wmp = dot(wb, mp);
        wmw = dot(wb, mw);
      }
      fp += dt * fpp + gb * gb + theta_ * gb * zb - gb * wmc;
      fpp += -theta_ * gb * gb - 2.0 * gb * wmp - gb * gb * wmw;
      fpp = std::max(fpp, 1e-14 * theta_ * gb * gb);
      for (std::size_t j = 0; j < k2; ++j) p[j] += gb * wb[j];
      if (k2 > 0) apply_m(p, mp);
      dir[b] = 0.0;
      dt_min = -fp / fpp;
      t_old = t[b];
    }
    dt_min = std::max(dt_min, 0.0);
    t_old += dt_min;
    for (std::size_t i = 0; i < n_; ++i)
      if (!at_bound[i]) xc[i] = x[i] + t_old * dir[i];
    for (std::size_t j = 0; j < k2; ++j) c[j] += dt_min * p[j];

    // Quasi-Newton step over the variables free at the Cauchy point.
    std::vector<std::size_t> free_set;
    for (std::size_t i = 0; i < n_; ++i)
      if (!at_bound[i]) free_set.push_back(i);

    std::vector<double> xbar = xc;
    if (!free_set.empty()) {
      std::vector<double> rc(free_set.size());
      if (k2 > 0) apply_m(c, mc);
      for (std::size_t a = 0; a < free_set.size(); ++a) {
        const std::size_t i = free_set[a];
        double wmc = 0.0;
        if (k2 > 0) {
          w_row(i, wb);
          wmc = dot(wb, mc);
        }
        rc[a] = g[i] + theta_ * (xc[i] - x[i]) - wmc;
      }
      std::vector<double> dhat(free_set.size());
      for (std::size_t a = 0; a < free_set.size(); ++a) dhat[a] = -rc[a] / theta_;
      if (k2 > 0) {
        // dhat = -(1/theta) rc - (1/theta^2) Z^T W N^{-1} M W^T Z rc,
        // N = I - (1/theta) M W^T Z Z^T W.
        std::vector<double> v(k2, 0.0), a_mat(k2 * k2, 0.0);
        for (std::size_t a = 0; a < free_set.size(); ++a) {
          w_row(free_set[a], wb);
          for (std::size_t j = 0; j < k2; ++j) {
            v[j] += wb[j] * rc[a];
            for (std::size_t l = 0; l < k2; ++l) a_mat[j * k2 + l] += wb[j] * wb[l];
          }
        }
        std::vector<double> mv(k2);
        apply_m(v, mv);
        DenseLu n_mat(k2);
        std::vector<double> col(k2), mcol(k2);
        for (std::size_t l = 0; l < k2; ++l) {
          for (std::size_t j = 0; j < k2; ++j) col[j] = a_mat[j * k2 + l];
          apply_m(col, mcol);
          for (std::size_t j = 0; j < k2; ++j)
            n_mat.at(j, l) = (j == l ? 1.0 : 0.0) - mcol[j] / theta_;
        }
        if (n_mat.factor()) {
          n_mat.solve(mv);
          for (std::size_t a = 0; a < free_set.size(); ++a) {
            w_row(free_set[a], wb);
            dhat[a] -= dot(wb, mv) / (theta_ * theta_);
          }
        }
      }
      // Largest step in [0, 1] keeping the free variables feasible.
      double alpha = 1.0;
      for (std::size_t a = 0; a < free_set.size(); ++a) {
        const std::size_t i = free_set[a];
        if (dhat[a] < 0.0 && std::isfinite(lower_[i]))
          alpha = std::min(alpha, (lower_[i] - xc[i]) / dhat[a]);
      }
      alpha = std::max(alpha, 0.0);
      for (std::size_t a = 0; a < free_set.size(); ++a) {
        const std::size_t i = free_set[a];
        xbar[i] = std::max(lower_[i], xc[i] + alpha * dhat[a]);
      }
    }

    bool nonzero = false;
    for (std::size_t i = 0; i < n_; ++i) {
      d[i] = xbar[i] - x[i];
      nonzero = nonzero || d[i] != 0.0;
    }
    return nonzero;
  }

  MinimizeResult& finish(MinimizeResult& result, const std::vector<double>& x,
                         double f) const {
    result.point = x;
    result.value = f;
    return result;
  }

  const BoundedProblem& problem_;
  const ObjectiveFn& objective_;
  std::size_t n_;
  std::vector<double> lower_;
  std::deque<std::vector<double>> s_, y_;
  double theta_ = 1.0;
};

}  // namespace

MinimizeResult minimize(const BoundedProblem& problem, const ObjectiveFn& objective) {
  if (problem.initial_point.empty())
    throw std::invalid_argument("minimize: empty initial point");
  return Lbfgsb(problem, objective).run();
}

}  // namespace shelldec
