#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace msbo {

struct BoxAscentOptions {
  int max_iterations = 200;
  double gradient_tolerance = 1e-6;  // on the projected gradient, infinity norm
  double value_tolerance = 1e-12;    // relative change in objective
  int history = 8;
  int max_backtracks = 30;
};

struct BoxAscentResult {
  Eigen::VectorXd x;
  double value = -std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace detail

/// Projected L-BFGS ascent on a box.
///
/// `objective(x, grad)` returns f(x) and writes the gradient into `grad`
/// (already sized). Variables pinned at a bound with the gradient pointing
/// outward are frozen for the quasi-Newton step; the step itself is
/// backtracked along the projected path until the Armijo condition holds.
template <class Objective>
BoxAscentResult maximize_in_box(Objective&& objective, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                                const Eigen::VectorXd& upper, const BoxAscentOptions& opt = {}) {
  const Eigen::Index n = x0.size();
  BoxAscentResult res;
  res.x = detail::project(x0, lower, upper);
  if (n == 0) {
    Eigen::VectorXd g(0);
    res.value = objective(res.x, g);
    res.converged = true;
    return res;
  }

  // Internally minimise h = -f.
  Eigen::VectorXd g(n);
  double fx = -objective(res.x, g);
  g = -g;
  if (!std::isfinite(fx)) {
    res.value = -fx;
    return res;
  }

  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> mem;  // (s, y)
  Eigen::VectorXd x = res.x;
  Eigen::VectorXd g_new(n);

  for (int it = 0; it < opt.max_iterations; ++it) {
    res.iterations = it + 1;

    Eigen::VectorXd pg = detail::project(x - g, lower, upper) - x;
    if (pg.lpNorm<Eigen::Infinity>() <= opt.gradient_tolerance) {
      res.converged = true;
      break;
    }

    Eigen::Array<bool, Eigen::Dynamic, 1> frozen(n);
    for (Eigen::Index j = 0; j < n; ++j)
      frozen(j) = (x(j) <= lower(j) && g(j) > 0.0) || (x(j) >= upper(j) && g(j) < 0.0);

    Eigen::VectorXd q = g;
    for (Eigen::Index j = 0; j < n; ++j)
      if (frozen(j)) q(j) = 0.0;

    // Two-loop recursion.
    std::vector<double> alpha(mem.size());
    for (std::size_t k = mem.size(); k-- > 0;) {
      const auto& [s, y] = mem[k];
      const double rho = 1.0 / y.dot(s);
      alpha[k] = rho * s.dot(q);
      q -= alpha[k] * y;
    }
    if (!mem.empty()) {
      const auto& [s, y] = mem.back();
      q *= s.dot(y) / y.squaredNorm();
    } else {
      const double gn = q.lpNorm<Eigen::Infinity>();
      if (gn > 0.0) q /= std::max(1.0, gn / (upper - lower).maxCoeff() * 4.0);
    }
    for (std::size_t k = 0; k < mem.size(); ++k) {
      const auto& [s, y] = mem[k];
      const double rho = 1.0 / y.dot(s);
      const double beta = rho * y.dot(q);
      q += s * (alpha[k] - beta);
    }
    Eigen::VectorXd d = -q;
    for (Eigen::Index j = 0; j < n; ++j)
      if (frozen(j)) d(j) = 0.0;

    if (d.dot(g) >= 0.0) {
      mem.clear();
      d = -g;
      for (Eigen::Index j = 0; j < n; ++j)
        if (frozen(j)) d(j) = 0.0;
      const double dn = d.lpNorm<Eigen::Infinity>();
      if (dn > 0.0) d /= std::max(1.0, dn / (upper - lower).maxCoeff() * 4.0);
    }

    double t = 1.0;
    bool accepted = false;
    Eigen::VectorXd x_new;
    double f_new = fx;
    for (int b = 0; b < opt.max_backtracks; ++b) {
      x_new = detail::project(x + t * d, lower, upper);
      f_new = -objective(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * g.dot(x_new - x)) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (mem.empty()) break;
      mem.clear();
      continue;
    }
    g_new = -g_new;

    Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd y = g_new - g;
    if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
      mem.emplace_back(std::move(s), std::move(y));
      if (static_cast<int>(mem.size()) > opt.history) mem.pop_front();
    }

    const double change = std::abs(fx - f_new);
    x = x_new;
    g = g_new;
    const double prev = fx;
    fx = f_new;
    if (change <= opt.value_tolerance * std::max({1.0, std::abs(prev), std::abs(fx)})) {
      res.converged = true;
      break;
    }
  }

  res.x = x;
  res.value = -fx;
  return res;
}

/// Central finite-difference gradient of a scalar function, with the stencil
/// kept inside the box (one-sided at a bound).
template <class F>
Eigen::VectorXd finite_difference_gradient(F&& f, const Eigen::VectorXd& x, double step, const Eigen::VectorXd& lower,
                                           const Eigen::VectorXd& upper) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double hi = std::min(x(j) + step, upper(j));
    const double lo = std::max(x(j) - step, lower(j));
    if (hi <= lo) {
      g(j) = 0.0;
      continue;
    }
    probe(j) = hi;
    const double fp = f(probe);
    probe(j) = lo;
    const double fm = f(probe);
    probe(j) = x(j);
    g(j) = (fp - fm) / (hi - lo);
  }
  return g;
}

}  // namespace msbo
