#pragma once

// Independent reference computations used to check the library: dense
// direct solves, plain Monte Carlo, brute-force grids. Deliberately naive.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "msbo/gp.hpp"
#include "msbo/random.hpp"

namespace oracle {

struct Moments {
  double mean;
  double variance;
};

inline double rbf(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const msbo::GpHyperparams& hp) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < a.size(); ++j) acc += std::pow((a(j) - b(j)) / hp.lengthscales(j), 2);
  return hp.output_scale * std::exp(-acc / 2);
}

/// Posterior by explicit matrix inverse. `jitter` is relative to the output
/// scale, matching the regularisation the model reports it used.
inline Moments gp_posterior(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const msbo::GpHyperparams& hp,
                            double jitter, const Eigen::VectorXd& q) {
  const Eigen::Index n = x.rows();
  const double mu = y.mean();
  double sd = std::sqrt((y.array() - mu).square().sum() / static_cast<double>(n));
  sd = std::max(sd, 1e-12);
  const Eigen::VectorXd ys = (y.array() - mu) / sd;
  Eigen::MatrixXd k(n, n);
  Eigen::VectorXd kq(n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) k(a, b) = rbf(x.row(a), x.row(b), hp);
    k(a, a) += hp.output_scale * jitter + hp.noise_variance;
    kq(a) = rbf(x.row(a), q, hp);
  }
  const Eigen::MatrixXd kinv = k.fullPivLu().inverse();
  const double m = kq.dot(kinv * ys);
  const double v = hp.output_scale - kq.dot(kinv * kq);
  return {m * sd + mu, std::max(v, 0.0) * sd * sd};
}

/// Log marginal likelihood by explicit inverse and determinant.
inline double log_marginal_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& ys, const msbo::GpHyperparams& hp,
                                      double jitter) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) k(a, b) = rbf(x.row(a), x.row(b), hp);
    k(a, a) += hp.output_scale * jitter + hp.noise_variance;
  }
  const auto lu = k.fullPivLu();
  return -0.5 * ys.dot(lu.inverse() * ys) - 0.5 * std::log(lu.determinant()) -
         0.5 * static_cast<double>(n) * std::log(2 * M_PI);
}

/// Plain Monte-Carlo EI of N(mean, std^2) with its standard error.
inline Moments mc_expected_improvement(double mean, double sd, double incumbent, std::size_t draws, std::uint64_t seed) {
  msbo::StreamRng r(seed);
  double s = 0, s2 = 0;
  for (std::size_t i = 0; i < draws; ++i) {
    const double u = std::max(0.0, mean + sd * r.normal() - incumbent);
    s += u;
    s2 += u * u;
  }
  const double n = static_cast<double>(draws);
  const double m = s / n;
  return {m, std::max(0.0, (s2 / n - m * m)) / n};  // variance of the mean
}

inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
    i = j + 1;
  }
  return r;
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n, mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return saa > 0 && sbb > 0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

/// Two-sided one-sample Kolmogorov-Smirnov statistic against U(0,1).
inline double ks_uniform(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    d = std::max({d, static_cast<double>(i + 1) / n - v[i], v[i] - static_cast<double>(i) / n});
  return d;
}

/// Nadaraya-Watson regression with a fixed Gaussian bandwidth; R^2 on a test set.
inline double kernel_regression_r2(const Eigen::MatrixXd& xtr, const Eigen::VectorXd& ytr, const Eigen::MatrixXd& xte,
                                   const Eigen::VectorXd& yte, double bandwidth) {
  double ss_res = 0.0, ss_tot = 0.0;
  const double ym = yte.mean();
  for (Eigen::Index i = 0; i < xte.rows(); ++i) {
    double wsum = 0.0, acc = 0.0;
    for (Eigen::Index j = 0; j < xtr.rows(); ++j) {
      const double w = std::exp(-(xte.row(i) - xtr.row(j)).squaredNorm() / (2 * bandwidth * bandwidth));
      wsum += w;
      acc += w * ytr(j);
    }
    const double pred = wsum > 0 ? acc / wsum : ytr.mean();
    ss_res += (pred - yte(i)) * (pred - yte(i));
    ss_tot += (ym - yte(i)) * (ym - yte(i));
  }
  return ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
}

}  // namespace oracle
