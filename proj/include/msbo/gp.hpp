#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "msbo/optimize.hpp"
#include "msbo/random.hpp"
#include "msbo/sobol.hpp"

namespace msbo {

class GpError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace gp_limits {
inline constexpr double min_lengthscale = 1e-3;
inline constexpr double max_lengthscale = 1e3;
inline constexpr double min_output_scale = 1e-6;
inline constexpr double max_output_scale = 1e3;
inline constexpr double min_noise = 1e-8;
inline constexpr double max_noise = 10.0;
// Diagonal jitter, relative to output_scale, escalated x10 on failure.
inline constexpr double jitter_start = 1e-8;
inline constexpr double jitter_max = 1e-4;
inline constexpr double std_floor = 1e-12;
}  // namespace gp_limits

/// Scaled RBF kernel with one lengthscale per input dimension (ARD).
struct GpHyperparams {
  Eigen::VectorXd lengthscales;
  double output_scale = 1.0;
  double noise_variance = 1e-4;

  static GpHyperparams defaults(Eigen::Index dim) {
    return {Eigen::VectorXd::Constant(dim, 0.5), 1.0, 1e-4};
  }

  [[nodiscard]] Eigen::Index dim() const noexcept { return lengthscales.size(); }

  /// Packed as [log l_1 .. log l_d, log output_scale, log noise_variance].
  [[nodiscard]] Eigen::VectorXd to_log() const {
    Eigen::VectorXd t(dim() + 2);
    t.head(dim()) = lengthscales.array().log().matrix();
    t(dim()) = std::log(output_scale);
    t(dim() + 1) = std::log(noise_variance);
    return t;
  }

  static GpHyperparams from_log(const Eigen::VectorXd& t) {
    const Eigen::Index d = t.size() - 2;
    return {t.head(d).array().exp().matrix(), std::exp(t(d)), std::exp(t(d + 1))};
  }
};

inline double kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const GpHyperparams& hp) {
  double r2 = 0.0;
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    const double z = (a(j) - b(j)) / hp.lengthscales(j);
    r2 += z * z;
  }
  return hp.output_scale * std::exp(-0.5 * r2);
}

/// Cross-covariance between the rows of `a` and the rows of `b`.
inline Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const GpHyperparams& hp) {
  const Eigen::RowVectorXd inv_l = hp.lengthscales.cwiseInverse().transpose();
  const Eigen::MatrixXd as = a.array().rowwise() * inv_l.array();
  const Eigen::MatrixXd bs = b.array().rowwise() * inv_l.array();
  Eigen::MatrixXd d2 = (-2.0 * as * bs.transpose());
  d2.colwise() += as.rowwise().squaredNorm();
  d2.rowwise() += bs.rowwise().squaredNorm().transpose();
  return (hp.output_scale * (-0.5 * d2.array().max(0.0)).exp()).matrix();
}

/// Zero-mean, unit-variance transform of training targets.
struct Standardisation {
  double mean = 0.0;
  double std = 1.0;

  static Standardisation of(const Eigen::VectorXd& y) {
    Standardisation s;
    const auto n = static_cast<double>(y.size());
    s.mean = y.mean();
    const double var = (y.array() - s.mean).square().sum() / n;
    s.std = std::max(std::sqrt(var), gp_limits::std_floor);
    return s;
  }

  [[nodiscard]] Eigen::VectorXd apply(const Eigen::VectorXd& y) const { return ((y.array() - mean) / std).matrix(); }
  [[nodiscard]] double restore(double v) const { return v * std + mean; }
};

struct LikelihoodEval {
  double value = 0.0;
  Eigen::VectorXd gradient;  // d value / d log theta, packed like GpHyperparams::to_log()
};

namespace detail {

struct Factorised {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;  // relative to output_scale
};

/// Scaled kernel part s*C of the training Gram matrix (no noise, no jitter).
inline Eigen::MatrixXd training_gram(const Eigen::MatrixXd& x, const GpHyperparams& hp) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    k(a, a) = hp.output_scale;
    for (Eigen::Index b = 0; b < a; ++b) {
      const double v = kernel(x.row(a).transpose(), x.row(b).transpose(), hp);
      k(a, b) = v;
      k(b, a) = v;
    }
  }
  return k;
}

/// Factorises s*(C + j I) + noise*I, escalating j until the Cholesky succeeds.
inline Factorised factorise(const Eigen::MatrixXd& gram, const GpHyperparams& hp) {
  Factorised f;
  for (double j = gp_limits::jitter_start; j <= gp_limits::jitter_max * 1.0000001; j *= 10.0) {
    Eigen::MatrixXd k = gram;
    k.diagonal().array() += hp.output_scale * j + hp.noise_variance;
    f.llt.compute(k);
    if (f.llt.info() == Eigen::Success) {
      f.jitter = j;
      return f;
    }
  }
  throw GpError("Gram matrix not positive definite after jitter escalation");
}

}  // namespace detail

/// Log marginal likelihood of standardised targets under `hp`, with its
/// analytic gradient with respect to the log hyperparameters.
inline LikelihoodEval log_marginal_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GpHyperparams& hp,
                                              bool with_gradient = true) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  const Eigen::MatrixXd gram = detail::training_gram(x, hp);
  const auto f = detail::factorise(gram, hp);
  const Eigen::VectorXd alpha = f.llt.solve(y);
  const Eigen::MatrixXd& l = f.llt.matrixLLT();
  const double log_det = 2.0 * l.diagonal().array().log().sum();

  LikelihoodEval out;
  out.value = -0.5 * y.dot(alpha) - 0.5 * log_det - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  if (!with_gradient) return out;

  // W = alpha alpha^T - K^{-1};  dL/dtheta = 1/2 tr(W dK/dtheta)
  Eigen::MatrixXd w = -f.llt.solve(Eigen::MatrixXd::Identity(n, n));
  w.noalias() += alpha * alpha.transpose();

  out.gradient.resize(d + 2);
  for (Eigen::Index k = 0; k < d; ++k) {
    const double inv_l2 = 1.0 / (hp.lengthscales(k) * hp.lengthscales(k));
    double acc = 0.0;
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = 0; b < a; ++b) {
        const double diff = x(a, k) - x(b, k);
        acc += w(a, b) * gram(a, b) * diff * diff * inv_l2;
      }
    out.gradient(k) = acc;  // symmetric: 2 * (1/2) * lower triangle
  }
  double scale_term = (w.array() * gram.array()).sum() + hp.output_scale * f.jitter * w.trace();
  out.gradient(d) = 0.5 * scale_term;
  out.gradient(d + 1) = 0.5 * hp.noise_variance * w.trace();
  return out;
}

struct GpFitOptions {
  int starts = 8;  // 1 default + (starts - 1) Sobol points in log space
  int max_iterations = 200;
  std::uint64_t seed = 0x51ed2701;
  // When set, ascent starts only from these and from the defaults (no Sobol
  // starts). Used for cheap refits between full multi-start fits.
  std::optional<GpHyperparams> warm_start;
};

struct GpPosterior {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

/// Exact single-output GP regression. Immutable once fitted.
class GpModel {
 public:
  GpModel() = default;

  /// Conditions on data with fixed hyperparameters (no optimisation).
  static GpModel condition(Eigen::MatrixXd x, const Eigen::VectorXd& y, GpHyperparams hp) {
    check_data(x, y);
    GpModel m;
    m.x_ = std::move(x);
    m.y_ = y;
    m.standardisation_ = Standardisation::of(y);
    m.hp_ = std::move(hp);
    m.refactor();
    return m;
  }

  /// Maximises the log marginal likelihood over log hyperparameters with a
  /// multi-start projected L-BFGS; n = 1 uses fixed defaults instead.
  static GpModel fit(Eigen::MatrixXd x, const Eigen::VectorXd& y, const GpFitOptions& opt = {}) {
    check_data(x, y);
    const Eigen::Index d = x.cols();
    if (x.rows() == 1) return condition(std::move(x), y, {Eigen::VectorXd::Constant(d, 0.5), 1.0, 1e-6});

    const Eigen::VectorXd ys = Standardisation::of(y).apply(y);
    const Eigen::Index p = d + 2;
    Eigen::VectorXd lo(p), hi(p), start_lo(p), start_hi(p);
    lo.head(d).setConstant(std::log(gp_limits::min_lengthscale));
    hi.head(d).setConstant(std::log(gp_limits::max_lengthscale));
    lo(d) = std::log(gp_limits::min_output_scale);
    hi(d) = std::log(gp_limits::max_output_scale);
    lo(d + 1) = std::log(gp_limits::min_noise);
    hi(d + 1) = std::log(gp_limits::max_noise);
    start_lo.head(d).setConstant(std::log(0.05));
    start_hi.head(d).setConstant(std::log(2.0));
    start_lo(d) = std::log(0.2);
    start_hi(d) = std::log(5.0);
    start_lo(d + 1) = std::log(1e-6);
    start_hi(d + 1) = std::log(1e-1);

    auto objective = [&](const Eigen::VectorXd& t, Eigen::VectorXd& g) {
      try {
        auto e = msbo::log_marginal_likelihood(x, ys, GpHyperparams::from_log(t));
        g = e.gradient;
        return e.value;
      } catch (const GpError&) {
        g.setZero();
        return -std::numeric_limits<double>::infinity();
      }
    };

    BoxAscentOptions bo;
    bo.max_iterations = opt.max_iterations;
    bo.gradient_tolerance = 1e-7;
    bo.value_tolerance = 1e-11;

    SobolSequence sobol(static_cast<std::size_t>(p), opt.seed);
    Eigen::VectorXd best_t = GpHyperparams::defaults(d).to_log();
    double best_v = -std::numeric_limits<double>::infinity();
    const bool warm = opt.warm_start && opt.warm_start->dim() == d;
    const int n_starts = warm ? 2 : std::max(1, opt.starts);
    for (int s = 0; s < n_starts; ++s) {
      Eigen::VectorXd t0 = s == 0 ? GpHyperparams::defaults(d).to_log()
                           : warm ? Eigen::VectorXd(opt.warm_start->to_log().cwiseMax(lo).cwiseMin(hi))
                                  : Eigen::VectorXd(start_lo.array() + sobol.next().array() * (start_hi - start_lo).array());
      auto r = maximize_in_box(objective, t0, lo, hi, bo);
      if (r.value > best_v) {
        best_v = r.value;
        best_t = r.x;
      }
    }
    if (!std::isfinite(best_v)) throw GpError("marginal likelihood optimisation failed at every start");
    return condition(std::move(x), y, GpHyperparams::from_log(best_t));
  }

  [[nodiscard]] const Eigen::MatrixXd& train_x() const noexcept { return x_; }
  [[nodiscard]] const Eigen::VectorXd& train_y() const noexcept { return y_; }
  [[nodiscard]] const GpHyperparams& hyperparams() const noexcept { return hp_; }
  [[nodiscard]] const Standardisation& standardisation() const noexcept { return standardisation_; }
  [[nodiscard]] const Eigen::LLT<Eigen::MatrixXd>& factorisation() const noexcept { return llt_; }
  [[nodiscard]] const Eigen::VectorXd& alpha() const noexcept { return alpha_; }
  [[nodiscard]] double jitter() const noexcept { return jitter_; }
  [[nodiscard]] Eigen::Index size() const noexcept { return x_.rows(); }
  [[nodiscard]] Eigen::Index input_dim() const noexcept { return x_.cols(); }

  [[nodiscard]] double log_marginal_likelihood() const {
    return msbo::log_marginal_likelihood(x_, standardisation_.apply(y_), hp_, false).value;
  }

  /// Predictive latent mean and variance at the rows of `query`, on the
  /// original target scale.
  [[nodiscard]] GpPosterior posterior(const Eigen::MatrixXd& query) const {
    const Eigen::MatrixXd kq = kernel_matrix(x_, query, hp_);  // n x m
    GpPosterior p;
    p.mean = (kq.transpose() * alpha_).array() * standardisation_.std + standardisation_.mean;
    const Eigen::MatrixXd v = llt_.matrixL().solve(kq);
    const double s2 = standardisation_.std * standardisation_.std;
    p.variance = ((hp_.output_scale - v.colwise().squaredNorm().array()).max(0.0) * s2).matrix().transpose();
    return p;
  }

  /// Joint posterior draws at the rows of `query`: an s x m matrix.
  [[nodiscard]] Eigen::MatrixXd sample_posterior(const Eigen::MatrixXd& query, std::size_t s, StreamRng& rng) const {
    if (s == 0) throw std::invalid_argument("sample_posterior: s must be >= 1");
    const Eigen::Index m = query.rows();
    const Eigen::MatrixXd kq = kernel_matrix(x_, query, hp_);
    const Eigen::VectorXd mean = (kq.transpose() * alpha_).array() * standardisation_.std + standardisation_.mean;
    const Eigen::MatrixXd v = llt_.matrixL().solve(kq);
    const double s2 = standardisation_.std * standardisation_.std;
    Eigen::MatrixXd cov = (kernel_matrix(query, query, hp_) - v.transpose() * v) * s2;
    cov = 0.5 * (cov + cov.transpose());

    Eigen::MatrixXd root;
    if (m == 1) {
      root = Eigen::MatrixXd::Constant(1, 1, std::sqrt(std::max(cov(0, 0), 0.0)));
    } else {
      const double scale = std::max(cov.diagonal().maxCoeff(), std::numeric_limits<double>::min());
      Eigen::LLT<Eigen::MatrixXd> llt;
      bool ok = false;
      for (double j : {0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6}) {
        Eigen::MatrixXd c = cov;
        c.diagonal().array() += j * scale;
        llt.compute(c);
        if (llt.info() == Eigen::Success) {
          ok = true;
          break;
        }
      }
      if (!ok) throw GpError("posterior covariance not positive semi-definite after jitter escalation");
      root = llt.matrixL();
    }

    Eigen::MatrixXd out(static_cast<Eigen::Index>(s), m);
    Eigen::VectorXd z(m);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      for (Eigen::Index j = 0; j < m; ++j) z(j) = rng.normal();
      out.row(i) = (mean + root.triangularView<Eigen::Lower>() * z).transpose();
    }
    return out;
  }

 private:
  static void check_data(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    if (x.rows() < 1) throw GpError("GP needs at least one training point");
    if (x.rows() != y.size()) throw GpError("GP training inputs and targets disagree in length");
    if (!y.allFinite()) throw GpError("GP targets must be finite");
    if (!x.allFinite()) throw GpError("GP inputs must be finite");
  }

  void refactor() {
    const auto f = detail::factorise(detail::training_gram(x_, hp_), hp_);
    llt_ = f.llt;
    jitter_ = f.jitter;
    alpha_ = llt_.solve(standardisation_.apply(y_));
  }

  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
  Standardisation standardisation_;
  GpHyperparams hp_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
  double jitter_ = 0.0;
};

/// Analytic gradient of the model's log marginal likelihood, evaluated at `hp`.
inline Eigen::VectorXd log_marginal_likelihood_grad(const GpModel& model, const GpHyperparams& hp) {
  return log_marginal_likelihood(model.train_x(), model.standardisation().apply(model.train_y()), hp).gradient;
}

}  // namespace msbo
