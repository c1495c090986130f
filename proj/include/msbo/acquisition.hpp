#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "msbo/cascade.hpp"
#include "msbo/inventory.hpp"
#include "msbo/optimize.hpp"
#include "msbo/random.hpp"
#include "msbo/sobol.hpp"

namespace msbo {

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Closed-form expected improvement of N(mean, std^2) over `incumbent`.
inline double expected_improvement(double mean, double std, double incumbent) {
  if (!(std > 0.0)) return std::max(0.0, mean - incumbent);
  const double z = (mean - incumbent) / std;
  return std::max(0.0, std * (z * normal_cdf(z) + normal_pdf(z)));
}

inline double ucb(double mean, double std, double beta) { return mean + beta * std; }

/// How the last stage of the nested expectation is integrated.
///   sampled:  draw y per particle and average max(0, y - y*)
///   analytic: closed-form EI of each particle's terminal Gaussian (same
///             expectation, lower variance; exact when one stage remains)
enum class TerminalEstimator { sampled, analytic };

enum class AcqKind { nested_ei, ucb_fallback };

struct NestedEstimate {
  double value = 0.0;
  double standard_error = 0.0;
};

/// Monte-Carlo estimate of the recursive multi-stage EI for executing stages
/// `stage`..N with params `x_tail`, optionally continuing from `start`.
inline NestedEstimate nested_ei(const CascadeSurrogate& surrogate, std::size_t stage,
                                const std::optional<StartState>& start, const std::vector<Eigen::VectorXd>& x_tail,
                                double incumbent, const StreamRng& rng, std::size_t mc_samples,
                                TerminalEstimator terminal = TerminalEstimator::sampled) {
  Eigen::ArrayXd u;
  if (terminal == TerminalEstimator::sampled) {
    u = (surrogate.propagate(x_tail, stage, start, mc_samples, rng).array() - incumbent).max(0.0);
  } else {
    // from the last stage every particle sees the same input
    const std::size_t s = stage == surrogate.n_stages() ? 1 : mc_samples;
    const ParticleMoments pm = surrogate.propagate_moments(x_tail, stage, start, s, rng);
    u.resize(pm.mean.size());
    for (Eigen::Index p = 0; p < u.size(); ++p)
      u(p) = expected_improvement(pm.mean(p), std::sqrt(pm.variance(p)), incumbent);
  }
  NestedEstimate e;
  if ((u == u(0)).all()) {
    e.value = u(0);
    return e;
  }
  e.value = u.mean();
  if (u.size() > 1) {
    const double var = (u - e.value).square().sum() / static_cast<double>(u.size() - 1);
    e.standard_error = std::sqrt(var / static_cast<double>(u.size()));
  }
  return e;
}

/// Upper confidence bound of the terminal particle distribution:
/// mean + beta * std, with the std taken over the particle mixture.
inline double nested_ucb(const CascadeSurrogate& surrogate, std::size_t stage, const std::optional<StartState>& start,
                         const std::vector<Eigen::VectorXd>& x_tail, double beta, const StreamRng& rng,
                         std::size_t mc_samples, TerminalEstimator terminal = TerminalEstimator::analytic) {
  if (terminal == TerminalEstimator::sampled) {
    const Eigen::ArrayXd y = surrogate.propagate(x_tail, stage, start, mc_samples, rng).array();
    const double m = y.mean();
    const double var = y.size() > 1 ? (y - m).square().sum() / static_cast<double>(y.size() - 1) : 0.0;
    return ucb(m, std::sqrt(var), beta);
  }
  const std::size_t s = stage == surrogate.n_stages() ? 1 : mc_samples;
  const ParticleMoments pm = surrogate.propagate_moments(x_tail, stage, start, s, rng);
  if ((pm.mean.array() == pm.mean(0)).all() && (pm.variance.array() == pm.variance(0)).all())
    return ucb(pm.mean(0), std::sqrt(pm.variance(0)), beta);
  const double m = pm.mean.mean();
  const double var = pm.variance.mean() + (pm.mean.array() - m).square().mean();
  return ucb(m, std::sqrt(var), beta);
}

struct AcquisitionConfig {
  std::size_t mc_samples = 64;
  std::size_t restarts = 8;
  std::size_t raw_samples = 64;  // Sobol screening points from which the restarts are chosen
  int max_iterations = 50;
  double fd_step = 1e-3;
  double ei_vanish_threshold = 1e-9;  // on the standardised objective scale
  double ucb_beta = 4.0;
  bool cost_weighting = false;
  std::vector<double> min_stage_frequency;  // empty = no constraint
  TerminalEstimator terminal = TerminalEstimator::analytic;
};

/// Splits a flat parameter vector into per-stage blocks.
inline std::vector<Eigen::VectorXd> split_tail(const Eigen::VectorXd& flat, const std::vector<std::size_t>& dims) {
  std::vector<Eigen::VectorXd> out;
  Eigen::Index off = 0;
  for (std::size_t d : dims) {
    out.push_back(flat.segment(off, static_cast<Eigen::Index>(d)));
    off += static_cast<Eigen::Index>(d);
  }
  return out;
}

inline Eigen::VectorXd join_tail(const std::vector<Eigen::VectorXd>& parts) {
  Eigen::Index n = 0;
  for (const auto& p : parts) n += p.size();
  Eigen::VectorXd out(n);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.segment(off, p.size()) = p;
    off += p.size();
  }
  return out;
}

inline std::vector<std::size_t> tail_dims(const CascadeSchema& schema, std::size_t stage) {
  std::vector<std::size_t> dims;
  for (std::size_t i = stage; i <= schema.n_stages(); ++i) dims.push_back(schema.stage(i).x_dim);
  return dims;
}

struct BoxOptimum {
  Eigen::VectorXd x;
  double value = -std::numeric_limits<double>::infinity();
};

/// Multi-start maximisation of a noisy-by-stream objective over [0,1]^dim.
///
/// `objective(x, stream)` must be deterministic for a fixed stream. Restart r
/// runs local ascent with stream rng.split(r) held fixed (common random
/// numbers) and finite-difference gradients; all restart optima are then
/// re-scored under one shared stream and the best is returned.
template <class Objective>
BoxOptimum maximize_acquisition(Objective&& objective, std::size_t dim, const AcquisitionConfig& cfg,
                                const StreamRng& rng) {
  const StreamRng scoring = rng.split(0xfeedULL);
  if (dim == 0) return {Eigen::VectorXd(0), objective(Eigen::VectorXd(0), scoring)};

  const std::size_t restarts = std::max<std::size_t>(1, cfg.restarts);
  SobolSequence sobol(dim, rng.split(0x50b0ULL).key() | 1ULL);
  std::vector<Eigen::VectorXd> starts;
  if (cfg.raw_samples > restarts) {
    std::vector<std::pair<double, std::size_t>> scored;
    std::vector<Eigen::VectorXd> raw;
    const StreamRng screen = rng.split(0x5c2eULL);
    for (std::size_t k = 0; k < cfg.raw_samples; ++k) {
      raw.push_back(sobol.next());
      scored.emplace_back(-objective(raw.back(), screen), k);
    }
    std::stable_sort(scored.begin(), scored.end());
    for (std::size_t r = 0; r < restarts; ++r) starts.push_back(raw[scored[r].second]);
  } else {
    for (std::size_t r = 0; r < restarts; ++r) starts.push_back(sobol.next());
  }

  const Eigen::VectorXd lo = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  const Eigen::VectorXd hi = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(dim));
  BoxAscentOptions bo;
  bo.max_iterations = cfg.max_iterations;
  bo.gradient_tolerance = 1e-8;
  bo.value_tolerance = 1e-10;

  BoxOptimum best;
  for (std::size_t r = 0; r < restarts; ++r) {
    const StreamRng stream = rng.split(r);
    auto f = [&](const Eigen::VectorXd& x) { return objective(x, stream); };
    auto fg = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
      g = finite_difference_gradient(f, x, cfg.fd_step, lo, hi);
      return f(x);
    };
    const auto local = maximize_in_box(fg, starts[r], lo, hi, bo);
    const double v = objective(local.x, scoring);
    if (v > best.value) best = {local.x, v};
  }
  return best;
}

struct StageOptimum {
  std::vector<Eigen::VectorXd> x_tail;  // params for stages stage..N
  double value = 0.0;
  std::size_t pool_index = 0;  // discrete only

  [[nodiscard]] const Eigen::VectorXd& params() const { return x_tail.front(); }
};

namespace detail {

inline auto acquisition_objective(const CascadeSurrogate& surrogate, std::size_t stage,
                                  const std::optional<StartState>& start, double incumbent,
                                  const AcquisitionConfig& cfg, AcqKind kind) {
  const auto dims = tail_dims(surrogate.schema(), stage);
  return [&surrogate, stage, &start, incumbent, &cfg, kind, dims](const Eigen::VectorXd& flat, const StreamRng& s) {
    const auto tail = split_tail(flat, dims);
    if (kind == AcqKind::ucb_fallback)
      return nested_ucb(surrogate, stage, start, tail, cfg.ucb_beta, s, cfg.mc_samples, cfg.terminal);
    return nested_ei(surrogate, stage, start, tail, incumbent, s, cfg.mc_samples, cfg.terminal).value;
  };
}

}  // namespace detail

/// Maximises the nested acquisition jointly over x_stage..x_N in the unit box.
inline StageOptimum optimize_stage_continuous(const CascadeSurrogate& surrogate, std::size_t stage,
                                              const std::optional<StartState>& start, double incumbent,
                                              const AcquisitionConfig& cfg, const StreamRng& rng,
                                              AcqKind kind = AcqKind::nested_ei) {
  const auto dims = tail_dims(surrogate.schema(), stage);
  std::size_t dim = 0;
  for (auto d : dims) dim += d;
  auto obj = detail::acquisition_objective(surrogate, stage, start, incumbent, cfg, kind);
  const BoxOptimum best = maximize_acquisition(obj, dim, cfg, rng);
  return {split_tail(best.x, dims), best.value, 0};
}

/// Exhaustive search over pool rows (each row a flat x_stage..x_N), all
/// scored under the same stream. Ties go to the lowest row index.
inline StageOptimum optimize_stage_discrete(const CascadeSurrogate& surrogate, std::size_t stage,
                                            const std::optional<StartState>& start, double incumbent,
                                            const Eigen::MatrixXd& pool, const AcquisitionConfig& cfg,
                                            const StreamRng& rng, AcqKind kind = AcqKind::nested_ei) {
  if (pool.rows() == 0) throw std::invalid_argument("optimize_stage_discrete: empty candidate pool");
  const auto dims = tail_dims(surrogate.schema(), stage);
  auto obj = detail::acquisition_objective(surrogate, stage, start, incumbent, cfg, kind);
  const StreamRng scoring = rng.split(0xfeedULL);
  StageOptimum best;
  best.value = -std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < pool.rows(); ++r) {
    const double v = obj(pool.row(r).transpose(), scoring);
    if (v > best.value) {
      best.value = v;
      best.pool_index = static_cast<std::size_t>(r);
    }
  }
  best.x_tail = split_tail(pool.row(static_cast<Eigen::Index>(best.pool_index)).transpose(), dims);
  return best;
}

struct CandidateValue {
  std::size_t stage = 1;
  std::optional<std::uint64_t> sample_id;
  std::vector<Eigen::VectorXd> x_tail;
  double raw_value = 0.0;
  double weighted_value = 0.0;
  std::size_t pool_index = 0;
};

struct AcquisitionProposal {
  std::size_t stage = 1;                  // 1 = start a new sample
  std::optional<std::uint64_t> sample_id;  // continued sample, absent for stage 1
  Eigen::VectorXd params;                 // stage params to execute
  std::vector<Eigen::VectorXd> x_tail;    // optimised params for stage..N
  double raw_value = 0.0;
  double weighted_value = 0.0;
  double selection_cost = 1.0;            // divisor used for weighted_value
  AcqKind acq_kind = AcqKind::nested_ei;
  bool frequency_forced = false;
  std::size_t pool_index = 0;
  std::vector<CandidateValue> candidates;  // every option considered, for auditing
};

/// Candidate stream key: the new-sample option and each continued sample get
/// independent streams that do not depend on candidate ordering.
inline StreamRng candidate_stream(const StreamRng& rng, const std::optional<std::uint64_t>& sample_id) {
  return rng.split(sample_id ? *sample_id + 1 : 0);
}

/// Chooses the next stage execution: start a new sample or continue one from
/// the inventory. Returns nullopt when no candidate has an available surrogate.
///
/// `new_sample_pool`, when given, restricts new samples to its rows (flat
/// x_1..x_N) and switches stage-1 optimisation to exhaustive search.
inline std::optional<AcquisitionProposal> select_next(const CascadeSurrogate& surrogate, const Inventory& inventory,
                                                      const AcquisitionConfig& cfg, const StreamRng& rng,
                                                      const Eigen::MatrixXd* new_sample_pool = nullptr) {
  const CascadeSchema& schema = inventory.schema();
  const std::size_t n = schema.n_stages();
  const auto best = inventory.best_observed();
  const double incumbent = best ? best->value : -std::numeric_limits<double>::infinity();

  struct Option {
    std::size_t stage;
    std::optional<std::uint64_t> sample_id;
    std::optional<StartState> start;
  };
  std::vector<Option> options;
  if (surrogate.available_from(1) && !(new_sample_pool && new_sample_pool->rows() == 0))
    options.push_back({1, std::nullopt, std::nullopt});
  for (std::size_t i = 2; i <= n; ++i) {
    if (!surrogate.available_from(i)) continue;
    for (const auto& c : inventory.continuation_candidates(i))
      options.push_back({i, c.sample_id, StartState{c.measurement, c.params}});
  }
  if (options.empty()) return std::nullopt;

  auto evaluate_all = [&](AcqKind kind) {
    std::vector<CandidateValue> out;
    for (const auto& o : options) {
      const StreamRng s = candidate_stream(rng, o.sample_id);
      StageOptimum opt;
      if (o.stage == 1 && new_sample_pool)
        opt = optimize_stage_discrete(surrogate, 1, std::nullopt, incumbent, *new_sample_pool, cfg, s, kind);
      else
        opt = optimize_stage_continuous(surrogate, o.stage, o.start, incumbent, cfg, s, kind);
      out.push_back({o.stage, o.sample_id, opt.x_tail, opt.value, opt.value, opt.pool_index});
    }
    return out;
  };

  AcqKind kind = AcqKind::nested_ei;
  std::vector<CandidateValue> cands = evaluate_all(kind);
  double best_raw = -std::numeric_limits<double>::infinity();
  for (const auto& c : cands) best_raw = std::max(best_raw, c.raw_value);
  if (best && best_raw / surrogate.objective_scale() < cfg.ei_vanish_threshold) {
    kind = AcqKind::ucb_fallback;
    cands = evaluate_all(kind);
  }

  for (auto& c : cands) {
    const double cost = cfg.cost_weighting ? schema.stage(c.stage).cost : 1.0;
    c.weighted_value = c.raw_value / cost;
  }

  // Minimal-frequency constraint: restrict to the most under-sampled stage
  // that has at least one candidate.
  std::optional<std::size_t> forced;
  if (!cfg.min_stage_frequency.empty()) {
    const auto freq = inventory.stage_sampling_frequencies();
    double worst = 0.0;
    for (std::size_t i = 1; i <= n && i <= cfg.min_stage_frequency.size(); ++i) {
      const double deficit = cfg.min_stage_frequency[i - 1] - freq[i - 1];
      const bool has = std::any_of(cands.begin(), cands.end(), [i](const auto& c) { return c.stage == i; });
      if (deficit > worst && has) {
        worst = deficit;
        forced = i;
      }
    }
  }

  std::size_t arg = cands.size();
  for (std::size_t k = 0; k < cands.size(); ++k) {
    if (forced && cands[k].stage != *forced) continue;
    if (arg == cands.size() || cands[k].weighted_value > cands[arg].weighted_value) arg = k;
  }

  const CandidateValue& c = cands[arg];
  AcquisitionProposal p;
  p.stage = c.stage;
  p.sample_id = c.sample_id;
  p.params = c.x_tail.front();
  p.x_tail = c.x_tail;
  p.raw_value = c.raw_value;
  p.weighted_value = c.weighted_value;
  p.selection_cost = cfg.cost_weighting ? schema.stage(c.stage).cost : 1.0;
  p.acq_kind = kind;
  p.frequency_forced = forced.has_value();
  p.pool_index = c.pool_index;
  p.candidates = std::move(cands);
  return p;
}

}  // namespace msbo
