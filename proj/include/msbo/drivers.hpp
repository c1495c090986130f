#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "msbo/acquisition.hpp"
#include "msbo/cascade.hpp"
#include "msbo/dataset.hpp"
#include "msbo/gp.hpp"
#include "msbo/inventory.hpp"
#include "msbo/random.hpp"
#include "msbo/sobol.hpp"
#include "msbo/synthetic.hpp"

namespace msbo {

/// Stage executor seen by the optimisers. Latent state stays inside the
/// environment, keyed by sample id; callers only ever receive measurements.
class Environment {
 public:
  virtual ~Environment() = default;
  [[nodiscard]] virtual const CascadeSchema& schema() const = 0;
  virtual Eigen::VectorXd run_stage(std::uint64_t sample_id, std::size_t stage, const Eigen::VectorXd& params) = 0;
  /// Noise-free objective of a full parameter set, when the environment knows it.
  [[nodiscard]] virtual std::optional<double> true_objective(const std::vector<Eigen::VectorXd>& /*x_all*/) const {
    return std::nullopt;
  }
  /// Finite stage-1 candidate pool (rows are flat x_1..x_N), or null if continuous.
  [[nodiscard]] virtual const Eigen::MatrixXd* candidate_pool() const { return nullptr; }
};

class SyntheticEnvironment final : public Environment {
 public:
  SyntheticEnvironment(const SyntheticCascade& cascade, CascadeSchema schema, std::uint64_t noise_seed)
      : cascade_(cascade), schema_(std::move(schema)), noise_(noise_seed) {}

  [[nodiscard]] const CascadeSchema& schema() const override { return schema_; }

  Eigen::VectorXd run_stage(std::uint64_t id, std::size_t stage, const Eigen::VectorXd& params) override {
    StreamRng rng = noise_.split(id * 64 + stage);
    auto it = latent_.find(id);
    const Eigen::VectorXd* h_prev = nullptr;
    if (stage > 1) {
      if (it == latent_.end()) throw std::logic_error("environment: no latent state for sample " + std::to_string(id));
      h_prev = &it->second;
    }
    StageOutput out = cascade_.run_stage(stage, params, h_prev, rng);
    latent_[id] = out.latent;
    return out.measurement;
  }

  [[nodiscard]] std::optional<double> true_objective(const std::vector<Eigen::VectorXd>& x_all) const override {
    return cascade_.evaluate(join_tail(x_all));
  }

  [[nodiscard]] const SyntheticCascade& cascade() const noexcept { return cascade_; }

 private:
  const SyntheticCascade& cascade_;
  CascadeSchema schema_;
  StreamRng noise_;
  std::unordered_map<std::uint64_t, Eigen::VectorXd> latent_;
};

/// Two-stage candidate-pool task: stage 1 returns the proxy, stage 2 (no
/// parameters) returns the objective of the candidate chosen at stage 1.
class DatasetEnvironment final : public Environment {
 public:
  explicit DatasetEnvironment(const DatasetTask& task, SurrogateMode mode = SurrogateMode::residual) : task_(task) {
    schema_.mode = mode;
    schema_.stages = {{static_cast<std::size_t>(task.dim()), 1, {0}, task.proxy_cost},
                      {0, 1, {0}, task.objective_cost}};
    schema_.validate();
    for (Eigen::Index i = 0; i < task.size(); ++i) index_.emplace(key(task.features.row(i).transpose()), i);
  }

  [[nodiscard]] const CascadeSchema& schema() const override { return schema_; }

  Eigen::VectorXd run_stage(std::uint64_t id, std::size_t stage, const Eigen::VectorXd& params) override {
    if (stage == 1) {
      const Eigen::Index i = lookup(params);
      chosen_[id] = i;
      return Eigen::VectorXd::Constant(1, task_.proxy(i));
    }
    const auto it = chosen_.find(id);
    if (it == chosen_.end()) throw std::logic_error("environment: sample has no stage-1 candidate");
    return Eigen::VectorXd::Constant(1, task_.objective(it->second));
  }

  [[nodiscard]] std::optional<double> true_objective(const std::vector<Eigen::VectorXd>& x_all) const override {
    return task_.objective(lookup(x_all.front()));
  }

  [[nodiscard]] const Eigen::MatrixXd* candidate_pool() const override { return &task_.features; }

  [[nodiscard]] Eigen::Index lookup(const Eigen::VectorXd& features) const {
    const auto it = index_.find(key(features));
    if (it == index_.end()) throw std::invalid_argument("environment: params are not a pool candidate");
    return it->second;
  }

 private:
  static std::vector<double> key(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

  const DatasetTask& task_;
  CascadeSchema schema_;
  std::map<std::vector<double>, Eigen::Index> index_;
  std::unordered_map<std::uint64_t, Eigen::Index> chosen_;
};

enum class DriverKind { msbo, bo, bofn, random };

inline std::string to_string(DriverKind d) {
  switch (d) {
    case DriverKind::msbo: return "msbo";
    case DriverKind::bo: return "bo";
    case DriverKind::bofn: return "bofn";
    case DriverKind::random: return "random";
  }
  return "?";
}

inline DriverKind parse_driver(const std::string& s) {
  if (s == "msbo") return DriverKind::msbo;
  if (s == "bo") return DriverKind::bo;
  if (s == "bofn") return DriverKind::bofn;
  if (s == "random") return DriverKind::random;
  throw std::invalid_argument("unknown driver: " + s);
}

struct CampaignConfig {
  DriverKind driver = DriverKind::msbo;
  double budget = 0.0;
  std::optional<std::size_t> init_design_size;  // default 2(D+1)
  AcquisitionConfig acquisition;
  CascadeFitOptions fit;
  std::uint64_t seed = 0;
  bool track_model_selection = true;
  bool keep_proposals = false;
  // Surrogates get a full multi-start hyperparameter fit every this many
  // iterations and a warm-started refit in between (<= 1: always full).
  int full_refit_every = 10;
};

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct TraceEvent {
  std::size_t event_index = 0;
  std::size_t stage_executed = 0;
  std::uint64_t sample_id = 0;
  double cumulative_cost = 0.0;
  double best_observed_y = kNaN;
  double model_selected_y = kNaN;     // surrogate-predicted mean of the model-selected params
  double best_observed_true = kNaN;   // noise-free objective at the best observed params
  double model_selected_true = kNaN;  // noise-free objective at the model-selected params
};

struct CampaignTrace {
  DriverKind driver = DriverKind::msbo;
  std::uint64_t seed = 0;
  double budget = 0.0;
  double init_design_cost = 0.0;
  std::vector<TraceEvent> events;
  Inventory inventory;
  std::vector<AcquisitionProposal> proposals;
  std::size_t ucb_fallbacks = 0;
  std::size_t surrogate_input_dim = 0;  // objective-GP input dimension at the last fit
  bool consumed_intermediate = false;   // whether any surrogate trained on intermediate measurements

  explicit CampaignTrace(const CascadeSchema& schema) : inventory(schema) {}

  [[nodiscard]] double final_best() const { return events.empty() ? kNaN : events.back().best_observed_y; }
};

inline std::size_t default_init_design_size(const CascadeSchema& s) { return 2 * (s.total_x_dim() + 1); }

namespace detail {

/// Shared bookkeeping for all drivers: executes stages, keeps the inventory
/// and the trace in step, and tracks which pool candidates were used.
class Campaign {
 public:
  Campaign(Environment& env, const CampaignConfig& cfg) : env_(env), cfg_(cfg), trace_(env.schema()), root_(cfg.seed) {
    trace_.driver = cfg.driver;
    trace_.seed = cfg.seed;
    trace_.budget = cfg.budget;
    if (const auto* pool = env.candidate_pool()) used_.assign(static_cast<std::size_t>(pool->rows()), false);
  }

  [[nodiscard]] const CascadeSchema& schema() const { return env_.schema(); }
  [[nodiscard]] Inventory& inventory() { return trace_.inventory; }
  [[nodiscard]] CampaignTrace& trace() { return trace_; }
  [[nodiscard]] const StreamRng& root() const { return root_; }
  [[nodiscard]] double spent() const { return trace_.inventory.total_cost_spent(); }
  [[nodiscard]] bool fits(double cost) const { return spent() + cost <= cfg_.budget + 1e-9; }
  [[nodiscard]] const Eigen::MatrixXd* pool() const { return env_.candidate_pool(); }

  void execute(std::uint64_t id, std::size_t stage, const Eigen::VectorXd& params) {
    const Eigen::VectorXd m = env_.run_stage(id, stage, params);
    trace_.inventory.record_measurement(id, stage, params, m);
    TraceEvent e;
    if (!trace_.events.empty()) e = trace_.events.back();
    e.event_index = trace_.events.size();
    e.stage_executed = stage;
    e.sample_id = id;
    e.cumulative_cost = spent();
    if (const auto best = trace_.inventory.best_observed()) {
      e.best_observed_y = best->value;
      e.best_observed_true = env_.true_objective(trace_.inventory.record(best->sample_id).params).value_or(kNaN);
    }
    trace_.events.push_back(e);
  }

  std::uint64_t run_full(const std::vector<Eigen::VectorXd>& x_all, SampleOrigin origin, int iteration) {
    const auto id = trace_.inventory.create_sample(x_all.front(), origin, iteration);
    mark_used(x_all.front());
    for (std::size_t i = 1; i <= schema().n_stages(); ++i) execute(id, i, x_all[i - 1]);
    return id;
  }

  std::uint64_t start_sample(const Eigen::VectorXd& x1, int iteration) {
    const auto id = trace_.inventory.create_sample(x1, SampleOrigin::acquisition, iteration);
    mark_used(x1);
    execute(id, 1, x1);
    return id;
  }

  /// Pool rows whose candidate was never started, and their pool indices.
  [[nodiscard]] std::pair<Eigen::MatrixXd, std::vector<Eigen::Index>> unused_pool() const {
    const auto* p = pool();
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < used_.size(); ++i)
      if (!used_[i]) idx.push_back(static_cast<Eigen::Index>(i));
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(idx.size()), p->cols());
    for (std::size_t k = 0; k < idx.size(); ++k) rows.row(static_cast<Eigen::Index>(k)) = p->row(idx[k]);
    return {rows, idx};
  }

  void set_model_selection(double predicted, const std::vector<Eigen::VectorXd>& x_all) {
    if (trace_.events.empty()) return;
    trace_.events.back().model_selected_y = predicted;
    trace_.events.back().model_selected_true = env_.true_objective(x_all).value_or(kNaN);
  }

  /// Uniform random full parameter set (or an unused pool row).
  std::vector<Eigen::VectorXd> random_point(StreamRng& rng) const {
    const auto& s = schema();
    if (pool()) {
      const auto [rows, idx] = unused_pool();
      if (rows.rows() == 0) return {};
      return split_tail(rows.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(rows.rows())))).transpose(),
                        tail_dims(s, 1));
    }
    Eigen::VectorXd x(static_cast<Eigen::Index>(s.total_x_dim()));
    for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = rng.uniform();
    return split_tail(x, tail_dims(s, 1));
  }

 private:
  void mark_used(const Eigen::VectorXd& x1) {
    const auto* p = pool();
    if (!p) return;
    for (Eigen::Index i = 0; i < p->rows(); ++i)
      if (!used_[static_cast<std::size_t>(i)] && p->row(i).head(x1.size()).transpose() == x1) {
        used_[static_cast<std::size_t>(i)] = true;
        return;
      }
  }

  Environment& env_;
  const CampaignConfig& cfg_;
  CampaignTrace trace_;
  StreamRng root_;
  std::vector<bool> used_;
};

inline void run_init_design_into(Campaign& c, const CampaignConfig& cfg) {
  const auto& s = c.schema();
  const std::size_t n0 = cfg.init_design_size.value_or(default_init_design_size(s));
  const double cost = static_cast<double>(n0) * s.full_cost();
  if (cost > cfg.budget + 1e-9)
    throw std::invalid_argument("budget " + std::to_string(cfg.budget) + " is below the initial design cost " +
                                std::to_string(cost));
  const auto dims = tail_dims(s, 1);
  if (c.pool()) {
    StreamRng rng = c.root().split(0x1d5eULL);
    for (std::size_t k = 0; k < n0; ++k) {
      const auto x = c.random_point(rng);
      if (x.empty()) break;
      c.run_full(x, SampleOrigin::init_design, 0);
    }
  } else {
    SobolSequence sobol(s.total_x_dim(), mix64(cfg.seed ^ 0x1d5e5eedULL) | 1ULL);
    for (std::size_t k = 0; k < n0; ++k) c.run_full(split_tail(sobol.next(), dims), SampleOrigin::init_design, 0);
  }
  c.trace().init_design_cost = c.spent();
}

inline void update_cascade_model_selection(Campaign& c, const CascadeSurrogate& sur) {
  double best = -std::numeric_limits<double>::infinity();
  const SampleRecord* arg = nullptr;
  for (const SampleRecord* r : c.inventory().completed()) {
    const double v = sur.propagate_mean_only(r->params, 1, std::nullopt);
    if (v > best) {
      best = v;
      arg = r;
    }
  }
  if (arg) c.set_model_selection(best, arg->params);
}

inline bool warm_iteration(const CampaignConfig& cfg, int iter) {
  return cfg.full_refit_every > 1 && iter % cfg.full_refit_every != 0;
}

/// Refits the cascade surrogate, reusing what it can from the previous fit.
inline const CascadeSurrogate& refit(std::optional<CascadeSurrogate>& last, const Inventory& inv, CascadeFitOptions fit,
                                     bool warm) {
  fit.previous = last ? &*last : nullptr;
  fit.warm_start = warm;
  last = CascadeSurrogate::fit(inv, fit);
  return *last;
}

/// Joint-input GP used by standard BO: (x_1..x_N) -> y on complete records.
inline GpModel fit_joint_gp(const Inventory& inv, const GpFitOptions& opt) {
  const auto done = inv.completed();
  const auto d = static_cast<Eigen::Index>(inv.schema().total_x_dim());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(done.size()), d);
  Eigen::VectorXd y(static_cast<Eigen::Index>(done.size()));
  for (std::size_t r = 0; r < done.size(); ++r) {
    x.row(static_cast<Eigen::Index>(r)) = join_tail(done[r]->params).transpose();
    y(static_cast<Eigen::Index>(r)) = done[r]->objective();
  }
  return GpModel::fit(std::move(x), y, opt);
}

inline void update_joint_model_selection(Campaign& c, const GpModel& gp) {
  double best = -std::numeric_limits<double>::infinity();
  const SampleRecord* arg = nullptr;
  for (const SampleRecord* r : c.inventory().completed()) {
    const double v = gp.posterior(join_tail(r->params).transpose()).mean(0);
    if (v > best) {
      best = v;
      arg = r;
    }
  }
  if (arg) c.set_model_selection(best, arg->params);
}

inline bool every_stage_trained(const Inventory& inv) { return inv.completed().size() >= 2; }

}  // namespace detail

/// Initial design alone: 2(D+1) full-cascade runs at Sobol points.
inline CampaignTrace run_init_design(Environment& env, const CampaignConfig& cfg) {
  detail::Campaign c(env, cfg);
  detail::run_init_design_into(c, cfg);
  return std::move(c.trace());
}

/// Multi-stage BO with resumable sampling: each iteration executes exactly one
/// stage, either starting a new sample or continuing one from the inventory.
inline CampaignTrace run_msbo(Environment& env, const CampaignConfig& cfg) {
  detail::Campaign c(env, cfg);
  detail::run_init_design_into(c, cfg);
  CascadeFitOptions fit = cfg.fit;
  fit.min_records = std::max<std::size_t>(fit.min_records, 2);
  std::optional<CascadeSurrogate> last;

  for (int iter = 1;; ++iter) {
    if (c.spent() >= cfg.budget - 1e-9) break;
    const StreamRng rng = c.root().split(static_cast<std::uint64_t>(iter));
    if (!detail::every_stage_trained(c.inventory())) {
      if (!c.fits(c.schema().full_cost())) break;
      StreamRng r = rng.split(0xf00ULL);
      const auto x = c.random_point(r);
      if (x.empty()) break;
      c.run_full(x, SampleOrigin::acquisition, iter);
      continue;
    }
    const CascadeSurrogate& sur = detail::refit(last, c.inventory(), fit, detail::warm_iteration(cfg, iter));
    c.trace().consumed_intermediate = c.schema().n_stages() > 1;
    c.trace().surrogate_input_dim = sur.stage(sur.n_stages()).layout.dim();
    if (cfg.track_model_selection) detail::update_cascade_model_selection(c, sur);

    std::optional<Eigen::MatrixXd> pool_rows;
    if (c.pool()) pool_rows = c.unused_pool().first;
    const auto p = select_next(sur, c.inventory(), cfg.acquisition, rng, pool_rows ? &*pool_rows : nullptr);
    if (!p) {
      if (!c.fits(c.schema().full_cost())) break;
      StreamRng r = rng.split(0xf00ULL);
      const auto x = c.random_point(r);
      if (x.empty()) break;
      c.run_full(x, SampleOrigin::acquisition, iter);
      continue;
    }
    if (!c.fits(c.schema().stage(p->stage).cost)) break;
    if (p->acq_kind == AcqKind::ucb_fallback) ++c.trace().ucb_fallbacks;
    if (p->stage == 1)
      c.start_sample(p->params, iter);
    else
      c.execute(*p->sample_id, p->stage, p->params);
    if (cfg.keep_proposals) c.trace().proposals.push_back(*p);
  }
  if (cfg.track_model_selection && detail::every_stage_trained(c.inventory()))
    detail::update_cascade_model_selection(c, detail::refit(last, c.inventory(), fit, cfg.full_refit_every > 1));
  return std::move(c.trace());
}

/// Cascade surrogate + nested EI over (x_1..x_N), always running the full cascade.
inline CampaignTrace run_bofn(Environment& env, const CampaignConfig& cfg) {
  detail::Campaign c(env, cfg);
  detail::run_init_design_into(c, cfg);
  CascadeFitOptions fit = cfg.fit;
  fit.min_records = std::max<std::size_t>(fit.min_records, 2);
  AcquisitionConfig acq = cfg.acquisition;
  acq.min_stage_frequency.clear();
  std::optional<CascadeSurrogate> last;

  for (int iter = 1;; ++iter) {
    if (!c.fits(c.schema().full_cost())) break;
    const StreamRng rng = c.root().split(static_cast<std::uint64_t>(iter));
    const CascadeSurrogate& sur = detail::refit(last, c.inventory(), fit, detail::warm_iteration(cfg, iter));
    c.trace().consumed_intermediate = c.schema().n_stages() > 1;
    c.trace().surrogate_input_dim = sur.stage(sur.n_stages()).layout.dim();
    if (cfg.track_model_selection) detail::update_cascade_model_selection(c, sur);

    std::optional<Eigen::MatrixXd> pool_rows;
    if (c.pool()) {
      pool_rows = c.unused_pool().first;
      if (pool_rows->rows() == 0) break;
    }
    const auto p = select_next(sur, c.inventory(), acq, rng, pool_rows ? &*pool_rows : nullptr);
    if (!p) break;
    if (p->acq_kind == AcqKind::ucb_fallback) ++c.trace().ucb_fallbacks;
    c.run_full(p->x_tail, SampleOrigin::acquisition, iter);
    if (cfg.keep_proposals) c.trace().proposals.push_back(*p);
  }
  if (cfg.track_model_selection)
    detail::update_cascade_model_selection(c, detail::refit(last, c.inventory(), fit, cfg.full_refit_every > 1));
  return std::move(c.trace());
}

/// Standard BO: one GP on the joint input, analytic EI, full-cascade evaluations.
inline CampaignTrace run_standard_bo(Environment& env, const CampaignConfig& cfg) {
  detail::Campaign c(env, cfg);
  detail::run_init_design_into(c, cfg);
  const auto& s = c.schema();
  const auto dims = tail_dims(s, 1);
  GpFitOptions fit = cfg.fit.gp;

  for (int iter = 1;; ++iter) {
    if (!c.fits(s.full_cost())) break;
    const StreamRng rng = c.root().split(static_cast<std::uint64_t>(iter));
    if (!detail::warm_iteration(cfg, iter)) fit.warm_start.reset();
    const GpModel gp = detail::fit_joint_gp(c.inventory(), fit);
    fit.warm_start = gp.hyperparams();
    c.trace().surrogate_input_dim = static_cast<std::size_t>(gp.input_dim());
    if (cfg.track_model_selection) detail::update_joint_model_selection(c, gp);
    const double incumbent = c.inventory().best_observed()->value;

    auto ei = [&](const Eigen::VectorXd& x, const StreamRng&) {
      const GpPosterior p = gp.posterior(x.transpose());
      return expected_improvement(p.mean(0), std::sqrt(p.variance(0)), incumbent);
    };
    auto bound = [&](const Eigen::VectorXd& x, const StreamRng&) {
      const GpPosterior p = gp.posterior(x.transpose());
      return ucb(p.mean(0), std::sqrt(p.variance(0)), cfg.acquisition.ucb_beta);
    };

    const StreamRng stream = candidate_stream(rng, std::nullopt);
    Eigen::VectorXd next;
    if (c.pool()) {
      const Eigen::MatrixXd rows = c.unused_pool().first;
      if (rows.rows() == 0) break;
      auto argmax = [&](auto&& f) {
        Eigen::Index arg = 0;
        double best = -std::numeric_limits<double>::infinity();
        for (Eigen::Index r = 0; r < rows.rows(); ++r) {
          const double v = f(rows.row(r).transpose(), stream);
          if (v > best) {
            best = v;
            arg = r;
          }
        }
        return std::pair{arg, best};
      };
      auto [arg, best] = argmax(ei);
      if (best / gp.standardisation().std < cfg.acquisition.ei_vanish_threshold) {
        ++c.trace().ucb_fallbacks;
        arg = argmax(bound).first;
      }
      next = rows.row(arg).transpose();
    } else {
      BoxOptimum opt = maximize_acquisition(ei, s.total_x_dim(), cfg.acquisition, stream);
      if (opt.value / gp.standardisation().std < cfg.acquisition.ei_vanish_threshold) {
        ++c.trace().ucb_fallbacks;
        opt = maximize_acquisition(bound, s.total_x_dim(), cfg.acquisition, stream);
      }
      next = opt.x;
    }
    c.run_full(split_tail(next, dims), SampleOrigin::acquisition, iter);
  }
  if (cfg.full_refit_every <= 1) fit.warm_start.reset();
  if (cfg.track_model_selection) detail::update_joint_model_selection(c, detail::fit_joint_gp(c.inventory(), fit));
  return std::move(c.trace());
}

/// Random search: i.i.d. uniform full-cascade evaluations (no initial design).
inline CampaignTrace run_random(Environment& env, const CampaignConfig& cfg) {
  detail::Campaign c(env, cfg);
  StreamRng rng = c.root().split(0x7a4d0ULL);
  while (c.fits(c.schema().full_cost())) {
    const auto x = c.random_point(rng);
    if (x.empty()) break;
    c.run_full(x, SampleOrigin::acquisition, 0);
  }
  return std::move(c.trace());
}

inline CampaignTrace run_campaign(Environment& env, const CampaignConfig& cfg) {
  switch (cfg.driver) {
    case DriverKind::msbo: return run_msbo(env, cfg);
    case DriverKind::bo: return run_standard_bo(env, cfg);
    case DriverKind::bofn: return run_bofn(env, cfg);
    case DriverKind::random: return run_random(env, cfg);
  }
  throw std::invalid_argument("unknown driver");
}

}  // namespace msbo
