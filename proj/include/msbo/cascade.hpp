#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msbo/gp.hpp"
#include "msbo/inventory.hpp"
#include "msbo/random.hpp"

namespace msbo {

class SurrogateUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Column layout of a stage's augmented GP input:
///   standard: [x_i, m_{i-1}]      residual: [x_i, x_{i-1}, m_{i-1}]
/// Stage 1 is always just [x_1].
struct StageLayout {
  std::size_t x_dim = 0;
  std::size_t prev_x_dim = 0;
  std::size_t prev_obs_dim = 0;

  [[nodiscard]] std::size_t dim() const noexcept { return x_dim + prev_x_dim + prev_obs_dim; }

  static StageLayout for_stage(const CascadeSchema& schema, std::size_t stage) {
    StageLayout l;
    l.x_dim = schema.stage(stage).x_dim;
    if (stage > 1) {
      l.prev_obs_dim = schema.stage(stage - 1).obs_dim();
      if (schema.mode == SurrogateMode::residual) l.prev_x_dim = schema.stage(stage - 1).x_dim;
    }
    return l;
  }
};

/// State a continuation starts from: the recorded m_{k-1} and x_{k-1}.
struct StartState {
  Eigen::VectorXd measurement;
  Eigen::VectorXd params;
};

struct StageSurrogate {
  std::size_t stage = 0;
  bool available = false;
  StageLayout layout;
  std::vector<GpModel> gps;  // one per observed output, identical training rows
  // Min-max bounds applied to the incoming measurement m_{i-1}.
  Eigen::VectorXd m_lower;
  Eigen::VectorXd m_range;

  [[nodiscard]] Eigen::Index rows() const noexcept { return gps.empty() ? 0 : gps.front().size(); }

  /// Augmented inputs, one row per incoming measurement row.
  [[nodiscard]] Eigen::MatrixXd augment(const Eigen::VectorXd& x, const Eigen::VectorXd& x_prev,
                                        const Eigen::MatrixXd& m_prev) const {
    const Eigen::Index rows_out = layout.prev_obs_dim == 0 ? 1 : m_prev.rows();
    Eigen::MatrixXd out(rows_out, static_cast<Eigen::Index>(layout.dim()));
    Eigen::Index c = 0;
    if (layout.x_dim) {
      out.leftCols(static_cast<Eigen::Index>(layout.x_dim)).rowwise() = x.transpose();
      c += static_cast<Eigen::Index>(layout.x_dim);
    }
    if (layout.prev_x_dim) {
      out.middleCols(c, static_cast<Eigen::Index>(layout.prev_x_dim)).rowwise() = x_prev.transpose();
      c += static_cast<Eigen::Index>(layout.prev_x_dim);
    }
    if (layout.prev_obs_dim) {
      out.rightCols(static_cast<Eigen::Index>(layout.prev_obs_dim)) =
          (m_prev.rowwise() - m_lower.transpose()).array().rowwise() / m_range.transpose().array();
    }
    return out;
  }
};

class CascadeSurrogate;

struct CascadeFitOptions {
  GpFitOptions gp;
  std::size_t min_records = 1;  // a stage with fewer training rows is unavailable
  // Earlier fit on the same inventory. Stages whose training data is unchanged
  // are copied from it; with warm_start the rest start from its hyperparameters.
  const CascadeSurrogate* previous = nullptr;
  bool warm_start = false;
};

/// Per-particle terminal predictive moments.
struct ParticleMoments {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

/// Chain of independent per-output GPs, one block per stage, with Monte-Carlo
/// propagation of posterior uncertainty from any start stage to the objective.
class CascadeSurrogate {
 public:
  static CascadeSurrogate fit(const Inventory& inventory, const CascadeFitOptions& opt = {}) {
    CascadeSurrogate cs;
    cs.schema_ = inventory.schema();
    const std::size_t n = cs.schema_.n_stages();
    cs.stages_.resize(n);
    for (std::size_t i = 1; i <= n; ++i) {
      StageSurrogate& st = cs.stages_[i - 1];
      st.stage = i;
      st.layout = StageLayout::for_stage(cs.schema_, i);

      std::vector<const SampleRecord*> rows;
      for (const auto& r : inventory.records())
        if (r.stages_completed() >= i) rows.push_back(&r);

      if (i > 1) {
        // Bounds over every recorded m_{i-1}, including samples waiting to continue.
        const auto k = static_cast<Eigen::Index>(st.layout.prev_obs_dim);
        st.m_lower = Eigen::VectorXd::Constant(k, std::numeric_limits<double>::infinity());
        Eigen::VectorXd upper = Eigen::VectorXd::Constant(k, -std::numeric_limits<double>::infinity());
        for (const auto& r : inventory.records())
          if (r.stages_completed() >= i - 1) {
            st.m_lower = st.m_lower.cwiseMin(r.measurements[i - 2]);
            upper = upper.cwiseMax(r.measurements[i - 2]);
          }
        st.m_range = upper - st.m_lower;
        for (Eigen::Index j = 0; j < k; ++j) {
          if (!std::isfinite(st.m_lower(j))) st.m_lower(j) = 0.0;
          if (!(st.m_range(j) > 1e-12) || !std::isfinite(st.m_range(j))) st.m_range(j) = 1.0;
        }
      }

      if (rows.size() < std::max<std::size_t>(1, opt.min_records)) continue;

      const auto nr = static_cast<Eigen::Index>(rows.size());
      Eigen::MatrixXd x(nr, static_cast<Eigen::Index>(st.layout.dim()));
      const std::size_t obs = cs.schema_.stage(i).obs_dim();
      Eigen::MatrixXd y(nr, static_cast<Eigen::Index>(obs));
      for (Eigen::Index r = 0; r < nr; ++r) {
        const SampleRecord& rec = *rows[static_cast<std::size_t>(r)];
        const Eigen::VectorXd x_prev = (i > 1 && st.layout.prev_x_dim) ? rec.params[i - 2] : Eigen::VectorXd();
        const Eigen::MatrixXd m_prev =
            i > 1 ? Eigen::MatrixXd(rec.measurements[i - 2].transpose()) : Eigen::MatrixXd(1, 0);
        x.row(r) = st.augment(rec.params[i - 1], x_prev, m_prev).row(0);
        y.row(r) = rec.measurements[i - 1].transpose();
      }
      const StageSurrogate* old = opt.previous && opt.previous->stages_.size() == n ? &opt.previous->stages_[i - 1] : nullptr;
      if (old && !(old->available && old->gps.size() == obs)) old = nullptr;
      if (old && same_training_data(old->gps, x, y)) {
        st.gps = old->gps;
        st.available = true;
        continue;
      }
      for (std::size_t j = 0; j < obs; ++j) {
        GpFitOptions g = opt.gp;
        g.seed = opt.gp.seed + 1000 * (i - 1) + j;
        if (opt.warm_start && old) g.warm_start = old->gps[j].hyperparams();
        st.gps.push_back(GpModel::fit(x, y.col(static_cast<Eigen::Index>(j)), g));
      }
      st.available = true;
    }
    return cs;
  }

  [[nodiscard]] const CascadeSchema& schema() const noexcept { return schema_; }
  [[nodiscard]] std::size_t n_stages() const noexcept { return stages_.size(); }
  [[nodiscard]] const StageSurrogate& stage(std::size_t i) const { return stages_.at(i - 1); }

  [[nodiscard]] bool available_from(std::size_t start_stage) const {
    for (std::size_t i = start_stage; i <= stages_.size(); ++i)
      if (!stages_[i - 1].available) return false;
    return true;
  }

  /// Standard deviation used to standardise the objective GP.
  [[nodiscard]] double objective_scale() const { return stages_.back().gps.front().standardisation().std; }

  /// Propagates S particles from `start_stage` through the last stage and
  /// returns each particle's terminal predictive mean and variance. Particle s
  /// draws all its noise from rng.split(s), so the particle set does not
  /// depend on evaluation order.
  [[nodiscard]] ParticleMoments propagate_moments(const std::vector<Eigen::VectorXd>& x_tail, std::size_t start_stage,
                                                  const std::optional<StartState>& start, std::size_t s,
                                                  const StreamRng& rng) const {
    std::vector<StreamRng> streams;
    streams.reserve(s);
    for (std::size_t p = 0; p < s; ++p) streams.push_back(rng.split(p));
    return run_particles(x_tail, start_stage, start, s, &streams);
  }

  /// Terminal draws y^(s), s = 1..S.
  [[nodiscard]] Eigen::VectorXd propagate(const std::vector<Eigen::VectorXd>& x_tail, std::size_t start_stage,
                                          const std::optional<StartState>& start, std::size_t s,
                                          const StreamRng& rng) const {
    std::vector<StreamRng> streams;
    streams.reserve(s);
    for (std::size_t p = 0; p < s; ++p) streams.push_back(rng.split(p));
    const ParticleMoments pm = run_particles(x_tail, start_stage, start, s, &streams);
    Eigen::VectorXd y(static_cast<Eigen::Index>(s));
    for (std::size_t p = 0; p < s; ++p) {
      const auto k = static_cast<Eigen::Index>(p);
      y(k) = pm.mean(k) + std::sqrt(pm.variance(k)) * streams[p].normal();
    }
    return y;
  }

  /// Deterministic pass feeding posterior means forward.
  [[nodiscard]] double propagate_mean_only(const std::vector<Eigen::VectorXd>& x_tail, std::size_t start_stage,
                                           const std::optional<StartState>& start) const {
    return run_particles(x_tail, start_stage, start, 1, nullptr).mean(0);
  }

 private:
  static bool same_training_data(const std::vector<GpModel>& gps, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    const Eigen::MatrixXd& old_x = gps.front().train_x();
    if (old_x.rows() != x.rows() || old_x.cols() != x.cols() || old_x != x) return false;
    for (std::size_t j = 0; j < gps.size(); ++j)
      if (gps[j].train_y() != y.col(static_cast<Eigen::Index>(j))) return false;
    return true;
  }

  ParticleMoments run_particles(const std::vector<Eigen::VectorXd>& x_tail, std::size_t start_stage,
                                const std::optional<StartState>& start, std::size_t s,
                                std::vector<StreamRng>* streams) const {
    const std::size_t n = stages_.size();
    if (start_stage < 1 || start_stage > n) throw std::invalid_argument("propagate: start stage out of range");
    if (x_tail.size() != n - start_stage + 1) throw std::invalid_argument("propagate: need params for every remaining stage");
    if (start_stage > 1 && !start) throw std::invalid_argument("propagate: continuation needs a start measurement");
    if (!available_from(start_stage))
      throw SurrogateUnavailable("surrogate unavailable for stages " + std::to_string(start_stage) + ".." + std::to_string(n));
    if (s == 0) throw std::invalid_argument("propagate: need at least one particle");

    const auto sp = static_cast<Eigen::Index>(s);
    Eigen::MatrixXd m_prev;
    Eigen::VectorXd x_prev;
    bool shared = true;  // all particles still share one input row
    if (start_stage > 1) {
      m_prev = start->measurement.transpose();
      x_prev = start->params;
    }

    for (std::size_t i = start_stage; i <= n; ++i) {
      const StageSurrogate& st = stages_[i - 1];
      const Eigen::VectorXd& x = x_tail[i - start_stage];
      if (static_cast<std::size_t>(x.size()) != st.layout.x_dim)
        throw std::invalid_argument("propagate: params dimension mismatch at stage " + std::to_string(i));
      const Eigen::MatrixXd inputs = st.augment(x, x_prev, i > 1 ? m_prev : Eigen::MatrixXd(1, 0));

      if (i == n) {
        const GpPosterior post = st.gps.front().posterior(inputs);
        ParticleMoments pm;
        if (shared) {
          pm.mean = Eigen::VectorXd::Constant(sp, post.mean(0));
          pm.variance = Eigen::VectorXd::Constant(sp, post.variance(0));
        } else {
          pm.mean = post.mean;
          pm.variance = post.variance;
        }
        return pm;
      }

      Eigen::MatrixXd m_next(sp, static_cast<Eigen::Index>(st.gps.size()));
      for (std::size_t j = 0; j < st.gps.size(); ++j) {
        const GpPosterior post = st.gps[j].posterior(inputs);
        for (Eigen::Index p = 0; p < sp; ++p) {
          const Eigen::Index r = shared ? 0 : p;
          const double z = streams ? (*streams)[static_cast<std::size_t>(p)].normal() : 0.0;
          m_next(p, static_cast<Eigen::Index>(j)) = post.mean(r) + std::sqrt(post.variance(r)) * z;
        }
      }
      m_prev = std::move(m_next);
      x_prev = x;
      shared = (streams == nullptr);
    }
    throw std::logic_error("unreachable");
  }

  CascadeSchema schema_;
  std::vector<StageSurrogate> stages_;
};

}  // namespace msbo
