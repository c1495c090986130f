#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <regex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msbo/inventory.hpp"
#include "msbo/mlp.hpp"
#include "msbo/optimize.hpp"
#include "msbo/random.hpp"
#include "msbo/sobol.hpp"

namespace msbo {

// Seed-data layout constants. Together with the trainer settings they define
// the benchmark family, so changing any of them changes every function.
inline constexpr double kBoundaryTarget = -1.5;
inline constexpr double kBoundaryOffset = 0.05;
inline constexpr std::size_t kBoundaryPointsPerFace = 4;

/// Seed inputs and targets for one stage function, as columns.
struct SeedData {
  Eigen::MatrixXd x;  // in x n
  Eigen::MatrixXd y;  // out x n
};

/// seed_size Sobol points with N(0,1) targets, followed by 2*in*4 penalty
/// points just outside each face of the unit cube with target -1.5.
inline SeedData make_seed_data(std::size_t in_dim, std::size_t out_dim, std::size_t seed_size, std::uint64_t seed) {
  StreamRng rng(seed);
  StreamRng target_rng = rng.split(1);
  SobolSequence sobol(in_dim, rng.split(2).key() | 1ULL);
  const std::size_t n_boundary = 2 * in_dim * kBoundaryPointsPerFace;
  const auto n = static_cast<Eigen::Index>(seed_size + n_boundary);
  SeedData d{Eigen::MatrixXd(static_cast<Eigen::Index>(in_dim), n), Eigen::MatrixXd(static_cast<Eigen::Index>(out_dim), n)};
  Eigen::Index c = 0;
  for (std::size_t k = 0; k < seed_size; ++k, ++c) {
    d.x.col(c) = sobol.next();
    for (Eigen::Index o = 0; o < d.y.rows(); ++o) d.y(o, c) = target_rng.normal();
  }
  std::optional<SobolSequence> face;
  if (in_dim > 1) face.emplace(in_dim - 1, rng.split(3).key() | 1ULL);
  for (std::size_t j = 0; j < in_dim; ++j)
    for (int side = 0; side < 2; ++side)
      for (std::size_t k = 0; k < kBoundaryPointsPerFace; ++k, ++c) {
        Eigen::VectorXd p(static_cast<Eigen::Index>(in_dim));
        const Eigen::VectorXd q = face ? face->next() : Eigen::VectorXd();
        for (std::size_t t = 0, u = 0; t < in_dim; ++t)
          p(static_cast<Eigen::Index>(t)) = t == j ? (side == 0 ? -kBoundaryOffset : 1.0 + kBoundaryOffset)
                                                   : q(static_cast<Eigen::Index>(u++));
        d.x.col(c) = p;
        d.y.col(c).setConstant(kBoundaryTarget);
      }
  return d;
}

/// A random smooth function: an MLP fitted to random seed data.
inline MlpFunction generate_stage(std::size_t in_dim, std::size_t out_dim, std::size_t seed_size, std::uint64_t seed,
                                  OutputScaling scaling, const MlpTrainOptions& opt = {}) {
  if (seed_size < 1) throw std::invalid_argument("generate_stage: seed_size must be >= 1");
  if (in_dim < 1 || out_dim < 1) throw std::invalid_argument("generate_stage: dimensions must be >= 1");
  const SeedData data = make_seed_data(in_dim, out_dim, seed_size, seed);
  StreamRng rng = StreamRng(seed).split(4);
  MlpFunction net = init_mlp(in_dim, out_dim, opt, scaling, rng);
  StreamRng batches = StreamRng(seed).split(5);
  train_mlp(net, data.x, data.y, opt, batches);
  return net;
}

struct SyntheticStageConfig {
  std::size_t x_dim = 1;
  std::size_t h_dim = 1;
  std::size_t seed_size = 2;
  std::vector<std::size_t> observed;  // empty = fully observed
  double process_noise_std = 0.0;
  double measurement_noise_std = 0.0;
};

struct SyntheticCascadeConfig {
  std::string name;
  std::vector<SyntheticStageConfig> stages;
  std::uint64_t master_seed = 0;
  std::size_t optimum_restarts = 64;
  std::size_t optimum_probe_points = 0;  // 0 = 1e6 for total dim <= 4, else 1e5
  std::vector<double> min_stage_frequency;
  SurrogateMode surrogate_mode = SurrogateMode::standard;
  MlpTrainOptions training;

  [[nodiscard]] std::size_t total_x_dim() const {
    std::size_t d = 0;
    for (const auto& s : stages) d += s.x_dim;
    return d;
  }
};

struct StageOutput {
  Eigen::VectorXd latent;       // h_i, including process noise
  Eigen::VectorXd measurement;  // M_i h_i + measurement noise
};

struct GroundTruth {
  Eigen::VectorXd x;  // flat x_1..x_N
  double y = -std::numeric_limits<double>::infinity();
};

class SyntheticCascade;
GroundTruth find_ground_truth_optimum(const SyntheticCascade& cascade, std::size_t restarts,
                                      std::size_t probe_points = 0);

/// Generated ground-truth cascade: h_i = f_i([x_i, h_{i-1}]) + process noise,
/// m_i = M_i h_i + measurement noise. Sigmoid scaling on all but the last stage.
class SyntheticCascade {
 public:
  SyntheticCascade() = default;

  static SyntheticCascade generate(const SyntheticCascadeConfig& cfg, bool compute_optimum = true) {
    if (cfg.stages.empty()) throw std::invalid_argument("synthetic cascade needs at least one stage");
    if (cfg.stages.back().h_dim != 1 && cfg.stages.back().observed.size() != 1)
      throw std::invalid_argument("synthetic cascade: final stage must produce one observed output");
    SyntheticCascade c;
    c.cfg_ = cfg;
    for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
      auto& s = c.cfg_.stages[i];
      if (s.observed.empty())
        for (std::size_t k = 0; k < s.h_dim; ++k) s.observed.push_back(k);
      const std::size_t in = s.x_dim + (i > 0 ? cfg.stages[i - 1].h_dim : 0);
      const bool last = i + 1 == cfg.stages.size();
      c.stages_.push_back(generate_stage(in, s.h_dim, s.seed_size, stage_seed(cfg.master_seed, i),
                                         last ? OutputScaling::none : OutputScaling::sigmoid, cfg.training));
    }
    if (compute_optimum) c.set_optimum(find_ground_truth_optimum(c, cfg.optimum_restarts, cfg.optimum_probe_points));
    return c;
  }

  static std::uint64_t stage_seed(std::uint64_t master, std::size_t stage_index) {
    return mix64(master * 0x9e3779b97f4a7c15ULL + stage_index + 1);
  }

  [[nodiscard]] const SyntheticCascadeConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] const std::vector<MlpFunction>& stages() const noexcept { return stages_; }
  [[nodiscard]] std::size_t n_stages() const noexcept { return stages_.size(); }
  [[nodiscard]] std::size_t total_x_dim() const { return cfg_.total_x_dim(); }
  [[nodiscard]] const GroundTruth& optimum() const noexcept { return optimum_; }
  void set_optimum(GroundTruth g) { optimum_ = std::move(g); }

  /// Schema seen by the optimiser. Costs default to 1 per stage.
  [[nodiscard]] CascadeSchema schema(const std::vector<double>& cost_ratios = {}) const {
    CascadeSchema s;
    s.mode = cfg_.surrogate_mode;
    for (const auto& st : cfg_.stages) s.stages.push_back({st.x_dim, st.h_dim, st.observed, 1.0});
    if (!cost_ratios.empty()) s.set_cost_ratios(cost_ratios);
    s.validate();
    return s;
  }

  /// Executes one stage. `h_prev` must be given iff stage > 1 (1-based).
  StageOutput run_stage(std::size_t stage, const Eigen::VectorXd& params, const Eigen::VectorXd* h_prev,
                        StreamRng& rng) const {
    if (stage < 1 || stage > stages_.size()) throw std::invalid_argument("run_stage: stage out of range");
    const auto& sc = cfg_.stages[stage - 1];
    if (static_cast<std::size_t>(params.size()) != sc.x_dim) throw std::invalid_argument("run_stage: params dimension");
    if ((stage > 1) != (h_prev != nullptr)) throw std::invalid_argument("run_stage: h_prev given iff stage > 1");
    StageOutput out;
    out.latent = stages_[stage - 1](stage_input(params, h_prev));
    if (sc.process_noise_std > 0.0)
      for (Eigen::Index k = 0; k < out.latent.size(); ++k) out.latent(k) += sc.process_noise_std * rng.normal();
    out.measurement.resize(static_cast<Eigen::Index>(sc.observed.size()));
    for (std::size_t k = 0; k < sc.observed.size(); ++k) {
      double v = out.latent(static_cast<Eigen::Index>(sc.observed[k]));
      if (sc.measurement_noise_std > 0.0) v += sc.measurement_noise_std * rng.normal();
      out.measurement(static_cast<Eigen::Index>(k)) = v;
    }
    return out;
  }

  /// Noise-free end-to-end objective at flat x = [x_1, ..., x_N].
  [[nodiscard]] double evaluate(const Eigen::VectorXd& x) const {
    Eigen::VectorXd h;
    Eigen::Index off = 0;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      const auto d = static_cast<Eigen::Index>(cfg_.stages[i].x_dim);
      h = stages_[i](stage_input(x.segment(off, d), i > 0 ? &h : nullptr));
      off += d;
    }
    return h(static_cast<Eigen::Index>(cfg_.stages.back().observed.front()));
  }

  /// Noise-free objective for a batch of flat points (columns).
  [[nodiscard]] Eigen::VectorXd evaluate_batch(const Eigen::MatrixXd& xs) const {
    Eigen::MatrixXd h;
    Eigen::Index off = 0;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      const auto d = static_cast<Eigen::Index>(cfg_.stages[i].x_dim);
      Eigen::MatrixXd in(d + (i > 0 ? h.rows() : 0), xs.cols());
      in.topRows(d) = xs.middleRows(off, d);
      if (i > 0) in.bottomRows(h.rows()) = h;
      h = stages_[i].forward(in);
      off += d;
    }
    return h.row(static_cast<Eigen::Index>(cfg_.stages.back().observed.front())).transpose();
  }

  /// Gradient of the noise-free objective with respect to flat x.
  [[nodiscard]] Eigen::VectorXd gradient(const Eigen::VectorXd& x) const {
    const std::size_t n = stages_.size();
    std::vector<Eigen::VectorXd> inputs(n);
    Eigen::VectorXd h;
    std::vector<Eigen::Index> offs(n);
    Eigen::Index off = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto d = static_cast<Eigen::Index>(cfg_.stages[i].x_dim);
      offs[i] = off;
      inputs[i] = stage_input(x.segment(off, d), i > 0 ? &h : nullptr);
      h = stages_[i](inputs[i]);
      off += d;
    }
    Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
    Eigen::VectorXd up = Eigen::VectorXd::Unit(static_cast<Eigen::Index>(cfg_.stages.back().h_dim),
                                               static_cast<Eigen::Index>(cfg_.stages.back().observed.front()));
    for (std::size_t i = n; i-- > 0;) {
      const Eigen::VectorXd gin = stages_[i].vjp(inputs[i], up);
      const auto d = static_cast<Eigen::Index>(cfg_.stages[i].x_dim);
      g.segment(offs[i], d) = gin.head(d);
      up = gin.tail(gin.size() - d);
    }
    return g;
  }

  /// Output noise std at x from a first-order expansion: process noise at
  /// stage i enters through d y / d h_i, measurement noise only at the end.
  [[nodiscard]] double output_noise_std(const Eigen::VectorXd& x) const {
    const std::size_t n = stages_.size();
    std::vector<Eigen::VectorXd> inputs(n);
    Eigen::VectorXd h;
    Eigen::Index off = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto d = static_cast<Eigen::Index>(cfg_.stages[i].x_dim);
      inputs[i] = stage_input(x.segment(off, d), i > 0 ? &h : nullptr);
      h = stages_[i](inputs[i]);
      off += d;
    }
    double var = std::pow(cfg_.stages.back().measurement_noise_std, 2);
    Eigen::VectorXd dy_dh = Eigen::VectorXd::Unit(static_cast<Eigen::Index>(cfg_.stages.back().h_dim),
                                                  static_cast<Eigen::Index>(cfg_.stages.back().observed.front()));
    for (std::size_t i = n; i-- > 0;) {
      var += std::pow(cfg_.stages[i].process_noise_std, 2) * dy_dh.squaredNorm();
      if (i == 0) break;
      const Eigen::VectorXd gin = stages_[i].vjp(inputs[i], dy_dh);
      dy_dh = gin.tail(gin.size() - static_cast<Eigen::Index>(cfg_.stages[i].x_dim));
    }
    return std::sqrt(var);
  }

  /// Sample std of the terminal measurement over repeated noisy runs at x.
  [[nodiscard]] double output_noise_std_mc(const Eigen::VectorXd& x, std::size_t runs, StreamRng rng) const {
    Eigen::VectorXd ys(static_cast<Eigen::Index>(runs));
    for (std::size_t r = 0; r < runs; ++r) {
      Eigen::VectorXd h;
      Eigen::VectorXd m;
      Eigen::Index off = 0;
      for (std::size_t i = 0; i < stages_.size(); ++i) {
        const auto d = static_cast<Eigen::Index>(cfg_.stages[i].x_dim);
        auto out = run_stage(i + 1, x.segment(off, d), i > 0 ? &h : nullptr, rng);
        h = out.latent;
        m = out.measurement;
        off += d;
      }
      ys(static_cast<Eigen::Index>(r)) = m(0);
    }
    const double mean = ys.mean();
    return std::sqrt((ys.array() - mean).square().sum() / static_cast<double>(runs - 1));
  }

  [[nodiscard]] bool noisy() const {
    return std::any_of(cfg_.stages.begin(), cfg_.stages.end(),
                       [](const auto& s) { return s.process_noise_std > 0.0 || s.measurement_noise_std > 0.0; });
  }

  /// Regret reference: the optimum, raised by three output-noise standard
  /// deviations when the cascade is noisy.
  [[nodiscard]] double regret_reference() const {
    return noisy() ? optimum_.y + 3.0 * output_noise_std(optimum_.x) : optimum_.y;
  }

  // Portable weight file. All integers are little-endian uint32 except the
  // seed (uint64); all reals little-endian IEEE-754 binary64.
  //   "MSBOCASC" u32 version=1 u64 master_seed u32 n_stages
  //   per stage: u32 x_dim u32 h_dim u32 seed_size u32 scaling(0 none, 1 sigmoid)
  //              f64 leaky_slope f64 process_noise_std f64 measurement_noise_std
  //              u32 n_observed, u32 observed[n_observed]
  //              u32 n_layers; per layer: u32 rows u32 cols, f64 weight[rows*cols]
  //              (row-major), f64 bias[rows]
  //   u32 D, f64 x_opt[D], f64 y_opt
  void export_weights(std::ostream& os) const {
    os.write("MSBOCASC", 8);
    put_u32(os, 1);
    put_u64(os, cfg_.master_seed);
    put_u32(os, static_cast<std::uint32_t>(stages_.size()));
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      const auto& sc = cfg_.stages[i];
      const auto& f = stages_[i];
      put_u32(os, static_cast<std::uint32_t>(sc.x_dim));
      put_u32(os, static_cast<std::uint32_t>(sc.h_dim));
      put_u32(os, static_cast<std::uint32_t>(sc.seed_size));
      put_u32(os, f.scaling() == OutputScaling::sigmoid ? 1u : 0u);
      put_f64(os, f.leaky_slope());
      put_f64(os, sc.process_noise_std);
      put_f64(os, sc.measurement_noise_std);
      put_u32(os, static_cast<std::uint32_t>(sc.observed.size()));
      for (auto k : sc.observed) put_u32(os, static_cast<std::uint32_t>(k));
      put_u32(os, static_cast<std::uint32_t>(f.layers().size()));
      for (const auto& l : f.layers()) {
        put_u32(os, static_cast<std::uint32_t>(l.weight.rows()));
        put_u32(os, static_cast<std::uint32_t>(l.weight.cols()));
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
          for (Eigen::Index c = 0; c < l.weight.cols(); ++c) put_f64(os, l.weight(r, c));
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) put_f64(os, l.bias(r));
      }
    }
    put_u32(os, static_cast<std::uint32_t>(optimum_.x.size()));
    for (Eigen::Index k = 0; k < optimum_.x.size(); ++k) put_f64(os, optimum_.x(k));
    put_f64(os, optimum_.y);
  }

  static SyntheticCascade import_weights(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, "MSBOCASC", 8) != 0) throw std::runtime_error("weight file: bad magic");
    if (get_u32(is) != 1) throw std::runtime_error("weight file: unsupported version");
    SyntheticCascade c;
    c.cfg_.master_seed = get_u64(is);
    const auto n = get_u32(is);
    for (std::uint32_t i = 0; i < n; ++i) {
      SyntheticStageConfig sc;
      sc.x_dim = get_u32(is);
      sc.h_dim = get_u32(is);
      sc.seed_size = get_u32(is);
      const auto scaling = get_u32(is) ? OutputScaling::sigmoid : OutputScaling::none;
      const double slope = get_f64(is);
      sc.process_noise_std = get_f64(is);
      sc.measurement_noise_std = get_f64(is);
      const auto nobs = get_u32(is);
      for (std::uint32_t k = 0; k < nobs; ++k) sc.observed.push_back(get_u32(is));
      const auto nl = get_u32(is);
      std::vector<DenseLayer> layers;
      for (std::uint32_t l = 0; l < nl; ++l) {
        const auto rows = get_u32(is), cols = get_u32(is);
        DenseLayer layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
        for (std::uint32_t r = 0; r < rows; ++r)
          for (std::uint32_t k = 0; k < cols; ++k) layer.weight(r, k) = get_f64(is);
        for (std::uint32_t r = 0; r < rows; ++r) layer.bias(r) = get_f64(is);
        layers.push_back(std::move(layer));
      }
      c.cfg_.stages.push_back(sc);
      c.stages_.emplace_back(std::move(layers), scaling, slope);
    }
    const auto d = get_u32(is);
    c.optimum_.x.resize(d);
    for (std::uint32_t k = 0; k < d; ++k) c.optimum_.x(k) = get_f64(is);
    c.optimum_.y = get_f64(is);
    if (!is) throw std::runtime_error("weight file: truncated");
    return c;
  }

 private:
  [[nodiscard]] Eigen::VectorXd stage_input(const Eigen::VectorXd& params, const Eigen::VectorXd* h_prev) const {
    if (!h_prev) return params;
    Eigen::VectorXd in(params.size() + h_prev->size());
    in << params, *h_prev;
    return in;
  }

  static void put_bytes(std::ostream& os, std::uint64_t v, int n) {
    char b[8];
    for (int k = 0; k < n; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xff);
    os.write(b, n);
  }
  static std::uint64_t get_bytes(std::istream& is, int n) {
    unsigned char b[8] = {};
    is.read(reinterpret_cast<char*>(b), n);
    std::uint64_t v = 0;
    for (int k = 0; k < n; ++k) v |= static_cast<std::uint64_t>(b[k]) << (8 * k);
    return v;
  }
  static void put_u32(std::ostream& os, std::uint32_t v) { put_bytes(os, v, 4); }
  static void put_u64(std::ostream& os, std::uint64_t v) { put_bytes(os, v, 8); }
  static void put_f64(std::ostream& os, double v) { put_bytes(os, std::bit_cast<std::uint64_t>(v), 8); }
  static std::uint32_t get_u32(std::istream& is) { return static_cast<std::uint32_t>(get_bytes(is, 4)); }
  static std::uint64_t get_u64(std::istream& is) { return get_bytes(is, 8); }
  static double get_f64(std::istream& is) { return std::bit_cast<double>(get_bytes(is, 8)); }

  SyntheticCascadeConfig cfg_;
  std::vector<MlpFunction> stages_;
  GroundTruth optimum_;
};

/// Multi-start projected L-BFGS on the noise-free composed network, plus a
/// dense Sobol probe whose best point is also polished; returns the best of all.
inline GroundTruth find_ground_truth_optimum(const SyntheticCascade& cascade, std::size_t restarts,
                                             std::size_t probe_points) {
  const std::size_t dim = cascade.total_x_dim();
  const auto d = static_cast<Eigen::Index>(dim);
  if (probe_points == 0) probe_points = dim <= 4 ? 1000000 : 100000;
  const Eigen::VectorXd lo = Eigen::VectorXd::Zero(d), hi = Eigen::VectorXd::Ones(d);
  auto fg = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = cascade.gradient(x);
    return cascade.evaluate(x);
  };
  BoxAscentOptions bo;
  bo.max_iterations = 500;
  bo.gradient_tolerance = 1e-10;
  bo.value_tolerance = 1e-15;

  GroundTruth best;
  auto consider = [&](const Eigen::VectorXd& x) {
    const double y = cascade.evaluate(x);
    if (y > best.y) best = {x, y};
  };

  SobolSequence starts(dim, 0);
  for (std::size_t r = 0; r < restarts; ++r) consider(maximize_in_box(fg, starts.next(), lo, hi, bo).x);

  SobolSequence probe(dim, 0x9e0be5ULL);
  constexpr std::size_t chunk = 8192;
  Eigen::VectorXd best_probe;
  double best_probe_y = -std::numeric_limits<double>::infinity();
  for (std::size_t done = 0; done < probe_points; done += chunk) {
    const std::size_t m = std::min(chunk, probe_points - done);
    Eigen::MatrixXd xs(d, static_cast<Eigen::Index>(m));
    for (std::size_t k = 0; k < m; ++k) xs.col(static_cast<Eigen::Index>(k)) = probe.next();
    const Eigen::VectorXd ys = cascade.evaluate_batch(xs);
    Eigen::Index arg = 0;
    const double v = ys.maxCoeff(&arg);
    if (v > best_probe_y) {
      best_probe_y = v;
      best_probe = xs.col(arg);
    }
  }
  consider(best_probe);
  consider(maximize_in_box(fg, best_probe, lo, hi, bo).x);
  return best;
}

namespace detail {

inline SyntheticStageConfig stage_cfg(std::size_t x_dim, std::size_t h_dim, std::size_t seed_size,
                                      std::vector<std::size_t> observed = {}, double process_noise = 0.0) {
  return {x_dim, h_dim, seed_size, std::move(observed), process_noise, 0.0};
}

}  // namespace detail

/// Benchmark configurations:
///   demo2d              1-d x_1, 1-d h_1, 1-d x_2; seed sizes (8, 2)
///   sweep(a,b)          x_1 in R^4, h_1 in R^2, x_2 in R^2; seed sizes (a, b);
///                       final-stage minimum sampling frequency 0.15
///   three_stage         x_1 in R^4, x_2, x_3, h_1, h_2 in R^2; seed sizes (15, 15, 5)
///   three_stage_masked  x_1 in R^4, x_2 in R^2, x_3 in R^1, h_1 in R^4 (2 observed),
///                       h_2 in R^2 (1 observed); seed sizes (50, 15, 2)
///   noisy2              sweep(50,2) with process noise std (0.05, 0.1)
inline SyntheticCascadeConfig preset(const std::string& name, std::uint64_t master_seed = 0) {
  using detail::stage_cfg;
  SyntheticCascadeConfig c;
  c.name = name;
  c.master_seed = master_seed;
  std::smatch m;
  static const std::regex sweep_re(R"(sweep\(\s*(\d+)\s*,\s*(\d+)\s*\))");
  if (name == "demo2d") {
    c.stages = {stage_cfg(1, 1, 8), stage_cfg(1, 1, 2)};
  } else if (std::regex_match(name, m, sweep_re)) {
    c.stages = {stage_cfg(4, 2, std::stoul(m[1].str())), stage_cfg(2, 1, std::stoul(m[2].str()))};
    c.min_stage_frequency = {0.0, 0.15};
  } else if (name == "three_stage") {
    c.stages = {stage_cfg(4, 2, 15), stage_cfg(2, 2, 15), stage_cfg(2, 1, 5)};
  } else if (name == "three_stage_masked") {
    c.stages = {stage_cfg(4, 4, 50, {0, 1}), stage_cfg(2, 2, 15, {0}), stage_cfg(1, 1, 2)};
  } else if (name == "noisy2") {
    c.stages = {stage_cfg(4, 2, 50, {}, 0.05), stage_cfg(2, 1, 2, {}, 0.1)};
    c.min_stage_frequency = {0.0, 0.15};
  } else {
    throw std::invalid_argument("unknown preset: " + name);
  }
  return c;
}

}  // namespace msbo
