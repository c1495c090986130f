#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "msbo/dataset.hpp"
#include "msbo/drivers.hpp"
#include "msbo/synthetic.hpp"

namespace msbo {

inline constexpr const char* kVersion = "0.3.0";
inline constexpr double kRegretFloor = 1e-12;

/// Natural-log simple regret per trace event, floored at ln(1e-12).
inline std::vector<double> compute_regret(const CampaignTrace& trace, double reference) {
  if (!std::isfinite(reference)) throw std::invalid_argument("compute_regret: reference must be finite");
  std::vector<double> out;
  out.reserve(trace.events.size());
  for (const auto& e : trace.events) {
    // nothing observed at the final stage yet
    if (std::isnan(e.best_observed_y)) {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    out.push_back(std::log(std::max(kRegretFloor, std::abs(reference - e.best_observed_y))));
  }
  return out;
}

/// Fraction of the pool at least as good as the best candidate found so far.
inline std::vector<double> compute_percentile(const CampaignTrace& trace, const Eigen::VectorXd& objective_values) {
  std::vector<double> out;
  out.reserve(trace.events.size());
  for (const auto& e : trace.events)
    out.push_back(std::isnan(e.best_observed_y) ? std::numeric_limits<double>::quiet_NaN()
                                                : percentile_rank(objective_values, e.best_observed_y));
  return out;
}

/// A per-event metric series against cumulative cost.
struct CostSeries {
  std::vector<double> cost;
  std::vector<double> value;
  double budget = 0.0;
};

struct AggregateCurve {
  std::vector<double> grid;
  std::vector<double> mean;
  std::vector<double> std;  // sample (n-1) standard deviation
};

inline std::vector<double> cost_grid(double from, double to, std::size_t points = 200) {
  if (points < 2 || !(to > from)) return {from};
  std::vector<double> g(points);
  for (std::size_t k = 0; k < points; ++k)
    g[k] = k + 1 == points ? to : from + (to - from) * static_cast<double>(k) / static_cast<double>(points - 1);
  return g;
}

/// Value of the last event at or before `cost` (carry forward).
inline double step_value(const CostSeries& s, double cost) {
  const auto it = std::upper_bound(s.cost.begin(), s.cost.end(), cost + 1e-9);
  if (it == s.cost.begin()) throw std::invalid_argument("aggregate: grid point precedes the first event");
  return s.value[static_cast<std::size_t>(it - s.cost.begin()) - 1];
}

inline AggregateCurve aggregate(const std::vector<CostSeries>& series, const std::vector<double>& grid) {
  if (series.size() < 2) throw std::invalid_argument("aggregate: at least two traces are required");
  for (const auto& s : series)
    if (!grid.empty() && grid.back() > s.budget + 1e-9)
      throw std::invalid_argument("aggregate: cost grid extends beyond a trace's budget");
  AggregateCurve a;
  a.grid = grid;
  const double n = static_cast<double>(series.size());
  for (double g : grid) {
    double sum = 0.0, sq = 0.0;
    std::vector<double> v;
    for (const auto& s : series) v.push_back(step_value(s, g));
    for (double x : v) sum += x;
    const double m = sum / n;
    for (double x : v) sq += (x - m) * (x - m);
    a.mean.push_back(m);
    a.std.push_back(std::sqrt(sq / (n - 1.0)));
  }
  return a;
}

inline CostSeries to_series(const CampaignTrace& trace, std::vector<double> values) {
  CostSeries s;
  for (const auto& e : trace.events) s.cost.push_back(e.cumulative_cost);
  s.value = std::move(values);
  s.budget = trace.budget;
  return s;
}

// ---------------------------------------------------------------------------
// Experiment configuration (JSON)

enum class MetricKind { regret, percentile };

struct ExperimentConfig {
  std::optional<std::string> preset;
  std::uint64_t generator_seed = 0;
  bool vary_generator = false;  // generator seed = run seed
  std::optional<std::string> dataset;
  bool minimise = false;
  std::vector<DriverKind> drivers{DriverKind::msbo};
  std::vector<std::uint64_t> seeds;
  double budget = 0.0;
  std::string cost_model = "unit";  // unit | uniform | ratios
  std::vector<double> cost_ratios;
  MetricKind metric = MetricKind::regret;
  std::optional<SurrogateMode> surrogate_mode;
  std::optional<std::size_t> init_design_size;
  AcquisitionConfig acquisition;
  std::optional<std::vector<double>> min_stage_frequency;
  std::size_t workers = 0;  // 0 = hardware concurrency
  std::size_t grid_points = 200;
  std::optional<std::size_t> optimum_probe_points;  // ground-truth search effort
  int full_refit_every = 10;
  nlohmann::json source;

  void validate() const {
    if (preset.has_value() == dataset.has_value()) throw std::invalid_argument("config: exactly one of preset, dataset");
    if (seeds.empty()) throw std::invalid_argument("config: seeds must be nonempty");
    if (drivers.empty()) throw std::invalid_argument("config: drivers must be nonempty");
    if (!(budget > 0.0)) throw std::invalid_argument("config: budget must be positive");
    for (double r : cost_ratios)
      if (!(r > 0.0)) throw std::invalid_argument("config: cost ratios must be positive");
  }
};

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  ExperimentConfig c;
  c.source = j;
  if (j.contains("preset")) c.preset = j.at("preset").get<std::string>();
  c.generator_seed = j.value("generator_seed", std::uint64_t{0});
  c.vary_generator = j.value("vary_generator", false);
  if (j.contains("dataset")) c.dataset = j.at("dataset").get<std::string>();
  c.minimise = j.value("minimise", false);
  if (j.contains("drivers")) {
    c.drivers.clear();
    for (const auto& d : j.at("drivers")) c.drivers.push_back(parse_driver(d.get<std::string>()));
  }
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  c.budget = j.value("budget", 0.0);
  if (j.contains("cost_model")) {
    const auto& cm = j.at("cost_model");
    if (cm.is_array()) {
      c.cost_model = "ratios";
      c.cost_ratios = cm.get<std::vector<double>>();
    } else {
      c.cost_model = cm.get<std::string>();
      if (c.cost_model != "unit" && c.cost_model != "uniform")
        throw std::invalid_argument("config: cost_model must be \"unit\", \"uniform\" or a ratio list");
    }
  }
  const std::string metric = j.value("metric", std::string("regret"));
  if (metric == "regret") c.metric = MetricKind::regret;
  else if (metric == "percentile") c.metric = MetricKind::percentile;
  else throw std::invalid_argument("config: unknown metric " + metric);
  if (j.contains("surrogate_mode")) c.surrogate_mode = parse_surrogate_mode(j.at("surrogate_mode").get<std::string>());
  if (j.contains("init_design_size")) c.init_design_size = j.at("init_design_size").get<std::size_t>();
  if (j.contains("min_stage_frequency")) c.min_stage_frequency = j.at("min_stage_frequency").get<std::vector<double>>();
  auto& a = c.acquisition;
  a.mc_samples = j.value("mc_samples", a.mc_samples);
  a.restarts = j.value("restarts", a.restarts);
  a.raw_samples = j.value("raw_samples", a.raw_samples);
  a.max_iterations = j.value("max_iterations", a.max_iterations);
  a.ucb_beta = j.value("ucb_beta", a.ucb_beta);
  a.cost_weighting = j.value("cost_weighting", a.cost_weighting);
  if (j.contains("terminal"))
    a.terminal = j.at("terminal").get<std::string>() == "sampled" ? TerminalEstimator::sampled : TerminalEstimator::analytic;
  c.workers = j.value("workers", std::size_t{0});
  c.grid_points = j.value("grid_points", std::size_t{200});
  if (j.contains("optimum_probe_points")) c.optimum_probe_points = j.at("optimum_probe_points").get<std::size_t>();
  c.full_refit_every = j.value("full_refit_every", c.full_refit_every);
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open config " + path);
  return parse_experiment_config(nlohmann::json::parse(f));
}

// ---------------------------------------------------------------------------
// Running experiments

struct RunResult {
  DriverKind driver = DriverKind::msbo;
  std::uint64_t seed = 0;
  CampaignTrace trace;
  std::vector<double> metric;      // log regret or percentile per event
  std::vector<double> raw_regret;  // |ref - y*| (regret) or percentile
  double reference = 0.0;

  explicit RunResult(CampaignTrace t) : trace(std::move(t)) {}
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<RunResult> runs;  // ordered by (driver, seed) as in the config
  std::map<std::string, AggregateCurve> aggregates;
  double init_design_cost = 0.0;
};

namespace detail {

inline CascadeSchema apply_cost_model(CascadeSchema s, const ExperimentConfig& c) {
  if (c.cost_model == "uniform") s.set_cost_ratios(std::vector<double>(s.n_stages(), 1.0));
  if (c.cost_model == "ratios") s.set_cost_ratios(c.cost_ratios);
  return s;
}

inline CampaignConfig campaign_config(const ExperimentConfig& c, DriverKind d, std::uint64_t seed,
                                      const std::vector<double>& preset_min_freq) {
  CampaignConfig cc;
  cc.driver = d;
  cc.budget = c.budget;
  cc.seed = seed;
  cc.init_design_size = c.init_design_size;
  cc.acquisition = c.acquisition;
  cc.acquisition.min_stage_frequency = c.min_stage_frequency.value_or(preset_min_freq);
  cc.full_refit_every = c.full_refit_every;
  return cc;
}

}  // namespace detail

/// Runs every (driver, seed) campaign, fanning out over worker threads.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult res;
  res.config = cfg;

  // Problem instances are built up front; campaigns only read them.
  std::map<std::uint64_t, std::shared_ptr<const SyntheticCascade>> cascades;
  std::shared_ptr<const DatasetTask> task;
  std::vector<double> preset_min_freq;
  if (cfg.preset) {
    for (auto seed : cfg.seeds) {
      const std::uint64_t gseed = cfg.vary_generator ? seed : cfg.generator_seed;
      if (cascades.count(gseed)) continue;
      SyntheticCascadeConfig sc = preset(*cfg.preset, gseed);
      if (cfg.surrogate_mode) sc.surrogate_mode = *cfg.surrogate_mode;
      if (cfg.optimum_probe_points) sc.optimum_probe_points = *cfg.optimum_probe_points;
      preset_min_freq = sc.min_stage_frequency;
      cascades[gseed] = std::make_shared<const SyntheticCascade>(SyntheticCascade::generate(sc));
    }
  } else {
    task = std::make_shared<const DatasetTask>(load_dataset_task(*cfg.dataset, cfg.minimise));
  }

  struct Job {
    DriverKind driver;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (auto d : cfg.drivers)
    for (auto s : cfg.seeds) jobs.push_back({d, s});
  std::vector<std::optional<RunResult>> out(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());

  auto work = [&](std::size_t k) {
    const Job& job = jobs[k];
    const CampaignConfig cc = detail::campaign_config(cfg, job.driver, job.seed, preset_min_freq);
    if (task) {
      DatasetEnvironment env(*task, cfg.surrogate_mode.value_or(SurrogateMode::residual));
      RunResult r(run_campaign(env, cc));
      const double best = task->objective.maxCoeff();
      r.reference = best;
      r.raw_regret = compute_percentile(r.trace, task->objective);
      r.metric = cfg.metric == MetricKind::percentile ? r.raw_regret : compute_regret(r.trace, best);
      r.driver = job.driver;
      r.seed = job.seed;
      out[k].emplace(std::move(r));
      return;
    }
    const auto& cascade = *cascades.at(cfg.vary_generator ? job.seed : cfg.generator_seed);
    SyntheticEnvironment env(cascade, detail::apply_cost_model(cascade.schema(), cfg), mix64(job.seed ^ 0xe4f1ULL));
    RunResult r(run_campaign(env, cc));
    r.reference = cascade.regret_reference();
    r.metric = compute_regret(r.trace, r.reference);
    for (const auto& e : r.trace.events) r.raw_regret.push_back(std::abs(r.reference - e.best_observed_y));
    r.driver = job.driver;
    r.seed = job.seed;
    out[k].emplace(std::move(r));
  };

  std::size_t workers = cfg.workers ? cfg.workers : std::max(1U, std::thread::hardware_concurrency());
  workers = std::min(workers, jobs.size());
  std::atomic<std::size_t> next{0};
  auto loop = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < jobs.size();) {
      try {
        work(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    loop();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(loop);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (auto& r : out) res.runs.push_back(std::move(*r));

  res.init_design_cost = 0.0;
  for (const auto& r : res.runs) res.init_design_cost = std::max(res.init_design_cost, r.trace.init_design_cost);
  if (res.init_design_cost == 0.0)
    for (const auto& r : res.runs)
      if (!r.trace.events.empty()) res.init_design_cost = std::max(res.init_design_cost, r.trace.events.front().cumulative_cost);
  if (cfg.seeds.size() >= 2) {
    const auto grid = cost_grid(res.init_design_cost, cfg.budget, cfg.grid_points);
    for (auto d : cfg.drivers) {
      std::vector<CostSeries> series;
      for (const auto& r : res.runs)
        if (r.driver == d) series.push_back(to_series(r.trace, r.metric));
      res.aggregates[to_string(d)] = aggregate(series, grid);
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Output

inline const std::vector<std::string>& trace_columns() {
  static const std::vector<std::string> cols{"seed",           "driver",          "event_index",      "stage_executed",
                                             "sample_id",      "cumulative_cost", "best_observed_y", "model_selected_y",
                                             "regret",         "log_regret"};
  return cols;
}

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

inline std::string join_csv(const std::vector<std::string>& cells) {
  std::string s;
  for (std::size_t k = 0; k < cells.size(); ++k) s += (k ? "," : "") + cells[k];
  return s;
}

/// Writes the per-event trace table. `regret` is the raw metric (|ref - y*| or
/// percentile) and `log_regret` the plotted metric.
inline void write_trace_csv(std::ostream& os, const RunResult& r) {
  os << join_csv(trace_columns()) << '\n';
  for (std::size_t k = 0; k < r.trace.events.size(); ++k) {
    const auto& e = r.trace.events[k];
    os << join_csv({std::to_string(r.seed), to_string(r.driver), std::to_string(e.event_index),
                    std::to_string(e.stage_executed), std::to_string(e.sample_id), format_double(e.cumulative_cost),
                    format_double(e.best_observed_y), format_double(e.model_selected_y),
                    format_double(r.raw_regret[k]), format_double(r.metric[k])})
       << '\n';
  }
}

inline void write_aggregate_csv(std::ostream& os, const ExperimentResult& res) {
  os << "cost,driver,mean,std\n";
  for (auto d : res.config.drivers) {
    const auto it = res.aggregates.find(to_string(d));
    if (it == res.aggregates.end()) continue;
    const auto& a = it->second;
    for (std::size_t k = 0; k < a.grid.size(); ++k)
      os << join_csv({format_double(a.grid[k]), to_string(d), format_double(a.mean[k]), format_double(a.std[k])}) << '\n';
  }
}

inline nlohmann::json manifest(const ExperimentResult& res) {
  nlohmann::json m;
  m["version"] = kVersion;
  m["config"] = res.config.source;
  m["seeds"] = res.config.seeds;
  m["budget"] = res.config.budget;
  m["metric"] = res.config.metric == MetricKind::regret ? "log_regret" : "percentile";
  m["init_design_cost"] = res.init_design_cost;
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : res.runs) {
    runs.push_back({{"driver", to_string(r.driver)},
                    {"seed", r.seed},
                    {"reference", r.reference},
                    {"events", r.trace.events.size()},
                    {"cost_spent", r.trace.inventory.total_cost_spent()},
                    {"final_metric", r.metric.empty() ? 0.0 : r.metric.back()},
                    {"trace", "traces/" + to_string(r.driver) + "_seed" + std::to_string(r.seed) + ".csv"}});
  }
  m["runs"] = runs;
  return m;
}

/// Writes `content` to `path` via a temporary file and rename.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << content;
    if (!f.flush()) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_experiment(const std::filesystem::path& dir, const ExperimentResult& res) {
  for (const auto& r : res.runs) {
    const std::string stem = to_string(r.driver) + "_seed" + std::to_string(r.seed);
    std::ostringstream t;
    write_trace_csv(t, r);
    write_atomic(dir / "traces" / (stem + ".csv"), t.str());
    std::ostringstream inv;
    r.trace.inventory.write_event_log(inv);
    write_atomic(dir / "inventories" / (stem + ".tsv"), inv.str());
  }
  if (!res.aggregates.empty()) {
    std::ostringstream a;
    write_aggregate_csv(a, res);
    write_atomic(dir / "aggregate.csv", a.str());
  }
  write_atomic(dir / "manifest.json", manifest(res).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Report

struct DriverSummary {
  std::string driver;
  std::size_t runs = 0;
  double final_mean = 0.0;
  double final_std = 0.0;
  double final_median = 0.0;
};

/// Final-metric summary per driver, read back from a results directory.
inline std::vector<DriverSummary> summarise_results(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw std::runtime_error("no manifest.json in " + dir.string());
  const auto m = nlohmann::json::parse(mf);
  std::map<std::string, std::vector<double>> finals;
  std::vector<std::string> order;
  for (const auto& r : m.at("runs")) {
    const auto d = r.at("driver").get<std::string>();
    std::ifstream tf(dir / r.at("trace").get<std::string>());
    if (!tf) throw std::runtime_error("missing trace " + r.at("trace").get<std::string>());
    std::string line, last;
    std::getline(tf, line);
    while (std::getline(tf, line))
      if (!line.empty()) last = line;
    if (last.empty()) continue;
    const auto cells = detail::split_csv_line(last);
    if (!finals.count(d)) order.push_back(d);
    finals[d].push_back(std::stod(cells.back()));
  }
  std::vector<DriverSummary> out;
  for (const auto& d : order) {
    auto v = finals[d];
    DriverSummary s;
    s.driver = d;
    s.runs = v.size();
    for (double x : v) s.final_mean += x;
    s.final_mean /= static_cast<double>(v.size());
    for (double x : v) s.final_std += (x - s.final_mean) * (x - s.final_mean);
    s.final_std = v.size() > 1 ? std::sqrt(s.final_std / static_cast<double>(v.size() - 1)) : 0.0;
    std::sort(v.begin(), v.end());
    s.final_median = v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    out.push_back(s);
  }
  return out;
}

}  // namespace msbo
