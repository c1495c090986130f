#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace msbo {

class InventoryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SurrogateMode { standard, residual };

inline std::string_view to_string(SurrogateMode m) { return m == SurrogateMode::standard ? "standard" : "residual"; }

inline SurrogateMode parse_surrogate_mode(std::string_view s) {
  if (s == "standard") return SurrogateMode::standard;
  if (s == "residual") return SurrogateMode::residual;
  throw std::invalid_argument("unknown surrogate mode: " + std::string(s));
}

/// One stage of a cascade. Indices in `observed` are 0-based into h.
struct StageSpec {
  std::size_t x_dim = 1;
  std::size_t h_dim = 1;
  std::vector<std::size_t> observed{0};
  double cost = 1.0;

  [[nodiscard]] std::size_t obs_dim() const noexcept { return observed.size(); }
};

struct CascadeSchema {
  std::vector<StageSpec> stages;
  SurrogateMode mode = SurrogateMode::standard;

  [[nodiscard]] std::size_t n_stages() const noexcept { return stages.size(); }
  [[nodiscard]] const StageSpec& stage(std::size_t i) const { return stages.at(i - 1); }  // 1-based

  [[nodiscard]] std::size_t total_x_dim() const noexcept {
    std::size_t d = 0;
    for (const auto& s : stages) d += s.x_dim;
    return d;
  }

  [[nodiscard]] double full_cost() const noexcept {
    double c = 0.0;
    for (const auto& s : stages) c += s.cost;
    return c;
  }

  [[nodiscard]] double max_cost() const noexcept {
    double c = 0.0;
    for (const auto& s : stages) c = std::max(c, s.cost);
    return c;
  }

  /// Throws std::invalid_argument on a malformed schema. Stages after the
  /// first may have no controllable parameters (dataset tasks).
  void validate(bool costs_normalised = false) const {
    if (stages.empty()) throw std::invalid_argument("schema: at least one stage required");
    for (std::size_t i = 0; i < stages.size(); ++i) {
      const auto& s = stages[i];
      const std::string where = "schema stage " + std::to_string(i + 1) + ": ";
      if (i == 0 && s.x_dim == 0) throw std::invalid_argument(where + "first stage needs x_dim >= 1");
      if (s.h_dim == 0) throw std::invalid_argument(where + "h_dim must be >= 1");
      if (s.observed.empty()) throw std::invalid_argument(where + "observed indices must be nonempty");
      for (std::size_t k = 0; k < s.observed.size(); ++k) {
        if (s.observed[k] >= s.h_dim) throw std::invalid_argument(where + "observed index out of range");
        if (k > 0 && s.observed[k] <= s.observed[k - 1])
          throw std::invalid_argument(where + "observed indices must be strictly increasing");
      }
      if (!(s.cost > 0.0) || !std::isfinite(s.cost)) throw std::invalid_argument(where + "cost must be positive");
    }
    if (stages.back().observed.size() != 1) throw std::invalid_argument("schema: final stage must observe exactly one output");
    if (costs_normalised && std::abs(full_cost() - 1.0) > 1e-12)
      throw std::invalid_argument("schema: normalised costs must sum to 1");
  }

  /// Rescales costs proportionally to `ratios` so that they sum to one.
  void set_cost_ratios(const std::vector<double>& ratios) {
    if (ratios.size() != stages.size()) throw std::invalid_argument("cost ratios: one ratio per stage required");
    double total = 0.0;
    for (double r : ratios) {
      if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("cost ratios must be positive");
      total += r;
    }
    for (std::size_t i = 0; i < stages.size(); ++i) stages[i].cost = ratios[i] / total;
  }
};

enum class SampleOrigin { init_design, acquisition };

struct SampleRecord {
  std::uint64_t id = 0;
  Eigen::VectorXd staged_params;              // params_1 given at creation
  std::vector<Eigen::VectorXd> params;        // one per completed stage
  std::vector<Eigen::VectorXd> measurements;  // one per completed stage
  double accumulated_cost = 0.0;
  SampleOrigin origin = SampleOrigin::acquisition;
  int iteration_created = 0;

  [[nodiscard]] std::size_t stages_completed() const noexcept { return measurements.size(); }

  /// Terminal objective; only valid for complete records.
  [[nodiscard]] double objective() const { return measurements.back()(0); }
};

struct Continuation {
  std::uint64_t sample_id;
  Eigen::VectorXd measurement;  // m_{stage-1}
  Eigen::VectorXd params;       // x_{stage-1}, used by the residual layout
};

struct BestObserved {
  double value;
  std::uint64_t sample_id;
};

enum class EventKind { create, record };

struct InventoryEvent {
  EventKind kind;
  std::uint64_t sample_id;
  std::size_t stage;  // 0 for create
  Eigen::VectorXd params;
  Eigen::VectorXd measurement;
  double cost;
  SampleOrigin origin = SampleOrigin::acquisition;
  int iteration = 0;
};

namespace detail {

inline void append_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

inline std::string join_vector(const Eigen::VectorXd& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out.push_back(',');
    append_double(out, v(i));
  }
  return out;
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw InventoryError("event log: bad number '" + std::string(s) + "'");
  return v;
}

inline std::uint64_t parse_uint(std::string_view s) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw InventoryError("event log: bad integer '" + std::string(s) + "'");
  return v;
}

inline Eigen::VectorXd parse_vector(std::string_view s) {
  std::vector<double> vals;
  while (!s.empty()) {
    const auto comma = s.find(',');
    vals.push_back(parse_double(s.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  while (true) {
    const auto tab = line.find('\t');
    out.push_back(line.substr(0, tab));
    if (tab == std::string_view::npos) break;
    line.remove_prefix(tab + 1);
  }
  return out;
}

}  // namespace detail

/// Registry of every sample, partial or complete, in one campaign.
///
/// Every mutation is appended to an event log; replaying the log through a
/// fresh inventory reproduces it exactly, which is how interrupted campaigns
/// resume.
class Inventory {
 public:
  explicit Inventory(CascadeSchema schema) : schema_(std::move(schema)) { schema_.validate(); }

  [[nodiscard]] const CascadeSchema& schema() const noexcept { return schema_; }
  [[nodiscard]] const std::vector<SampleRecord>& records() const noexcept { return records_; }
  [[nodiscard]] const std::vector<InventoryEvent>& events() const noexcept { return events_; }
  [[nodiscard]] double total_cost_spent() const noexcept { return total_cost_; }
  [[nodiscard]] std::size_t size() const noexcept { return records_.size(); }

  std::uint64_t create_sample(const Eigen::VectorXd& params1, SampleOrigin origin = SampleOrigin::acquisition,
                              int iteration = 0) {
    check_params(1, params1);
    SampleRecord r;
    r.id = next_id_++;
    r.staged_params = params1;
    r.origin = origin;
    r.iteration_created = iteration;
    records_.push_back(std::move(r));
    events_.push_back({EventKind::create, records_.back().id, 0, params1, Eigen::VectorXd(), 0.0, origin, iteration});
    return records_.back().id;
  }

  /// `stage` is 1-based and must be exactly one past the completed stages.
  const SampleRecord& record_measurement(std::uint64_t id, std::size_t stage, const Eigen::VectorXd& params,
                                         const Eigen::VectorXd& measurement) {
    SampleRecord& r = find_mut(id);
    if (stage != r.stages_completed() + 1)
      throw InventoryError("sample " + std::to_string(id) + ": stage " + std::to_string(stage) +
                           " out of order (completed " + std::to_string(r.stages_completed()) + ")");
    if (stage > schema_.n_stages()) throw InventoryError("stage beyond cascade length");
    check_params(stage, params);
    if (stage == 1 && params != r.staged_params)
      throw InventoryError("sample " + std::to_string(id) + ": stage-1 params differ from staged params");
    const auto& spec = schema_.stage(stage);
    if (static_cast<std::size_t>(measurement.size()) != spec.obs_dim())
      throw InventoryError("measurement dimension mismatch at stage " + std::to_string(stage));
    if (!measurement.allFinite()) throw InventoryError("non-finite measurement");
    r.params.push_back(params);
    r.measurements.push_back(measurement);
    r.accumulated_cost += spec.cost;
    total_cost_ += spec.cost;
    ++executions_[stage - 1];
    events_.push_back({EventKind::record, id, stage, params, measurement, spec.cost});
    return r;
  }

  [[nodiscard]] const SampleRecord& record(std::uint64_t id) const {
    return const_cast<Inventory*>(this)->find_mut(id);
  }

  /// Samples that can run `stage` next (2 <= stage <= N), with their last measurement.
  [[nodiscard]] std::vector<Continuation> continuation_candidates(std::size_t stage) const {
    if (stage < 2 || stage > schema_.n_stages())
      throw InventoryError("continuation stage " + std::to_string(stage) + " out of range");
    std::vector<Continuation> out;
    for (const auto& r : records_)
      if (r.stages_completed() == stage - 1) out.push_back({r.id, r.measurements.back(), r.params.back()});
    return out;
  }

  [[nodiscard]] std::vector<const SampleRecord*> completed() const {
    std::vector<const SampleRecord*> out;
    for (const auto& r : records_)
      if (r.stages_completed() == schema_.n_stages()) out.push_back(&r);
    return out;
  }

  /// Highest terminal objective; ties go to the lowest sample id.
  [[nodiscard]] std::optional<BestObserved> best_observed() const {
    std::optional<BestObserved> best;
    for (const auto& r : records_) {
      if (r.stages_completed() != schema_.n_stages()) continue;
      const double y = r.objective();
      if (!best || y > best->value) best = BestObserved{y, r.id};
    }
    return best;
  }

  [[nodiscard]] std::vector<std::size_t> stage_execution_counts() const { return executions_; }

  /// Fraction of stage executions per stage; uniform when nothing ran yet.
  [[nodiscard]] std::vector<double> stage_sampling_frequencies() const {
    const std::size_t n = schema_.n_stages();
    const double total = static_cast<double>(std::accumulate(executions_.begin(), executions_.end(), std::size_t{0}));
    std::vector<double> f(n, 1.0 / static_cast<double>(n));
    if (total == 0.0) return f;
    for (std::size_t i = 0; i < n; ++i) f[i] = static_cast<double>(executions_[i]) / total;
    return f;
  }

  // Event log: one tab-separated line per event,
  //   kind  sample_id  stage  params  measurement  cost  iteration
  // kind is create_init | create | record; vectors are comma-separated
  // shortest round-trip decimals.
  void write_event_log(std::ostream& os) const {
    for (const auto& e : events_) os << format_event(e) << '\n';
  }

  [[nodiscard]] static std::string format_event(const InventoryEvent& e) {
    std::string line;
    if (e.kind == EventKind::create)
      line = e.origin == SampleOrigin::init_design ? "create_init" : "create";
    else
      line = "record";
    line += '\t' + std::to_string(e.sample_id) + '\t' + std::to_string(e.stage) + '\t';
    line += detail::join_vector(e.params) + '\t' + detail::join_vector(e.measurement) + '\t';
    detail::append_double(line, e.cost);
    line += '\t' + std::to_string(e.iteration);
    return line;
  }

  static Inventory replay(CascadeSchema schema, std::istream& is) {
    Inventory inv(std::move(schema));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      const auto f = detail::split_tabs(line);
      if (f.size() != 7) throw InventoryError("event log line " + std::to_string(lineno) + ": expected 7 fields");
      const auto id = detail::parse_uint(f[1]);
      const int iteration = static_cast<int>(detail::parse_uint(f[6]));
      if (f[0] == "create" || f[0] == "create_init") {
        if (id != inv.next_id_) throw InventoryError("event log line " + std::to_string(lineno) + ": unexpected id");
        inv.create_sample(detail::parse_vector(f[3]),
                          f[0] == "create_init" ? SampleOrigin::init_design : SampleOrigin::acquisition, iteration);
      } else if (f[0] == "record") {
        const auto stage = static_cast<std::size_t>(detail::parse_uint(f[2]));
        const auto& r = inv.record_measurement(id, stage, detail::parse_vector(f[3]), detail::parse_vector(f[4]));
        (void)r;
        if (detail::parse_double(f[5]) != inv.schema_.stage(stage).cost)
          throw InventoryError("event log line " + std::to_string(lineno) + ": cost disagrees with schema");
      } else {
        throw InventoryError("event log line " + std::to_string(lineno) + ": unknown event '" + std::string(f[0]) + "'");
      }
    }
    return inv;
  }

 private:
  SampleRecord& find_mut(std::uint64_t id) {
    // ids are dense and assigned in order
    if (id >= records_.size() || records_[id].id != id) throw InventoryError("unknown sample id " + std::to_string(id));
    return records_[id];
  }

  void check_params(std::size_t stage, const Eigen::VectorXd& p) const {
    const auto& spec = schema_.stage(stage);
    if (static_cast<std::size_t>(p.size()) != spec.x_dim)
      throw InventoryError("params dimension mismatch at stage " + std::to_string(stage));
    for (Eigen::Index j = 0; j < p.size(); ++j)
      if (!(p(j) >= 0.0 && p(j) <= 1.0)) throw InventoryError("params outside [0,1] at stage " + std::to_string(stage));
  }

  CascadeSchema schema_;
  std::vector<SampleRecord> records_;
  std::vector<InventoryEvent> events_;
  std::vector<std::size_t> executions_ = std::vector<std::size_t>(schema_.n_stages(), 0);
  double total_cost_ = 0.0;
  std::uint64_t next_id_ = 0;
};

}  // namespace msbo
