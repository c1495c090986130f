#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace msbo {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Discrete two-stage task over a fixed candidate pool: stage 1 picks a
/// candidate and observes its proxy, stage 2 observes its objective.
struct DatasetTask {
  std::vector<std::string> ids;
  Eigen::MatrixXd features;  // P x d, min-max scaled to [0,1] per column
  Eigen::VectorXd proxy;
  Eigen::VectorXd objective;  // already negated for minimisation tasks
  double proxy_cost = 0.5;
  double objective_cost = 0.5;
  bool minimise = false;

  [[nodiscard]] Eigen::Index size() const noexcept { return features.rows(); }
  [[nodiscard]] Eigen::Index dim() const noexcept { return features.cols(); }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_cell(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw DatasetError(where + ": not a number '" + s + "'");
  }
  if (used != s.size()) throw DatasetError(where + ": not a number '" + s + "'");
  if (!std::isfinite(v)) throw DatasetError(where + ": non-finite value '" + s + "'");
  return v;
}

}  // namespace detail

/// Reads `id, f_1..f_d, proxy, objective` with a header row. Features are
/// rescaled to [0,1]; minimisation objectives are negated.
inline DatasetTask parse_dataset_task(std::istream& is, bool minimise = false) {
  std::string line;
  if (!std::getline(is, line)) throw DatasetError("dataset: empty file");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 4 || header.front() != "id" || header[header.size() - 2] != "proxy" || header.back() != "objective")
    throw DatasetError("dataset: header must be id, f_1..f_d, proxy, objective");
  const std::size_t d = header.size() - 3;

  std::vector<std::string> ids;
  std::vector<std::vector<double>> feats;
  std::vector<double> proxy, obj;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    const std::string where = "dataset row " + std::to_string(row);
    if (cells.size() != d + 3)
      throw DatasetError(where + ": expected " + std::to_string(d + 3) + " fields, got " + std::to_string(cells.size()));
    ids.push_back(cells[0]);
    std::vector<double> f(d);
    for (std::size_t j = 0; j < d; ++j) f[j] = detail::parse_cell(cells[1 + j], where + " (" + cells[0] + ")");
    feats.push_back(std::move(f));
    proxy.push_back(detail::parse_cell(cells[d + 1], where + " (" + cells[0] + ")"));
    obj.push_back(detail::parse_cell(cells[d + 2], where + " (" + cells[0] + ")"));
  }
  if (ids.empty()) throw DatasetError("dataset: no rows");

  std::map<std::vector<double>, std::string> seen;
  std::string dupes;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    auto [it, fresh] = seen.emplace(feats[i], ids[i]);
    if (!fresh) dupes += (dupes.empty() ? "" : ", ") + it->second + "/" + ids[i];
  }
  if (!dupes.empty()) throw DatasetError("dataset: duplicate feature rows: " + dupes);

  DatasetTask t;
  t.ids = std::move(ids);
  t.minimise = minimise;
  const auto p = static_cast<Eigen::Index>(feats.size());
  t.features.resize(p, static_cast<Eigen::Index>(d));
  t.proxy.resize(p);
  t.objective.resize(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(d); ++j) t.features(i, j) = feats[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    t.proxy(i) = proxy[static_cast<std::size_t>(i)];
    t.objective(i) = minimise ? -obj[static_cast<std::size_t>(i)] : obj[static_cast<std::size_t>(i)];
  }
  for (Eigen::Index j = 0; j < t.features.cols(); ++j) {
    const double lo = t.features.col(j).minCoeff();
    const double range = t.features.col(j).maxCoeff() - lo;
    t.features.col(j) = range > 0.0 ? Eigen::VectorXd((t.features.col(j).array() - lo) / range)
                                    : Eigen::VectorXd::Constant(p, 0.5);
  }
  return t;
}

inline DatasetTask load_dataset_task(const std::string& path, bool minimise = false) {
  std::ifstream f(path);
  if (!f) throw DatasetError("dataset: cannot open " + path);
  return parse_dataset_task(f, minimise);
}

/// Fraction of candidates whose objective is at least `value` (1/P for the best).
inline double percentile_rank(const Eigen::VectorXd& objective, double value) {
  const auto better_or_equal = (objective.array() >= value).count();
  return static_cast<double>(std::max<Eigen::Index>(1, better_or_equal)) / static_cast<double>(objective.size());
}

}  // namespace msbo
