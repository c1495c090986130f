#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "msbo/bench.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stoull(tok));
  }
  if (out.empty()) throw std::invalid_argument("--seeds: empty list");
  return out;
}

int cmd_run(const std::string& config_path, const std::string& out_dir, const std::string& seeds,
            const std::optional<double>& budget, const std::string& driver) {
  std::ifstream f(config_path);
  if (!f) throw std::invalid_argument("cannot open config " + config_path);
  nlohmann::json j = nlohmann::json::parse(f);
  if (!seeds.empty()) j["seeds"] = parse_seed_list(seeds);
  if (budget) j["budget"] = *budget;
  if (!driver.empty()) j["drivers"] = {driver};
  const auto cfg = msbo::parse_experiment_config(j);
  const auto res = msbo::run_experiment(cfg);
  msbo::write_experiment(out_dir, res);
  for (const auto& r : res.runs)
    std::cout << msbo::to_string(r.driver) << " seed " << r.seed << ": final "
              << (cfg.metric == msbo::MetricKind::regret ? "log regret " : "percentile ") << r.metric.back()
              << " after cost " << r.trace.inventory.total_cost_spent() << "\n";
  return 0;
}

int cmd_generate(const std::string& name, std::uint64_t seed, const std::string& path) {
  const auto cascade = msbo::SyntheticCascade::generate(msbo::preset(name, seed));
  std::ostringstream os;
  cascade.export_weights(os);
  msbo::write_atomic(fs::path(path), os.str());
  std::cout << name << " seed " << seed << ": D=" << cascade.total_x_dim() << " y_opt=" << cascade.optimum().y
            << " -> " << path << "\n";
  return 0;
}

int cmd_report(const std::string& dir, const std::string& format) {
  const auto rows = msbo::summarise_results(dir);
  if (format == "json") {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows)
      j.push_back({{"driver", r.driver},
                   {"runs", r.runs},
                   {"final_mean", r.final_mean},
                   {"final_std", r.final_std},
                   {"final_median", r.final_median}});
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "driver,runs,final_mean,final_std,final_median\n";
    for (const auto& r : rows)
      std::cout << r.driver << ',' << r.runs << ',' << msbo::format_double(r.final_mean) << ','
                << msbo::format_double(r.final_std) << ',' << msbo::format_double(r.final_median) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-stage Bayesian optimisation benchmark harness"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run campaigns from an experiment config");
  std::string config, out, seeds, driver;
  std::optional<double> budget;
  run->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "output directory")->required();
  run->add_option("--seeds", seeds, "comma-separated seed list, overrides the config");
  run->add_option("--budget", budget, "total cost budget, overrides the config");
  run->add_option("--driver", driver, "run a single driver")->check(CLI::IsMember({"msbo", "bo", "bofn", "random"}));

  auto* gen = app.add_subcommand("generate", "generate a preset cascade and export its weights");
  std::string preset_name, export_path;
  std::uint64_t gen_seed = 0;
  gen->add_option("--preset", preset_name, "preset name")->required();
  gen->add_option("--seed", gen_seed, "generator master seed");
  gen->add_option("--export", export_path, "weight file to write")->required();

  auto* rep = app.add_subcommand("report", "summarise a results directory");
  std::string in_dir, format = "csv";
  rep->add_option("--in", in_dir, "results directory")->required()->check(CLI::ExistingDirectory);
  rep->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config, out, seeds, budget, driver);
    if (*gen) return cmd_generate(preset_name, gen_seed, export_path);
    if (*rep) return cmd_report(in_dir, format);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
