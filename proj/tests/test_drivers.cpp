#include <cmath>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "msbo/drivers.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace msbo;

namespace {

const SyntheticCascade& demo() {
  static const SyntheticCascade c = [] {
    auto cfg = preset("demo2d", 5);
    cfg.training.epochs = 100;
    cfg.optimum_probe_points = 2000;
    cfg.optimum_restarts = 4;
    return SyntheticCascade::generate(cfg);
  }();
  return c;
}

const SyntheticCascade& single() {
  static const SyntheticCascade c = [] {
    SyntheticCascadeConfig cfg;
    cfg.stages = {{2, 1, 6, {}, 0.0, 0.0}};
    cfg.master_seed = 8;
    cfg.training.epochs = 100;
    return SyntheticCascade::generate(cfg, false);
  }();
  return c;
}

CampaignConfig quick(DriverKind d, double budget, std::uint64_t seed = 1) {
  CampaignConfig c;
  c.driver = d;
  c.budget = budget;
  c.seed = seed;
  c.acquisition.mc_samples = 16;
  c.acquisition.restarts = 2;
  c.acquisition.raw_samples = 16;
  c.acquisition.max_iterations = 20;
  c.fit.gp.starts = 2;
  return c;
}

CampaignTrace run(const SyntheticCascade& c, const CampaignConfig& cfg, std::vector<double> ratios = {}) {
  SyntheticEnvironment env(c, c.schema(ratios), 99);
  return run_campaign(env, cfg);
}

void expect_monotone(const CampaignTrace& t) {
  for (std::size_t k = 1; k < t.events.size(); ++k) {
    if (std::isnan(t.events[k - 1].best_observed_y)) continue;
    EXPECT_GE(t.events[k].best_observed_y, t.events[k - 1].best_observed_y);
    EXPECT_GT(t.events[k].cumulative_cost, t.events[k - 1].cumulative_cost);
  }
}

std::string fingerprint(const CampaignTrace& t) {
  std::ostringstream os;
  t.inventory.write_event_log(os);
  for (const auto& e : t.events) os << e.best_observed_y << ' ' << e.model_selected_y << '\n';
  return os.str();
}

}  // namespace

TEST(InitDesign, SizeAndDeterminism) {
  SyntheticEnvironment env_a(demo(), demo().schema(), 1), env_b(demo(), demo().schema(), 2);
  const auto a = run_init_design(env_a, quick(DriverKind::msbo, 100));
  const auto b = run_init_design(env_b, quick(DriverKind::msbo, 100));
  EXPECT_EQ(a.inventory.size(), 6u);
  EXPECT_EQ(a.inventory.completed().size(), 6u);
  EXPECT_DOUBLE_EQ(a.init_design_cost, 12.0);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(a.inventory.records()[i].params, b.inventory.records()[i].params);
  const auto c = run_init_design(env_b, quick(DriverKind::msbo, 100, 2));
  EXPECT_NE(a.inventory.records()[0].params, c.inventory.records()[0].params);
  EXPECT_EQ(default_init_design_size(msbo_test::two_stage_schema(4, 2, 2)), 14u);
}

TEST(InitDesign, BudgetBelowDesignCostIsRejected) {
  SyntheticEnvironment env(demo(), demo().schema(), 1);
  EXPECT_THROW(run_msbo(env, quick(DriverKind::msbo, 11.5)), std::invalid_argument);
}

TEST(Msbo, BudgetEqualToDesignCostStopsAfterDesign) {
  const auto t = run(demo(), quick(DriverKind::msbo, 12));
  EXPECT_EQ(t.events.size(), 12u);
  EXPECT_EQ(t.inventory.size(), 6u);
}

TEST(Drivers, BudgetAccountingAndMonotoneBest) {
  for (auto d : {DriverKind::msbo, DriverKind::bo, DriverKind::bofn, DriverKind::random}) {
    for (const std::vector<double>& ratios : {std::vector<double>{}, std::vector<double>{1, 3}}) {
      const double budget = ratios.empty() ? 21 : 9.6;
      const auto t = run(demo(), quick(d, budget), ratios);
      EXPECT_LE(t.inventory.total_cost_spent(), budget + 1e-9) << to_string(d);
      EXPECT_GT(t.inventory.total_cost_spent(), budget - t.inventory.schema().full_cost() - 1e-9) << to_string(d);
      expect_monotone(t);
      EXPECT_NEAR(t.events.back().cumulative_cost, t.inventory.total_cost_spent(), 1e-12);
    }
  }
}

TEST(Drivers, SameSeedSameTraceDifferentSeedDifferentTrace) {
  for (auto d : {DriverKind::msbo, DriverKind::bo, DriverKind::bofn, DriverKind::random}) {
    const auto a = run(demo(), quick(d, 18, 3)), b = run(demo(), quick(d, 18, 3)), c = run(demo(), quick(d, 18, 4));
    EXPECT_EQ(fingerprint(a), fingerprint(b)) << to_string(d);
    EXPECT_NE(fingerprint(a), fingerprint(c)) << to_string(d);
  }
}

TEST(Drivers, FullCascadeBaselines) {
  for (auto d : {DriverKind::bo, DriverKind::bofn, DriverKind::random}) {
    const auto t = run(demo(), quick(d, 20));
    for (const auto& r : t.inventory.records()) EXPECT_EQ(r.stages_completed(), 2u) << to_string(d);
  }
  const auto bo = run(demo(), quick(DriverKind::bo, 16));
  EXPECT_EQ(bo.surrogate_input_dim, 2u);
  EXPECT_FALSE(bo.consumed_intermediate);
  const auto bofn = run(demo(), quick(DriverKind::bofn, 16));
  EXPECT_TRUE(bofn.consumed_intermediate);
}

TEST(Random, DrawsAreUniform) {
  auto cfg = quick(DriverKind::random, 10000);
  const auto t = run(demo(), cfg);
  ASSERT_EQ(t.inventory.size(), 5000u);
  std::vector<double> a, b;
  for (const auto& r : t.inventory.records()) {
    a.push_back(r.params[0](0));
    b.push_back(r.params[1](0));
  }
  const double crit = 1.628 / std::sqrt(5000.0);  // alpha = 0.01
  EXPECT_LT(oracle::ks_uniform(a), crit);
  EXPECT_LT(oracle::ks_uniform(b), crit);
}

TEST(StandardBo, OneStageCascadeMatchesMsbo) {
  auto cfg = quick(DriverKind::msbo, 14);
  const auto m = run(single(), cfg);
  cfg.driver = DriverKind::bo;
  const auto b = run(single(), cfg);
  ASSERT_EQ(m.inventory.size(), b.inventory.size());
  for (std::size_t i = 0; i < m.inventory.size(); ++i)
    EXPECT_EQ(m.inventory.records()[i].params[0], b.inventory.records()[i].params[0]) << "sample " << i;
}

TEST(Bofn, FirstProposalMatchesMsboNewSampleCandidate) {
  auto cfg = quick(DriverKind::msbo, 14);
  cfg.keep_proposals = true;
  const auto m = run(demo(), cfg);
  cfg.driver = DriverKind::bofn;
  const auto b = run(demo(), cfg);
  ASSERT_FALSE(m.proposals.empty());
  ASSERT_FALSE(b.proposals.empty());
  const auto& fresh = m.proposals.front().candidates.front();
  ASSERT_EQ(fresh.stage, 1u);
  EXPECT_EQ(b.proposals.front().x_tail, fresh.x_tail);
  EXPECT_EQ(b.proposals.front().raw_value, fresh.raw_value);
}

TEST(Msbo, ChoicesAreArgmaxOfRecomputedAcquisition) {
  auto cfg = quick(DriverKind::msbo, 26);
  cfg.keep_proposals = true;
  const auto t = run(demo(), cfg);
  ASSERT_FALSE(t.proposals.empty());
  for (const auto& p : t.proposals) {
    double best = -1e300;
    for (const auto& c : p.candidates) best = std::max(best, c.weighted_value);
    EXPECT_EQ(p.weighted_value, best);
    EXPECT_FALSE(p.frequency_forced);
  }
  std::set<std::size_t> stages;
  for (const auto& e : t.events) stages.insert(e.stage_executed);
  EXPECT_EQ(stages.size(), 2u);
}

TEST(Msbo, ModelSelectionIsTracked) {
  const auto t = run(demo(), quick(DriverKind::msbo, 20));
  EXPECT_FALSE(std::isnan(t.events.back().model_selected_y));
  EXPECT_FALSE(std::isnan(t.events.back().model_selected_true));
  EXPECT_FALSE(std::isnan(t.events.back().best_observed_true));
}

TEST(DatasetEnvironment, CampaignStaysOnPool) {
  DatasetTask task;
  StreamRng r(4);
  const int p = 60;
  task.features = msbo_test::uniform_mat(p, 3, r);
  task.proxy.resize(p);
  task.objective.resize(p);
  for (int i = 0; i < p; ++i) {
    task.ids.push_back("c" + std::to_string(i));
    task.proxy(i) = task.features.row(i).sum();
    task.objective(i) = task.proxy(i) - 2 * std::pow(task.features(i, 0) - 0.5, 2);
  }
  for (auto d : {DriverKind::msbo, DriverKind::bo, DriverKind::bofn, DriverKind::random}) {
    DatasetEnvironment env(task);
    const auto t = run_campaign(env, quick(d, 14));
    std::set<Eigen::Index> used;
    for (const auto& rec : t.inventory.records()) {
      const Eigen::Index i = env.lookup(rec.params[0]);
      EXPECT_TRUE(used.insert(i).second) << "candidate started twice";
      EXPECT_EQ(rec.measurements[0](0), task.proxy(i));
      if (rec.stages_completed() == 2) {
        EXPECT_EQ(rec.measurements[1](0), task.objective(i));
      }
    }
    double prev = 1.0;
    for (const auto& e : t.events) {
      if (std::isnan(e.best_observed_y)) continue;
      const double pct = percentile_rank(task.objective, e.best_observed_y);
      EXPECT_LE(pct, prev);
      prev = pct;
    }
  }
}
