#include <cmath>

#include <gtest/gtest.h>

#include "msbo/acquisition.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace msbo;

namespace {

double stage1(double x) { return std::sin(4 * x); }
double stage2(double x, double m) { return -(x - 0.3) * (x - 0.3) + 0.5 * m; }

Inventory filled(std::size_t complete, std::size_t partial, std::uint64_t seed = 17) {
  Inventory inv(msbo_test::two_stage_schema());
  StreamRng r(seed);
  for (std::size_t k = 0; k < complete + partial; ++k) {
    const Eigen::VectorXd x1 = msbo_test::uniform_vec(1, r);
    const auto id = inv.create_sample(x1);
    const Eigen::VectorXd m1 = Eigen::VectorXd::Constant(1, stage1(x1(0)));
    inv.record_measurement(id, 1, x1, m1);
    if (k < complete) {
      const Eigen::VectorXd x2 = msbo_test::uniform_vec(1, r);
      inv.record_measurement(id, 2, x2, Eigen::VectorXd::Constant(1, stage2(x2(0), m1(0))));
    }
  }
  return inv;
}

Inventory single_stage(std::size_t n) {
  CascadeSchema s;
  s.stages = {{2, 1, {0}, 1.0}};
  Inventory inv(s);
  StreamRng r(5);
  for (std::size_t k = 0; k < n; ++k) {
    const auto x = msbo_test::uniform_vec(2, r);
    const auto id = inv.create_sample(x);
    inv.record_measurement(id, 1, x, Eigen::VectorXd::Constant(1, std::cos(3 * x(0)) * x(1)));
  }
  return inv;
}

}  // namespace

TEST(ExpectedImprovement, MatchesMonteCarlo) {
  const double cases[][3] = {{0, 1, 0}, {1, 0.5, 0.2}, {-1, 2, 0.5}, {0.3, 0.01, 0.31}, {2, 0.3, -1}, {0, 1, 4}};
  std::uint64_t seed = 1000;
  for (const auto& c : cases) {
    const auto mc = oracle::mc_expected_improvement(c[0], c[1], c[2], 400000, ++seed);
    EXPECT_NEAR(expected_improvement(c[0], c[1], c[2]), mc.mean, 3 * std::sqrt(mc.variance) + 1e-15);
  }
}

TEST(ExpectedImprovement, Limits) {
  EXPECT_EQ(expected_improvement(1.5, 0.0, 1.0), 0.5);
  EXPECT_EQ(expected_improvement(0.5, 0.0, 1.0), 0.0);
  EXPECT_NEAR(expected_improvement(1.5, 1e-14, 1.0), 0.5, 1e-12);
  EXPECT_GE(expected_improvement(-40, 1, 0), 0.0);
  EXPECT_NEAR(expected_improvement(0, 1, 0), 1 / std::sqrt(2 * M_PI), 1e-15);
  double prev = 0;
  for (double m = -3; m <= 3; m += 0.25) {
    const double e = expected_improvement(m, 0.7, 0.0);
    EXPECT_GE(e, prev);
    prev = e;
  }
}

TEST(NestedEi, SingleStageSampledMatchesAnalytic) {
  const auto cs = CascadeSurrogate::fit(single_stage(8));
  const std::vector<Eigen::VectorXd> x{Eigen::Vector2d(0.45, 0.8)};
  const auto post = cs.stage(1).gps.front().posterior(x[0].transpose());
  const double inc = post.mean(0) + 0.3 * std::sqrt(post.variance(0));
  const auto est = nested_ei(cs, 1, std::nullopt, x, inc, StreamRng(3), 100000, TerminalEstimator::sampled);
  const double exact = expected_improvement(post.mean(0), std::sqrt(post.variance(0)), inc);
  EXPECT_NEAR(est.value, exact, 3 * est.standard_error);
  const auto an = nested_ei(cs, 1, std::nullopt, x, inc, StreamRng(3), 64, TerminalEstimator::analytic);
  EXPECT_EQ(an.value, exact);
  EXPECT_EQ(an.standard_error, 0.0);
}

TEST(NestedEi, DeterministicFirstStageCollapsesToStageTwoEi) {
  // Stage 1 always measures 0.7, so its GP is certain and every particle
  // carries the same m_1.
  Inventory inv(msbo_test::two_stage_schema());
  StreamRng r(8);
  for (int k = 0; k < 10; ++k) {
    const auto x1 = msbo_test::uniform_vec(1, r);
    const auto id = inv.create_sample(x1);
    inv.record_measurement(id, 1, x1, Eigen::VectorXd::Constant(1, 0.7));
    const auto x2 = msbo_test::uniform_vec(1, r);
    inv.record_measurement(id, 2, x2, Eigen::VectorXd::Constant(1, std::sin(5 * x2(0))));
  }
  const auto cs = CascadeSurrogate::fit(inv);
  const std::vector<Eigen::VectorXd> x{Eigen::VectorXd::Constant(1, 0.2), Eigen::VectorXd::Constant(1, 0.55)};
  Eigen::MatrixXd q(1, 2);
  q << 0.55, 0.0;
  const auto post = cs.stage(2).gps.front().posterior(q);
  const double inc = post.mean(0);
  const auto est = nested_ei(cs, 1, std::nullopt, x, inc, StreamRng(4), 100000, TerminalEstimator::sampled);
  EXPECT_NEAR(est.value, expected_improvement(post.mean(0), std::sqrt(post.variance(0)), inc), 3 * est.standard_error);
}

TEST(NestedEi, AnalyticTerminalAgreesWithSampled) {
  const auto cs = CascadeSurrogate::fit(filled(6, 0));
  const std::vector<Eigen::VectorXd> x{Eigen::VectorXd::Constant(1, 0.8), Eigen::VectorXd::Constant(1, 0.3)};
  const double inc = cs.propagate_mean_only(x, 1, std::nullopt);
  const auto a = nested_ei(cs, 1, std::nullopt, x, inc, StreamRng(5), 50000, TerminalEstimator::analytic);
  const auto s = nested_ei(cs, 1, std::nullopt, x, inc, StreamRng(6), 50000, TerminalEstimator::sampled);
  EXPECT_NEAR(a.value, s.value, 3 * std::hypot(a.standard_error, s.standard_error));
  EXPECT_LT(a.standard_error, s.standard_error);
}

TEST(NestedEi, StandardErrorShrinksAsInverseSquareRoot) {
  const auto cs = CascadeSurrogate::fit(filled(5, 0));
  const std::vector<Eigen::VectorXd> x{Eigen::VectorXd::Constant(1, 0.6), Eigen::VectorXd::Constant(1, 0.4)};
  const double inc = cs.propagate_mean_only(x, 1, std::nullopt);
  std::vector<double> ls, le;
  for (std::size_t s : {16, 64, 256, 1024}) {
    double acc = 0;
    for (int rep = 0; rep < 20; ++rep)
      acc += nested_ei(cs, 1, std::nullopt, x, inc, StreamRng(1000 * s + rep), s, TerminalEstimator::sampled).standard_error;
    ls.push_back(std::log(static_cast<double>(s)));
    le.push_back(std::log(acc / 20));
  }
  const double mx = (ls[0] + ls[1] + ls[2] + ls[3]) / 4, my = (le[0] + le[1] + le[2] + le[3]) / 4;
  double sxy = 0, sxx = 0;
  for (int k = 0; k < 4; ++k) {
    sxy += (ls[k] - mx) * (le[k] - my);
    sxx += (ls[k] - mx) * (ls[k] - mx);
  }
  EXPECT_NEAR(sxy / sxx, -0.5, 0.1);
}

TEST(NestedUcb, ExceedsMeanAndCollapsesForOneStage) {
  const auto cs = CascadeSurrogate::fit(single_stage(6));
  const std::vector<Eigen::VectorXd> x{Eigen::Vector2d(0.1, 0.9)};
  const auto post = cs.stage(1).gps.front().posterior(x[0].transpose());
  EXPECT_EQ(nested_ucb(cs, 1, std::nullopt, x, 2.0, StreamRng(1), 32),
            ucb(post.mean(0), std::sqrt(post.variance(0)), 2.0));
  const auto two = CascadeSurrogate::fit(filled(5, 0));
  const std::vector<Eigen::VectorXd> x2{Eigen::VectorXd::Constant(1, 0.5), Eigen::VectorXd::Constant(1, 0.5)};
  EXPECT_GT(nested_ucb(two, 1, std::nullopt, x2, 1.0, StreamRng(2), 64), two.propagate_mean_only(x2, 1, std::nullopt));
}

TEST(MaximizeAcquisition, FindsSmoothOptimum) {
  AcquisitionConfig cfg;
  const Eigen::Vector3d c(0.3, 0.8, 0.55);
  auto f = [&](const Eigen::VectorXd& x, const StreamRng&) { return std::exp(-4 * (x - c).squaredNorm()); };
  const auto best = maximize_acquisition(f, 3, cfg, StreamRng(1));
  EXPECT_LT((best.x - c).norm(), 5e-3);
  const auto again = maximize_acquisition(f, 3, cfg, StreamRng(1));
  EXPECT_EQ(best.x, again.x);
}

TEST(DiscreteSearch, ReturnsPoolArgmaxUnderSharedStream) {
  const auto cs = CascadeSurrogate::fit(filled(6, 0));
  StreamRng r(12);
  const Eigen::MatrixXd pool = msbo_test::uniform_mat(200, 2, r);
  AcquisitionConfig cfg;
  cfg.mc_samples = 32;
  cfg.terminal = TerminalEstimator::sampled;
  const double inc = filled(6, 0).best_observed()->value;
  const StreamRng rng(77);
  const auto opt = optimize_stage_discrete(cs, 1, std::nullopt, inc, pool, cfg, rng);
  double best = -1;
  Eigen::Index arg = -1;
  for (Eigen::Index i = 0; i < pool.rows(); ++i) {
    const std::vector<Eigen::VectorXd> x{pool.row(i).head(1).transpose(), pool.row(i).tail(1).transpose()};
    const double v = nested_ei(cs, 1, std::nullopt, x, inc, rng.split(0xfeed), 32, TerminalEstimator::sampled).value;
    if (v > best) {
      best = v;
      arg = i;
    }
  }
  EXPECT_EQ(static_cast<Eigen::Index>(opt.pool_index), arg);
  EXPECT_EQ(opt.value, best);
  EXPECT_THROW(optimize_stage_discrete(cs, 1, std::nullopt, inc, Eigen::MatrixXd(0, 2), cfg, rng), std::invalid_argument);
}

TEST(SelectNext, ProposalIsArgmaxOverCandidates) {
  const Inventory inv = filled(5, 3);
  const auto cs = CascadeSurrogate::fit(inv);
  AcquisitionConfig cfg;
  cfg.mc_samples = 16;
  cfg.restarts = 2;
  cfg.raw_samples = 16;
  const auto p = select_next(cs, inv, cfg, StreamRng(21));
  ASSERT_TRUE(p);
  EXPECT_EQ(p->candidates.size(), 4u);  // new sample + three continuations
  for (const auto& c : p->candidates) EXPECT_LE(c.weighted_value, p->weighted_value);
  // Each candidate value is reproducible from its own stream.
  for (const auto& c : p->candidates) {
    std::optional<StartState> st;
    if (c.sample_id) st = StartState{inv.record(*c.sample_id).measurements.back(), inv.record(*c.sample_id).params.back()};
    const auto again = optimize_stage_continuous(cs, c.stage, st, inv.best_observed()->value, cfg,
                                                 candidate_stream(StreamRng(21), c.sample_id));
    EXPECT_EQ(again.value, c.raw_value);
  }
}

TEST(SelectNext, CostScalingDoesNotChangeChoice) {
  Inventory base = filled(5, 3);
  AcquisitionConfig cfg;
  cfg.mc_samples = 16;
  cfg.restarts = 2;
  cfg.raw_samples = 16;
  cfg.cost_weighting = true;
  std::optional<std::size_t> stage;
  std::optional<std::uint64_t> id;
  for (double k : {1.0, 7.0, 0.01}) {
    auto schema = base.schema();
    schema.stages[0].cost = 1.0 * k;
    schema.stages[1].cost = 3.0 * k;
    Inventory inv(schema);
    for (const auto& r : base.records()) {
      inv.create_sample(r.staged_params);
      for (std::size_t s = 0; s < r.stages_completed(); ++s) inv.record_measurement(r.id, s + 1, r.params[s], r.measurements[s]);
    }
    const auto p = select_next(CascadeSurrogate::fit(inv), inv, cfg, StreamRng(5));
    ASSERT_TRUE(p);
    if (!stage) {
      stage = p->stage;
      id = p->sample_id;
    }
    EXPECT_EQ(p->stage, *stage);
    EXPECT_EQ(p->sample_id, id);
  }
}

TEST(SelectNext, MinimumFrequencyForcesUndersampledStage) {
  const Inventory inv = filled(3, 4);
  AcquisitionConfig cfg;
  cfg.mc_samples = 8;
  cfg.restarts = 1;
  cfg.raw_samples = 4;
  cfg.min_stage_frequency = {0.0, 0.9};
  const auto p = select_next(CascadeSurrogate::fit(inv), inv, cfg, StreamRng(3));
  ASSERT_TRUE(p);
  EXPECT_EQ(p->stage, 2u);
  EXPECT_TRUE(p->frequency_forced);
}

TEST(SelectNext, FallsBackToUcbWhenEiVanishes) {
  const Inventory inv = filled(5, 2);
  const auto cs = CascadeSurrogate::fit(inv);
  AcquisitionConfig cfg;
  cfg.mc_samples = 8;
  cfg.restarts = 1;
  cfg.raw_samples = 4;
  const auto normal = select_next(cs, inv, cfg, StreamRng(3));
  ASSERT_TRUE(normal);
  EXPECT_EQ(normal->acq_kind, AcqKind::nested_ei);
  cfg.ei_vanish_threshold = std::numeric_limits<double>::infinity();
  const auto p = select_next(cs, inv, cfg, StreamRng(3));
  ASSERT_TRUE(p);
  EXPECT_EQ(p->acq_kind, AcqKind::ucb_fallback);
  for (const auto& c : p->candidates) EXPECT_LE(c.raw_value, p->raw_value);
}

TEST(SelectNext, NoCandidateWithoutSurrogate) {
  const Inventory inv = filled(1, 2);
  const auto cs = CascadeSurrogate::fit(inv, {{}, 2});
  EXPECT_FALSE(select_next(cs, inv, {}, StreamRng(1)));
}
