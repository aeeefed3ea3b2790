#include <gtest/gtest.h>

#include <sstream>

#include "evsim/experiment.hpp"

namespace evsim {
namespace {

ExperimentSpec quick_spec() {
  ExperimentSpec spec;
  spec.n_values = {600, 2500};
  spec.trials = 12;
  spec.seed = 5;
  spec.test_config.repetitions = 1;
  spec.jobs = 1;
  return spec;
}

TEST(SpecTest, DefaultsAreValid) {
  EXPECT_NO_THROW(ExperimentSpec{}.validate());
}

TEST(SpecTest, RejectsZeroTrials) {
  auto spec = quick_spec();
  spec.trials = 0;
  EXPECT_THROW(spec.validate(), ConfigError);
  EXPECT_THROW(run_rate_experiment(spec), ConfigError);
}

TEST(SpecTest, RejectsUnorderedSizes) {
  auto spec = quick_spec();
  spec.n_values = {100, 100};
  EXPECT_THROW(spec.validate(), ConfigError);
  spec.n_values = {};
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(SpecTest, RecoveryOnlyForSpecificTest) {
  auto spec = quick_spec();
  spec.test = TestKind::kAnyRobust;
  spec.recovery = RecoveryKind::kBacktracking;
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(SpecTest, PresetsAndAdversaries) {
  ExperimentSpec spec;
  spec.preset = "haswell-like";
  EXPECT_EQ(spec.machine().cache.assoc, 16u);
  EXPECT_EQ(spec.machine().tlb.entries, 1024u);
  spec.adversary = AdversaryKind::kHugePage;
  EXPECT_EQ(spec.machine().page_bits, 21u);
  EXPECT_EQ(spec.adversary_model().controlled_bits, 11u);
  spec.preset = "nehalem";
  EXPECT_THROW(spec.machine(), ConfigError);
}

TEST(YamlTest, OverlaysNestedSections) {
  ExperimentSpec spec;
  apply_yaml(spec, R"(
preset: haswell-like
adversary: limit
n_values: [10, 20, 30]
trials: 7
seed: 99
recovery: backtracking
ablation:
  tlb_on: true
  policy: adaptive
  leader_mode: rand-runtime
  jitter_sigma: 1.5
test_config:
  repetitions: 3
  threshold_mode: latency
  flip_probability: 0.05
output:
  path: out.csv
)");
  EXPECT_EQ(spec.preset, "haswell-like");
  EXPECT_EQ(spec.adversary, AdversaryKind::kLimit);
  EXPECT_EQ(spec.n_values, (std::vector<uint64_t>{10, 20, 30}));
  EXPECT_EQ(spec.trials, 7u);
  EXPECT_EQ(spec.seed, 99u);
  EXPECT_EQ(spec.recovery, RecoveryKind::kBacktracking);
  EXPECT_TRUE(spec.tlb_on);
  EXPECT_EQ(spec.policy, PolicyKind::kAdaptiveDueling);
  EXPECT_EQ(spec.leader_mode, LeaderMode::kRandRuntime);
  EXPECT_DOUBLE_EQ(spec.jitter_sigma, 1.5);
  EXPECT_EQ(spec.test_config.repetitions, 3u);
  EXPECT_EQ(spec.test_config.mode, ThresholdMode::kLatency);
  EXPECT_DOUBLE_EQ(spec.test_config.flip_probability, 0.05);
  EXPECT_EQ(spec.out_path, "out.csv");
  EXPECT_NO_THROW(spec.validate());
}

TEST(YamlTest, UnknownKeysAndBadValuesAreErrors) {
  ExperimentSpec spec;
  EXPECT_THROW(apply_yaml(spec, "colour: red"), ConfigError);
  EXPECT_THROW(apply_yaml(spec, "trials: many"), ConfigError);
  EXPECT_THROW(apply_yaml(spec, "ablation: {tlb: true}"), ConfigError);
  EXPECT_THROW(apply_yaml(spec, "adversary: superpage"), ConfigError);
  EXPECT_THROW(apply_yaml(spec, "[1, 2"), ConfigError);
  EXPECT_THROW(load_spec_file("/nonexistent/spec.yaml"), ConfigError);
}

TEST(RateTest, IdealRatesAgreeWithOracle) {
  auto pts = run_rate_experiment(quick_spec());
  ASSERT_EQ(pts.size(), 2u);
  for (const auto& p : pts) {
    EXPECT_EQ(p.trials, 12u);
    EXPECT_DOUBLE_EQ(p.eviction_rate, p.oracle_eviction_rate);
    EXPECT_DOUBLE_EQ(p.reduction_rate, p.eviction_rate);
    EXPECT_EQ(p.unverified_successes, 0u);
    EXPECT_EQ(p.failure_count(FailureKind::kNotEvictionSet),
              static_cast<unsigned>(std::lround((1 - p.eviction_rate) * p.trials)));
  }
  EXPECT_LT(pts[0].eviction_rate, pts[1].eviction_rate);
}

TEST(RateTest, CountersAddUp) {
  auto spec = quick_spec();
  spec.n_values = {1500};
  uint64_t sum = 0;
  for (unsigned t = 0; t < spec.trials; ++t)
    sum += run_rate_trial(spec, 1500, derive_seed(spec.seed, 1500, t)).accesses;
  EXPECT_EQ(run_rate_experiment(spec).front().total_accesses, sum);
}

TEST(RateTest, OutputIsByteIdenticalAndIndependentOfWorkers) {
  auto spec = quick_spec();
  std::ostringstream a, b, c;
  write_rates_csv(a, spec, run_rate_experiment(spec));
  write_rates_csv(b, spec, run_rate_experiment(spec));
  spec.jobs = 3;
  write_rates_csv(c, spec, run_rate_experiment(spec));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str(), c.str());
  EXPECT_EQ(a.str().rfind("# evsim rates\n", 0), 0u);
  EXPECT_NE(a.str().find("N,trials,eviction_rate,reduction_rate,mean_accesses,mean_tests,"
                         "fail_not_evicting,fail_inconsistent,fail_budget"),
            std::string::npos);
  EXPECT_NE(a.str().find("# seed: 5"), std::string::npos);
}

TEST(RateTest, ArbitraryAddressReduction) {
  auto spec = quick_spec();
  spec.test = TestKind::kAnyRobust;
  spec.n_values = {1200};
  auto p = run_rate_experiment(spec).front();
  EXPECT_DOUBLE_EQ(p.eviction_rate, p.oracle_eviction_rate);
  EXPECT_DOUBLE_EQ(p.reduction_rate, p.eviction_rate);
}

TEST(RateTest, JsonMirrorCarriesSpecAndPoints) {
  auto spec = quick_spec();
  auto text = rates_json(spec, run_rate_experiment(spec));
  EXPECT_NE(text.find("\"eviction_rate\""), std::string::npos);
  EXPECT_NE(text.find("\"seed\": \"5\""), std::string::npos);
}

TEST(SweepTest, NeedsHugePages) {
  auto spec = quick_spec();
  EXPECT_THROW(run_per_set_sweep(spec), ConfigError);
}

TEST(SweepTest, PureLruIsUniform) {
  auto spec = quick_spec();
  spec.adversary = AdversaryKind::kHugePage;
  spec.n_values = {4000};
  spec.trials = 4;
  spec.sweep_indexes = {0, 1, 65, 300};
  auto pts = run_per_set_sweep(spec);
  ASSERT_EQ(pts.size(), 4u);
  for (const auto& p : pts) {
    EXPECT_EQ(p.role, SetRole::kFollower);
    EXPECT_DOUBLE_EQ(p.rates.reduction_rate, 1.0);
  }
}

TEST(SweepTest, RejectsOutOfRangeIndex) {
  auto spec = quick_spec();
  spec.adversary = AdversaryKind::kHugePage;
  spec.sweep_indexes = {1024};
  EXPECT_THROW(run_per_set_sweep(spec), ConfigError);
}

TEST(FitTest, RecoversPowerLaws) {
  std::vector<double> xs{10, 20, 40, 80}, ys;
  for (double x : xs) ys.push_back(3 * x * x);
  EXPECT_NEAR(fit_exponent(xs, ys), 2.0, 1e-12);
  EXPECT_THROW(fit_exponent({1, 2}, {1, 2}), ExperimentError);
  EXPECT_THROW(fit_exponent({1, 1, 1}, {1, 2, 3}), ExperimentError);
}

TEST(ScalingTest, FewerThanThreeSizesIsRefused) {
  auto spec = quick_spec();
  EXPECT_THROW(run_scaling_experiment(spec), ExperimentError);
}

TEST(ScalingTest, SmallGridHasExpectedShape) {
  auto spec = quick_spec();
  spec.n_values = {200, 400, 800};
  spec.trials = 2;
  auto res = run_scaling_experiment(spec);
  EXPECT_EQ(res.rows.size(), 6u);
  for (const auto& r : res.rows) EXPECT_EQ(r.successes, r.trials);
  EXPECT_GT(res.baseline_exponent, res.group_exponent);
}

TEST(ModelReportTest, HasFigureAndTableData) {
  auto rep = run_model_report(ExperimentSpec{});
  ASSERT_EQ(rep.optimal.size(), 3u);
  EXPECT_EQ(rep.optimal[1].adversary, "4kb");
  EXPECT_EQ(rep.optimal[1].log2_p, -7);
  bool saw1500 = false, saw732 = false;
  for (const auto& p : rep.probability) {
    if (p.n == 1500) saw1500 = std::abs(p.binomial - 0.5) < 0.02;
    if (p.n == 732) saw732 = std::abs(p.multinomial - 0.5) < 0.05;
  }
  EXPECT_TRUE(saw1500);
  EXPECT_TRUE(saw732);
}

TEST(WelchTest, DetectsShiftAndToleratesNoise) {
  std::vector<double> hi{0.95, 1.0, 0.97, 0.99, 1.0, 0.96};
  std::vector<double> lo{0.4, 0.9, 0.1, 0.7, 0.5, 0.3};
  EXPECT_LT(welch_test(hi, lo).p_one_sided, 0.01);
  EXPECT_GT(welch_test(lo, hi).p_one_sided, 0.5);
  EXPECT_EQ(welch_test({1, 1}, {1, 1}).p_one_sided, 1.0);
  EXPECT_THROW(welch_test({1}, {1, 2}), ExperimentError);
}

}  // namespace
}  // namespace evsim
