#ifndef EVSIM_EXPERIMENT_HPP_
#define EVSIM_EXPERIMENT_HPP_

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "evsim/eviction_test.hpp"
#include "evsim/memory.hpp"
#include "evsim/probability.hpp"
#include "evsim/reduction.hpp"

namespace evsim {

// Raised when an experiment runs but cannot produce its result (exit code 2).
class ExperimentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AdversaryKind { kHugePage, kSmallPage, kLimit, kCustom };
enum class TestKind { kSpecific, kAnyRobust, kAnyAggregate };
enum class RecoveryKind { kNone, kBacktracking, kRepeat };
enum class SweepMode { kArbitrary, kPartial };

std::string_view to_string(AdversaryKind k);
std::string_view to_string(TestKind k);
std::string_view to_string(RecoveryKind k);
std::string_view to_string(SweepMode k);
std::string_view to_string(ReductionAlgorithm k);
std::string_view to_string(LeaderMode k);
std::string_view to_string(ThresholdMode k);

struct ExperimentSpec {
  std::string preset = "skylake-like";
  AdversaryKind adversary = AdversaryKind::kSmallPage;
  unsigned gamma = 6;  // custom adversaries only
  TestKind test = TestKind::kSpecific;
  ReductionAlgorithm algorithm = ReductionAlgorithm::kGroupTesting;
  RecoveryKind recovery = RecoveryKind::kNone;
  Backtracking backtracking;
  unsigned repeat_attempts = 10;
  std::vector<uint64_t> n_values{492, 888, 1500, 2124, 3420};
  unsigned trials = 100;
  uint64_t seed = 1;
  bool reduce = true;

  // Ablation toggles.
  bool tlb_on = false;
  PolicyKind policy = PolicyKind::kLru;
  LeaderMode leader_mode = LeaderMode::kStatic;
  double jitter_sigma = 0.0;
  bool partial_congruence_stride = false;

  TestConfig test_config;

  // Per-set sweep: targeted set indexes (empty means all).
  std::vector<uint32_t> sweep_indexes;
  // Scaling: candidate sets with exactly a congruent elements.
  bool planted = true;

  unsigned jobs = 0;  // 0 uses the hardware concurrency
  std::string out_path;
  std::string json_path;

  void validate() const;
  MachineConfig machine() const;
  AdversaryModel adversary_model() const;
  SweepMode sweep_mode() const {
    return partial_congruence_stride ? SweepMode::kPartial : SweepMode::kArbitrary;
  }
  // Resolved spec as "key: value" lines.
  std::vector<std::string> describe() const;
};

MachineConfig preset_machine(const std::string& name);

// Overlays a YAML document onto `spec`. Unknown keys are errors.
void apply_yaml(ExperimentSpec& spec, const std::string& yaml_text);
ExperimentSpec load_spec_file(const std::string& path);

inline constexpr size_t kFailureKinds = 4;

struct RatePoint {
  uint64_t n = 0;
  unsigned trials = 0;
  double eviction_rate = 0;
  double reduction_rate = 0;
  // Fraction of sets that really are eviction sets, by the oracle.
  double oracle_eviction_rate = 0;
  double mean_accesses = 0;
  double mean_tests = 0;
  uint64_t total_accesses = 0;
  // Successes the algorithm reported but the oracle rejected.
  unsigned unverified_successes = 0;
  std::array<unsigned, kFailureKinds> failures{};

  double eviction_stderr() const;
  double reduction_stderr() const;
  unsigned failure_count(FailureKind k) const { return failures[static_cast<size_t>(k)]; }
};

struct TrialRecord {
  bool evicting = false;
  bool oracle_evicting = false;
  bool reduced = false;
  bool verified = false;
  FailureKind failure = FailureKind::kNone;
  uint64_t accesses = 0;
  uint64_t tests = 0;
};

RatePoint aggregate(uint64_t n, const std::vector<TrialRecord>& trials);

// One trial: sample, test, reduce, verify on a fresh machine.
TrialRecord run_rate_trial(const ExperimentSpec& spec, uint64_t n, uint64_t seed);

std::vector<RatePoint> run_rate_experiment(const ExperimentSpec& spec);

struct SweepPoint {
  uint32_t set_index = 0;
  SetRole role = SetRole::kFollower;
  RatePoint rates;
};

// Uses n_values.front() as the candidate set size.
std::vector<SweepPoint> run_per_set_sweep(const ExperimentSpec& spec);

struct ScalingRow {
  uint64_t n = 0;
  ReductionAlgorithm algorithm = ReductionAlgorithm::kGroupTesting;
  double mean_accesses = 0;
  double mean_tests = 0;
  unsigned successes = 0;
  unsigned trials = 0;
};

struct ScalingResult {
  std::vector<ScalingRow> rows;
  double group_exponent = 0;
  double baseline_exponent = 0;
};

// Slope of log y against log x by least squares; needs 3+ points.
double fit_exponent(const std::vector<double>& xs, const std::vector<double>& ys);

ScalingResult run_scaling_experiment(const ExperimentSpec& spec);

struct ModelReport {
  struct CurvePoint {
    uint64_t n;
    double binomial;
    double multinomial;
  };
  struct CostPoint {
    int log2_p;
    uint64_t n;
    double cost;
  };
  struct OptimalRow {
    std::string adversary;
    int log2_p;
    uint64_t baseline_n;
    uint64_t group_n;
  };
  std::vector<CurvePoint> probability;
  std::vector<CostPoint> cost;
  std::vector<OptimalRow> optimal;
};

ModelReport run_model_report(const ExperimentSpec& spec);

struct FindAllReport {
  FindAllResult result;
  size_t pool_size = 0;
  size_t classes_with_eviction_set = 0;
  size_t verified_sets = 0;
  size_t distinct_classes_found = 0;
  // Per found set: oracle location of its first member and its congruent count.
  std::vector<CacheLocation> locations;
  std::vector<size_t> congruent_members;
};

FindAllReport run_find_all(const ExperimentSpec& spec);

struct WelchResult {
  double t = 0;
  double dof = 0;
  double p_one_sided = 1;  // H1: mean(a) > mean(b)
};

WelchResult welch_test(const std::vector<double>& a, const std::vector<double>& b);

// Output helpers. Every CSV starts with the resolved spec as # comments.
void write_rates_csv(std::ostream& os, const ExperimentSpec& spec,
                     const std::vector<RatePoint>& points);
void write_sweep_csv(std::ostream& os, const ExperimentSpec& spec,
                     const std::vector<SweepPoint>& points);
void write_scaling_csv(std::ostream& os, const ExperimentSpec& spec, const ScalingResult& res);
void write_model_csv(std::ostream& os, const ExperimentSpec& spec, const ModelReport& rep);
void write_find_all_csv(std::ostream& os, const ExperimentSpec& spec, const FindAllReport& rep);

std::string rates_json(const ExperimentSpec& spec, const std::vector<RatePoint>& points);
std::string sweep_json(const ExperimentSpec& spec, const std::vector<SweepPoint>& points);
std::string scaling_json(const ExperimentSpec& spec, const ScalingResult& res);
std::string model_json(const ExperimentSpec& spec, const ModelReport& rep);

}  // namespace evsim

#endif  // EVSIM_EXPERIMENT_HPP_
