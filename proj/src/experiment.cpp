#include "evsim/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include "json.hpp"

namespace evsim {
namespace {

constexpr unsigned kHugePageBits = 21;

template <typename F>
void parallel_for(size_t count, unsigned jobs, F&& body) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = static_cast<unsigned>(std::min<size_t>(jobs, count));
  if (jobs <= 1) {
    for (size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> workers;
  for (unsigned w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (error) std::rethrow_exception(error);
}

template <typename Enum, size_t N>
Enum parse_enum(const std::string& text, const std::array<Enum, N>& values, const char* what) {
  for (Enum v : values)
    if (to_string(v) == text) return v;
  throw ConfigError(fmt::format("unknown {} '{}'", what, text));
}

AdversaryKind parse_adversary(const std::string& s) {
  if (s == "hp") return AdversaryKind::kHugePage;
  return parse_enum(s, std::array{AdversaryKind::kHugePage, AdversaryKind::kSmallPage,
                                  AdversaryKind::kLimit, AdversaryKind::kCustom},
                    "adversary");
}

ReductionAlgorithm parse_algorithm(const std::string& s) {
  if (s == "group-testing" || s == "linear") return ReductionAlgorithm::kGroupTesting;
  if (s == "quadratic") return ReductionAlgorithm::kBaseline;
  return parse_enum(s, std::array{ReductionAlgorithm::kBaseline, ReductionAlgorithm::kGroupTesting},
                    "algorithm");
}

// Classes (slice, set) with their members among `set`.
std::map<std::pair<uint32_t, uint32_t>, size_t> class_sizes(Machine& ms,
                                                            std::span<const VirtAddr> set) {
  std::map<std::pair<uint32_t, uint32_t>, size_t> sizes;
  for (VirtAddr va : set) {
    auto loc = ms.location(va);
    ++sizes[{loc.slice, loc.set_index}];
  }
  return sizes;
}

// Test, reduce and verify one candidate set. x is ignored by the
// arbitrary-address tests.
TrialRecord evaluate(const ExperimentSpec& spec, Machine& ms, VirtAddr x,
                     std::span<const VirtAddr> set, std::span<const VirtAddr> spare,
                     uint64_t seed) {
  TrialRecord rec;
  EvictionTester tester(ms, spec.test_config, derive_seed(seed, 3));
  const unsigned a = ms.cache_config().assoc;
  const bool specific = spec.test == TestKind::kSpecific;

  if (specific) {
    rec.oracle_evicting = count_congruent(ms, set, x) >= a;
    rec.evicting = tester.specific(set, x);
  } else {
    auto sizes = class_sizes(ms, set);
    rec.oracle_evicting = std::any_of(sizes.begin(), sizes.end(),
                                      [&](const auto& kv) { return kv.second > a; });
    rec.evicting = spec.test == TestKind::kAnyRobust ? tester.any_robust(set)
                                                     : tester.any_aggregate(set);
  }

  if (!rec.evicting) {
    rec.failure = FailureKind::kNotEvictionSet;
  } else if (spec.reduce) {
    ReductionOutcome out;
    if (!specific) {
      out = reduce_any(tester, set, spec.algorithm);
    } else if (spec.recovery == RecoveryKind::kBacktracking) {
      out = reduce_with_recovery(tester, set, x, spec.backtracking);
    } else if (spec.recovery == RecoveryKind::kRepeat) {
      out = reduce_with_recovery(
          tester, set, x, RepeatUntilSuccess{spare, set.size(), spec.repeat_attempts, seed});
    } else if (spec.algorithm == ReductionAlgorithm::kBaseline) {
      out = baseline_reduce(tester, set, x);
    } else {
      out = group_test_reduce(tester, set, x);
    }
    rec.reduced = out.success;
    rec.verified = out.verified_congruent;
    if (!out.success)
      rec.failure = out.failure;
    else if (!out.verified_congruent)
      rec.failure = FailureKind::kTestInconsistency;
  }
  rec.accesses = ms.counters().mem_accesses;
  rec.tests = ms.counters().test_invocations;
  return rec;
}

std::string header_block(const ExperimentSpec& spec, std::string_view command) {
  std::string out = fmt::format("# evsim {}\n", command);
  for (const auto& line : spec.describe()) out += fmt::format("# {}\n", line);
  return out;
}

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::abs(v) >= 1e5) return fmt::format("{:.1f}", v);
  return fmt::format("{:.6g}", v);
}

std::string_view role_name(SetRole r) {
  switch (r) {
    case SetRole::kFollower: return "follower";
    case SetRole::kLruLeader: return "lru-leader";
    case SetRole::kBipLeader: return "bip-leader";
  }
  return "?";
}

nlohmann::json spec_json(const ExperimentSpec& spec) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& line : spec.describe()) {
    auto pos = line.find(": ");
    j[line.substr(0, pos)] = line.substr(pos + 2);
  }
  return j;
}

nlohmann::json rate_json(const RatePoint& p) {
  return {{"N", p.n},
          {"trials", p.trials},
          {"eviction_rate", p.eviction_rate},
          {"reduction_rate", p.reduction_rate},
          {"oracle_eviction_rate", p.oracle_eviction_rate},
          {"mean_accesses", p.mean_accesses},
          {"mean_tests", p.mean_tests},
          {"total_accesses", p.total_accesses},
          {"unverified_successes", p.unverified_successes},
          {"fail_not_evicting", p.failure_count(FailureKind::kNotEvictionSet)},
          {"fail_inconsistent", p.failure_count(FailureKind::kTestInconsistency)},
          {"fail_budget", p.failure_count(FailureKind::kBudgetExhausted)}};
}

constexpr std::string_view kRateColumns =
    "N,trials,eviction_rate,reduction_rate,mean_accesses,mean_tests,fail_not_evicting,"
    "fail_inconsistent,fail_budget,oracle_eviction_rate,unverified_successes,total_accesses";

std::string rate_row(const RatePoint& p) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}", p.n, p.trials, num(p.eviction_rate),
                     num(p.reduction_rate), num(p.mean_accesses), num(p.mean_tests),
                     p.failure_count(FailureKind::kNotEvictionSet),
                     p.failure_count(FailureKind::kTestInconsistency),
                     p.failure_count(FailureKind::kBudgetExhausted), num(p.oracle_eviction_rate),
                     p.unverified_successes, p.total_accesses);
}

}  // namespace

std::string_view to_string(AdversaryKind k) {
  switch (k) {
    case AdversaryKind::kHugePage: return "huge-page";
    case AdversaryKind::kSmallPage: return "4kb";
    case AdversaryKind::kLimit: return "limit";
    case AdversaryKind::kCustom: return "custom";
  }
  return "?";
}

std::string_view to_string(TestKind k) {
  switch (k) {
    case TestKind::kSpecific: return "specific";
    case TestKind::kAnyRobust: return "any-robust";
    case TestKind::kAnyAggregate: return "any-aggregate";
  }
  return "?";
}

std::string_view to_string(RecoveryKind k) {
  switch (k) {
    case RecoveryKind::kNone: return "none";
    case RecoveryKind::kBacktracking: return "backtracking";
    case RecoveryKind::kRepeat: return "repeat";
  }
  return "?";
}

std::string_view to_string(SweepMode k) {
  return k == SweepMode::kArbitrary ? "arbitrary" : "partial";
}

std::string_view to_string(ReductionAlgorithm k) {
  return k == ReductionAlgorithm::kBaseline ? "baseline" : "group";
}

std::string_view to_string(LeaderMode k) {
  return k == LeaderMode::kStatic ? "static" : "rand-runtime";
}

std::string_view to_string(ThresholdMode k) {
  return k == ThresholdMode::kMissCount ? "miss-count" : "latency";
}

MachineConfig preset_machine(const std::string& name) {
  if (name == "skylake-like" || name == "custom") return skylake_like();
  if (name == "haswell-like") return haswell_like();
  throw ConfigError(fmt::format("unknown preset '{}'", name));
}

void ExperimentSpec::validate() const {
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (n_values.empty()) throw ConfigError("n_values must not be empty");
  for (size_t i = 1; i < n_values.size(); ++i)
    if (n_values[i] <= n_values[i - 1]) throw ConfigError("n_values must be strictly increasing");
  if (n_values.front() < 1) throw ConfigError("n_values must be positive");
  if (jitter_sigma < 0) throw ConfigError("jitter_sigma must be >= 0");
  if (test != TestKind::kSpecific && recovery != RecoveryKind::kNone)
    throw ConfigError("recovery strategies apply to the specific-address test only");
  if (test == TestKind::kAnyAggregate && test_config.mode != ThresholdMode::kLatency)
    throw ConfigError("any-aggregate needs threshold_mode: latency");
  if (recovery == RecoveryKind::kRepeat && repeat_attempts < 1)
    throw ConfigError("repeat_attempts must be >= 1");
  test_config.validate();
  machine().validate();
  adversary_model();
}

MachineConfig ExperimentSpec::machine() const {
  MachineConfig m = preset_machine(preset);
  if (adversary == AdversaryKind::kHugePage) m.page_bits = kHugePageBits;
  m.tlb.enabled = tlb_on;
  m.cache.policy = policy;
  m.cache.adaptive.leader_mode = leader_mode;
  m.latency.jitter_sigma = jitter_sigma;
  return m;
}

AdversaryModel ExperimentSpec::adversary_model() const {
  const MachineConfig m = machine();
  switch (adversary) {
    case AdversaryKind::kHugePage:
    case AdversaryKind::kSmallPage: return AdversaryModel::from_pages(m.cache, m.page_bits);
    case AdversaryKind::kLimit: return AdversaryModel::with_control(m.cache, m.page_bits, 0);
    case AdversaryKind::kCustom: return AdversaryModel::with_control(m.cache, m.page_bits, gamma);
  }
  throw ConfigError("unknown adversary");
}

std::vector<std::string> ExperimentSpec::describe() const {
  std::string ns, idx;
  for (auto n : n_values) ns += fmt::format("{}{}", ns.empty() ? "" : " ", n);
  for (auto t : sweep_indexes) idx += fmt::format("{}{}", idx.empty() ? "" : " ", t);
  const MachineConfig m = machine();
  return {
      fmt::format("preset: {}", preset),
      fmt::format("geometry: a={} c={} s={} l={} page_bits={}", m.cache.assoc, m.cache.set_bits,
                  m.cache.slice_bits, m.cache.line_bits, m.page_bits),
      fmt::format("adversary: {}", to_string(adversary)),
      fmt::format("gamma: {}", adversary_model().controlled_bits),
      fmt::format("test: {}", to_string(test)),
      fmt::format("algorithm: {}", to_string(algorithm)),
      fmt::format("recovery: {}", to_string(recovery)),
      fmt::format("n_values: {}", ns),
      fmt::format("trials: {}", trials),
      fmt::format("seed: {}", seed),
      fmt::format("reduce: {}", reduce),
      fmt::format("tlb_on: {}", tlb_on),
      fmt::format("tlb: {} entries {} ways", m.tlb.entries, m.tlb.ways),
      fmt::format("policy: {}", to_string(policy)),
      fmt::format("leader_mode: {}", to_string(leader_mode)),
      fmt::format("jitter_sigma: {}", jitter_sigma),
      fmt::format("partial_congruence_stride: {}", partial_congruence_stride),
      fmt::format("repetitions: {}", test_config.repetitions),
      fmt::format("threshold_mode: {}", to_string(test_config.mode)),
      fmt::format("flip_probability: {}", test_config.flip_probability),
      fmt::format("sweep_indexes: {}", idx.empty() ? "all" : idx),
      fmt::format("planted: {}", planted),
  };
}

void apply_yaml(ExperimentSpec& spec, const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(fmt::format("config parse error: {}", e.what()));
  }
  if (!root || root.IsNull()) return;
  if (!root.IsMap()) throw ConfigError("config must be a mapping");

  auto get = [](const YAML::Node& n, const std::string& key, auto& target) {
    using T = std::decay_t<decltype(target)>;
    try {
      target = n.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(fmt::format("bad value for '{}'", key));
    }
  };

  for (const auto& kv : root) {
    const std::string key = kv.first.as<std::string>();
    const YAML::Node& v = kv.second;
    std::string s;
    if (key == "preset") {
      get(v, key, spec.preset);
    } else if (key == "adversary") {
      get(v, key, s);
      spec.adversary = parse_adversary(s);
    } else if (key == "gamma") {
      get(v, key, spec.gamma);
    } else if (key == "test") {
      get(v, key, s);
      spec.test = parse_enum(
          s, std::array{TestKind::kSpecific, TestKind::kAnyRobust, TestKind::kAnyAggregate}, key.c_str());
    } else if (key == "algorithm") {
      get(v, key, s);
      spec.algorithm = parse_algorithm(s);
    } else if (key == "recovery") {
      get(v, key, s);
      spec.recovery = parse_enum(
          s, std::array{RecoveryKind::kNone, RecoveryKind::kBacktracking, RecoveryKind::kRepeat},
          key.c_str());
    } else if (key == "backtrack_depth") {
      get(v, key, spec.backtracking.depth);
    } else if (key == "backtrack_max_steps") {
      get(v, key, spec.backtracking.max_steps);
    } else if (key == "repeat_attempts") {
      get(v, key, spec.repeat_attempts);
    } else if (key == "n_values") {
      get(v, key, spec.n_values);
    } else if (key == "trials") {
      get(v, key, spec.trials);
    } else if (key == "seed") {
      get(v, key, spec.seed);
    } else if (key == "reduce") {
      get(v, key, spec.reduce);
    } else if (key == "planted") {
      get(v, key, spec.planted);
    } else if (key == "jobs") {
      get(v, key, spec.jobs);
    } else if (key == "sweep_indexes") {
      get(v, key, spec.sweep_indexes);
    } else if (key == "ablation") {
      if (!v.IsMap()) throw ConfigError("'ablation' must be a mapping");
      for (const auto& a : v) {
        const std::string k = a.first.as<std::string>();
        if (k == "tlb_on") {
          get(a.second, k, spec.tlb_on);
        } else if (k == "policy") {
          get(a.second, k, s);
          spec.policy = parse_policy(s);
        } else if (k == "leader_mode") {
          get(a.second, k, s);
          spec.leader_mode =
              parse_enum(s, std::array{LeaderMode::kStatic, LeaderMode::kRandRuntime}, k.c_str());
        } else if (k == "jitter_sigma") {
          get(a.second, k, spec.jitter_sigma);
        } else if (k == "partial_congruence_stride") {
          get(a.second, k, spec.partial_congruence_stride);
        } else {
          throw ConfigError(fmt::format("unknown ablation key '{}'", k));
        }
      }
    } else if (key == "test_config") {
      if (!v.IsMap()) throw ConfigError("'test_config' must be a mapping");
      for (const auto& a : v) {
        const std::string k = a.first.as<std::string>();
        if (k == "repetitions") {
          get(a.second, k, spec.test_config.repetitions);
        } else if (k == "threshold_mode") {
          get(a.second, k, s);
          spec.test_config.mode =
              parse_enum(s, std::array{ThresholdMode::kMissCount, ThresholdMode::kLatency}, k.c_str());
        } else if (k == "latency_threshold") {
          get(a.second, k, spec.test_config.latency_threshold);
        } else if (k == "required_misses") {
          get(a.second, k, spec.test_config.required_misses);
        } else if (k == "flip_probability") {
          get(a.second, k, spec.test_config.flip_probability);
        } else {
          throw ConfigError(fmt::format("unknown test_config key '{}'", k));
        }
      }
    } else if (key == "output") {
      if (!v.IsMap()) throw ConfigError("'output' must be a mapping");
      for (const auto& a : v) {
        const std::string k = a.first.as<std::string>();
        if (k == "path") get(a.second, k, spec.out_path);
        else if (k == "json") get(a.second, k, spec.json_path);
        else throw ConfigError(fmt::format("unknown output key '{}'", k));
      }
    } else {
      throw ConfigError(fmt::format("unknown config key '{}'", key));
    }
  }
}

ExperimentSpec load_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config '{}'", path));
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentSpec spec;
  apply_yaml(spec, ss.str());
  return spec;
}

double RatePoint::eviction_stderr() const {
  return std::sqrt(eviction_rate * (1 - eviction_rate) / std::max(1u, trials));
}

double RatePoint::reduction_stderr() const {
  return std::sqrt(reduction_rate * (1 - reduction_rate) / std::max(1u, trials));
}

RatePoint aggregate(uint64_t n, const std::vector<TrialRecord>& trials) {
  RatePoint p;
  p.n = n;
  p.trials = static_cast<unsigned>(trials.size());
  if (trials.empty()) return p;
  unsigned evict = 0, reduced = 0, oracle = 0;
  double tests = 0;
  for (const auto& t : trials) {
    evict += t.evicting;
    reduced += t.verified;
    oracle += t.oracle_evicting;
    if (t.reduced && !t.verified) ++p.unverified_successes;
    p.total_accesses += t.accesses;
    tests += static_cast<double>(t.tests);
    if (t.failure != FailureKind::kNone) ++p.failures[static_cast<size_t>(t.failure)];
  }
  const double k = static_cast<double>(trials.size());
  p.eviction_rate = evict / k;
  p.reduction_rate = reduced / k;
  p.oracle_eviction_rate = oracle / k;
  p.mean_accesses = static_cast<double>(p.total_accesses) / k;
  p.mean_tests = tests / k;
  return p;
}

TrialRecord run_rate_trial(const ExperimentSpec& spec, uint64_t n, uint64_t seed) {
  Machine ms(spec.machine(), derive_seed(seed, 0));
  const AdversaryModel adv = spec.adversary_model();
  Rng rng(derive_seed(seed, 2));
  if (spec.test == TestKind::kSpecific) {
    // x and S share one contiguous region of n + 1 strided addresses.
    AddressPool pool = build_pool(ms, n + 1, adv, derive_seed(seed, 1));
    shuffle_in_place(pool.addrs, rng);
    const VirtAddr x = pool.addrs.back();
    pool.addrs.pop_back();
    std::vector<VirtAddr> spare;
    if (spec.recovery == RecoveryKind::kRepeat) {
      AddressPool extra = build_pool(ms, 4 * n, adv, derive_seed(seed, 4));
      spare = std::move(extra.addrs);
    }
    return evaluate(spec, ms, x, pool.addrs, spare, seed);
  }
  AddressPool pool = build_pool(ms, n, adv, derive_seed(seed, 1));
  shuffle_in_place(pool.addrs, rng);
  return evaluate(spec, ms, 0, pool.addrs, {}, seed);
}

std::vector<RatePoint> run_rate_experiment(const ExperimentSpec& spec) {
  spec.validate();
  std::vector<RatePoint> points;
  for (uint64_t n : spec.n_values) {
    std::vector<TrialRecord> recs(spec.trials);
    parallel_for(spec.trials, spec.jobs, [&](size_t t) {
      recs[t] = run_rate_trial(spec, n, derive_seed(spec.seed, n, t));
    });
    points.push_back(aggregate(n, recs));
  }
  return points;
}

std::vector<SweepPoint> run_per_set_sweep(const ExperimentSpec& spec) {
  spec.validate();
  if (spec.adversary != AdversaryKind::kHugePage)
    throw ConfigError("the per-set sweep needs the huge-page adversary");
  if (spec.test != TestKind::kSpecific)
    throw ConfigError("the per-set sweep uses the specific-address test");
  const MachineConfig mc = spec.machine();
  const unsigned full = mc.cache.set_bits;
  // Arbitrary pools use the small-page stride, partial ones the full set stride.
  const unsigned gamma = spec.sweep_mode() == SweepMode::kPartial
                             ? full
                             : std::min(full, 12 - mc.cache.line_bits);
  const uint64_t n = spec.n_values.front();

  std::vector<uint32_t> indexes = spec.sweep_indexes;
  if (indexes.empty())
    for (uint32_t t = 0; t < mc.cache.num_sets(); ++t) indexes.push_back(t);
  for (uint32_t t : indexes)
    if (t >= mc.cache.num_sets()) throw ConfigError(fmt::format("set index {} out of range", t));

  const auto lru_leaders = Cache::static_leaders(mc.cache, SetRole::kLruLeader);
  const auto bip_leaders = Cache::static_leaders(mc.cache, SetRole::kBipLeader);
  const bool static_roles = mc.cache.policy == PolicyKind::kAdaptiveDueling &&
                            mc.cache.adaptive.leader_mode == LeaderMode::kStatic;

  std::vector<SweepPoint> out(indexes.size());
  std::vector<std::vector<TrialRecord>> recs(indexes.size(),
                                             std::vector<TrialRecord>(spec.trials));
  parallel_for(indexes.size() * spec.trials, spec.jobs, [&](size_t job) {
    const size_t ii = job / spec.trials, trial = job % spec.trials;
    const uint32_t t = indexes[ii];
    const uint64_t seed = derive_seed(spec.seed, t, trial);
    Machine ms(mc, derive_seed(seed, 0));
    AdversaryModel adv = AdversaryModel::with_control(mc.cache, mc.page_bits, gamma);
    adv.fixed_offset = static_cast<uint64_t>(t & ((1u << gamma) - 1)) << mc.cache.line_bits;
    AddressPool pool = build_pool(ms, n + 1, adv, derive_seed(seed, 1));
    Rng rng(derive_seed(seed, 2));
    shuffle_in_place(pool.addrs, rng);
    // The target is a pool member in set t; the page offset fixes its index.
    auto it = std::find_if(pool.addrs.begin(), pool.addrs.end(), [&](VirtAddr va) {
      return ((va >> mc.cache.line_bits) & (mc.cache.num_sets() - 1)) == t;
    });
    if (it == pool.addrs.end()) throw ConfigError("candidate set too small to reach every set");
    const VirtAddr x = *it;
    pool.addrs.erase(it);
    recs[ii][trial] = evaluate(spec, ms, x, pool.addrs, {}, seed);
  });
  for (size_t ii = 0; ii < indexes.size(); ++ii) {
    const uint32_t t = indexes[ii];
    out[ii].set_index = t;
    if (static_roles) {
      if (std::find(lru_leaders.begin(), lru_leaders.end(), t) != lru_leaders.end())
        out[ii].role = SetRole::kLruLeader;
      else if (std::find(bip_leaders.begin(), bip_leaders.end(), t) != bip_leaders.end())
        out[ii].role = SetRole::kBipLeader;
    }
    out[ii].rates = aggregate(n, recs[ii]);
  }
  return out;
}

double fit_exponent(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw ExperimentError("fit inputs differ in length");
  if (xs.size() < 3) throw ExperimentError("exponent fit needs at least 3 N values");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0 && ys[i] > 0)) throw ExperimentError("exponent fit needs positive data");
    const double lx = std::log(xs[i]), ly = std::log(ys[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double k = static_cast<double>(xs.size());
  const double den = k * sxx - sx * sx;
  if (den == 0) throw ExperimentError("exponent fit needs distinct N values");
  return (k * sxy - sx * sy) / den;
}

namespace {

// Candidate set of size n for target x: exactly `assoc` congruent members
// (planted) or a random set that the oracle confirms as an eviction set.
std::vector<VirtAddr> scaling_candidates(const ExperimentSpec& spec, Machine& ms,
                                         const AdversaryModel& adv, uint64_t n, VirtAddr& x,
                                         uint64_t seed) {
  const unsigned a = ms.cache_config().assoc;
  if (n < a) throw ConfigError("N must be at least the associativity");
  const double p = collision_probability(adv, ms.cache_config());
  Rng rng(derive_seed(seed, 2));
  if (spec.planted) {
    const uint64_t size = n + static_cast<uint64_t>(4.0 * a / p) + 1;
    AddressPool pool = build_pool(ms, size, adv, derive_seed(seed, 1));
    shuffle_in_place(pool.addrs, rng);
    x = pool.addrs.back();
    pool.addrs.pop_back();
    std::vector<VirtAddr> in, out;
    for (VirtAddr va : pool.addrs) {
      if (ms.congruent(va, x)) {
        if (in.size() < a) in.push_back(va);
      } else if (out.size() < n - a) {
        out.push_back(va);
      }
      if (in.size() == a && out.size() == n - a) break;
    }
    if (in.size() < a || out.size() < n - a) throw ExperimentError("could not plant a candidate set");
    in.insert(in.end(), out.begin(), out.end());
    shuffle_in_place(in, rng);
    return in;
  }
  for (uint64_t attempt = 0; attempt < 1000; ++attempt) {
    AddressPool pool = build_pool(ms, n + 1, adv, derive_seed(seed, 1, attempt));
    shuffle_in_place(pool.addrs, rng);
    x = pool.addrs.back();
    pool.addrs.pop_back();
    if (count_congruent(ms, pool.addrs, x) >= a) return pool.addrs;
  }
  throw ExperimentError(fmt::format("no eviction set of size {} in 1000 draws", n));
}

}  // namespace

ScalingResult run_scaling_experiment(const ExperimentSpec& spec) {
  spec.validate();
  if (spec.n_values.size() < 3) throw ExperimentError("exponent fit needs at least 3 N values");
  if (spec.test != TestKind::kSpecific)
    throw ConfigError("the scaling experiment uses the specific-address test");
  const MachineConfig mc = spec.machine();
  const AdversaryModel adv = spec.adversary_model();
  ScalingResult res;
  std::vector<double> xs, group_y, base_y;
  for (auto alg : {ReductionAlgorithm::kBaseline, ReductionAlgorithm::kGroupTesting}) {
    for (uint64_t n : spec.n_values) {
      std::vector<ReductionOutcome> outs(spec.trials);
      parallel_for(spec.trials, spec.jobs, [&](size_t t) {
        const uint64_t seed = derive_seed(spec.seed, n, t);
        Machine ms(mc, derive_seed(seed, 0));
        VirtAddr x = 0;
        auto set = scaling_candidates(spec, ms, adv, n, x, seed);
        EvictionTester tester(ms, spec.test_config, derive_seed(seed, 3));
        outs[t] = alg == ReductionAlgorithm::kBaseline ? baseline_reduce(tester, set, x)
                                                       : group_test_reduce(tester, set, x);
      });
      ScalingRow row;
      row.n = n;
      row.algorithm = alg;
      row.trials = spec.trials;
      double acc = 0, tests = 0;
      for (const auto& o : outs) {
        acc += static_cast<double>(o.accesses_used);
        tests += static_cast<double>(o.tests_used);
        row.successes += o.verified_congruent;
      }
      row.mean_accesses = acc / spec.trials;
      row.mean_tests = tests / spec.trials;
      res.rows.push_back(row);
      (alg == ReductionAlgorithm::kBaseline ? base_y : group_y).push_back(row.mean_accesses);
      if (alg == ReductionAlgorithm::kBaseline) xs.push_back(static_cast<double>(n));
    }
  }
  res.baseline_exponent = fit_exponent(xs, base_y);
  res.group_exponent = fit_exponent(xs, group_y);
  return res;
}

ModelReport run_model_report(const ExperimentSpec& spec) {
  const CacheConfig cache = preset_machine(spec.preset).cache;
  ModelReport rep;
  const auto small = AdversaryModel::from_pages(cache, 12);
  const auto specific = EvictionModel::from_geometry(small, cache, EvictionMode::kSpecificAddress);
  const auto any = EvictionModel::from_geometry(small, cache, EvictionMode::kArbitraryAddress);
  std::vector<uint64_t> grid;
  for (uint64_t n = 100; n <= 4000; n += 100) grid.push_back(n);
  for (uint64_t n : {456, 732, 888, 984, 1500, 2124, 3420}) grid.push_back(n);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  for (uint64_t n : grid) rep.probability.push_back({n, specific.probability(n), any.probability(n)});

  struct Row {
    const char* name;
    unsigned page_bits;
    std::optional<unsigned> gamma;
  };
  const Row rows[] = {{"huge-page", kHugePageBits, std::nullopt},
                      {"4kb", 12, std::nullopt},
                      {"limit", 12, 0u}};
  for (const Row& r : rows) {
    const auto adv = r.gamma ? AdversaryModel::with_control(cache, r.page_bits, *r.gamma)
                             : AdversaryModel::from_pages(cache, r.page_bits);
    const auto model = EvictionModel::from_geometry(adv, cache, EvictionMode::kSpecificAddress);
    const int log2_p = static_cast<int>(std::lround(std::log2(model.collision_prob)));
    rep.optimal.push_back({r.name, log2_p,
                           optimal_initial_size(model, ReductionAlgorithm::kBaseline),
                           optimal_initial_size(model, ReductionAlgorithm::kGroupTesting)});
    for (int i = 0; i <= 80; ++i) {
      const uint64_t n = static_cast<uint64_t>(std::llround(cache.assoc * std::pow(10.0, i / 20.0)));
      rep.cost.push_back({log2_p, n, expected_search_cost(n, model)});
    }
  }
  return rep;
}

FindAllReport run_find_all(const ExperimentSpec& spec) {
  spec.validate();
  Machine ms(spec.machine(), derive_seed(spec.seed, 0));
  const AdversaryModel adv = spec.adversary_model();
  AddressPool pool = build_pool(ms, spec.n_values.front(), adv, derive_seed(spec.seed, 1));
  EvictionTester tester(ms, spec.test_config, derive_seed(spec.seed, 3));
  FindAllOptions opts;
  opts.seed = derive_seed(spec.seed, 2);
  FindAllReport rep;
  rep.pool_size = pool.addrs.size();
  rep.result = find_all_eviction_sets(tester, pool.addrs, opts, adv);
  const unsigned a = ms.cache_config().assoc;
  for (const auto& [cls, size] : class_sizes(ms, pool.addrs))
    if (size > a) ++rep.classes_with_eviction_set;
  std::map<std::pair<uint32_t, uint32_t>, bool> seen;
  for (const auto& s : rep.result.sets) {
    const auto loc = ms.location(s.front());
    const size_t members = count_congruent(ms, s, s.front());
    rep.locations.push_back(loc);
    rep.congruent_members.push_back(members);
    if (s.size() == a && members == a) {
      ++rep.verified_sets;
      seen[{loc.slice, loc.set_index}] = true;
    }
  }
  rep.distinct_classes_found = seen.size();
  return rep;
}

WelchResult welch_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw ExperimentError("Welch test needs 2+ samples per group");
  auto moments = [](const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::pair{m, s / static_cast<double>(v.size() - 1)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double se2 = va / na + vb / nb;
  WelchResult r;
  if (se2 == 0) {
    r.t = ma > mb ? INFINITY : (ma < mb ? -INFINITY : 0);
    r.dof = na + nb - 2;
    r.p_one_sided = ma > mb ? 0.0 : 1.0;
    return r;
  }
  r.t = (ma - mb) / std::sqrt(se2);
  r.dof = se2 * se2 /
          ((va / na) * (va / na) / (na - 1) + (vb / nb) * (vb / nb) / (nb - 1));
  boost::math::students_t dist(r.dof);
  r.p_one_sided = boost::math::cdf(boost::math::complement(dist, r.t));
  return r;
}

void write_rates_csv(std::ostream& os, const ExperimentSpec& spec,
                     const std::vector<RatePoint>& points) {
  os << header_block(spec, "rates") << kRateColumns << '\n';
  for (const auto& p : points) os << rate_row(p) << '\n';
}

void write_sweep_csv(std::ostream& os, const ExperimentSpec& spec,
                     const std::vector<SweepPoint>& points) {
  os << header_block(spec, "sweep") << "set_index,role," << kRateColumns << '\n';
  for (const auto& p : points)
    os << p.set_index << ',' << role_name(p.role) << ',' << rate_row(p.rates) << '\n';
}

void write_scaling_csv(std::ostream& os, const ExperimentSpec& spec, const ScalingResult& res) {
  os << header_block(spec, "scaling");
  os << fmt::format("# exponent baseline: {:.4f}\n# exponent group: {:.4f}\n", res.baseline_exponent,
                    res.group_exponent);
  os << "N,algorithm,trials,successes,mean_accesses,mean_tests\n";
  for (const auto& r : res.rows)
    os << fmt::format("{},{},{},{},{},{}\n", r.n, to_string(r.algorithm), r.trials, r.successes,
                      num(r.mean_accesses), num(r.mean_tests));
}

void write_model_csv(std::ostream& os, const ExperimentSpec& spec, const ModelReport& rep) {
  os << header_block(spec, "predict") << "table,series,N,value\n";
  for (const auto& p : rep.probability) {
    os << fmt::format("probability,binomial,{},{}\n", p.n, num(p.binomial));
    os << fmt::format("probability,multinomial,{},{}\n", p.n, num(p.multinomial));
  }
  for (const auto& c : rep.cost)
    os << fmt::format("cost,p=2^{},{},{}\n", c.log2_p, c.n, num(c.cost));
  for (const auto& r : rep.optimal) {
    os << fmt::format("optimal,{}/baseline,{},{}\n", r.adversary, r.baseline_n, r.log2_p);
    os << fmt::format("optimal,{}/group,{},{}\n", r.adversary, r.group_n, r.log2_p);
  }
}

void write_find_all_csv(std::ostream& os, const ExperimentSpec& spec, const FindAllReport& rep) {
  os << header_block(spec, "find-all");
  os << fmt::format("# pool_size: {}\n# classes_with_eviction_set: {}\n# sets_found: {}\n",
                    rep.pool_size, rep.classes_with_eviction_set, rep.result.sets.size());
  os << fmt::format("# verified_sets: {}\n# distinct_classes_found: {}\n", rep.verified_sets,
                    rep.distinct_classes_found);
  os << fmt::format("# accesses: {}\n# tests: {}\n# failed_reductions: {}\n",
                    rep.result.accesses_used, rep.result.tests_used,
                    rep.result.failed_reductions);
  os << "set,size,slice,set_index,congruent_members\n";
  for (size_t i = 0; i < rep.result.sets.size(); ++i)
    os << fmt::format("{},{},{},{},{}\n", i, rep.result.sets[i].size(), rep.locations[i].slice,
                      rep.locations[i].set_index, rep.congruent_members[i]);
}

std::string rates_json(const ExperimentSpec& spec, const std::vector<RatePoint>& points) {
  nlohmann::json j{{"spec", spec_json(spec)}, {"points", nlohmann::json::array()}};
  for (const auto& p : points) j["points"].push_back(rate_json(p));
  return j.dump(2);
}

std::string sweep_json(const ExperimentSpec& spec, const std::vector<SweepPoint>& points) {
  nlohmann::json j{{"spec", spec_json(spec)}, {"points", nlohmann::json::array()}};
  for (const auto& p : points) {
    auto row = rate_json(p.rates);
    row["set_index"] = p.set_index;
    row["role"] = role_name(p.role);
    j["points"].push_back(row);
  }
  return j.dump(2);
}

std::string scaling_json(const ExperimentSpec& spec, const ScalingResult& res) {
  nlohmann::json j{{"spec", spec_json(spec)},
                   {"exponent_baseline", res.baseline_exponent},
                   {"exponent_group", res.group_exponent},
                   {"rows", nlohmann::json::array()}};
  for (const auto& r : res.rows)
    j["rows"].push_back({{"N", r.n},
                         {"algorithm", to_string(r.algorithm)},
                         {"trials", r.trials},
                         {"successes", r.successes},
                         {"mean_accesses", r.mean_accesses},
                         {"mean_tests", r.mean_tests}});
  return j.dump(2);
}

std::string model_json(const ExperimentSpec& spec, const ModelReport& rep) {
  nlohmann::json j{{"spec", spec_json(spec)},
                   {"probability", nlohmann::json::array()},
                   {"cost", nlohmann::json::array()},
                   {"optimal", nlohmann::json::array()}};
  for (const auto& p : rep.probability)
    j["probability"].push_back({{"N", p.n}, {"binomial", p.binomial}, {"multinomial", p.multinomial}});
  for (const auto& c : rep.cost)
    j["cost"].push_back({{"log2_p", c.log2_p},
                         {"N", c.n},
                         {"cost", std::isinf(c.cost) ? nlohmann::json(nullptr) : nlohmann::json(c.cost)}});
  for (const auto& r : rep.optimal)
    j["optimal"].push_back({{"adversary", r.adversary},
                            {"log2_p", r.log2_p},
                            {"baseline", r.baseline_n},
                            {"group", r.group_n}});
  return j.dump(2);
}

}  // namespace evsim
