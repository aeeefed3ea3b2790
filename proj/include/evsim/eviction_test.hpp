#ifndef EVSIM_EVICTION_TEST_HPP_
#define EVSIM_EVICTION_TEST_HPP_

#include <cstdint>
#include <span>

#include "evsim/memory.hpp"
#include "evsim/rng.hpp"

namespace evsim {

enum class ThresholdMode { kMissCount, kLatency };

struct TestConfig {
  unsigned repetitions = 10;
  ThresholdMode mode = ThresholdMode::kMissCount;
  // Per-access latency threshold; negative means midway between hit and miss.
  double latency_threshold = -1.0;
  // Test 3 is positive when more than this many elements miss; 0 means assoc.
  unsigned required_misses = 0;
  // Probability that a test answer is flipped after voting. Models
  // measurement errors the simulator does not otherwise produce.
  double flip_probability = 0.0;

  void validate() const;
};

// Runs the three timing tests against one machine. Every test is one
// invocation in the machine counters; its memory accesses are counted by
// the machine itself.
class EvictionTester {
 public:
  EvictionTester(Machine& ms, const TestConfig& tc, uint64_t noise_seed = 0);

  // Test 1: access x, access S, probe x. Positive when x was evicted.
  bool specific(std::span<const VirtAddr> set, VirtAddr x);
  // Test 2: warm S, then time a second pass over all of S.
  bool any_aggregate(std::span<const VirtAddr> set);
  // Test 3: warm S, then count elements that miss on the second pass.
  bool any_robust(std::span<const VirtAddr> set);

  Machine& machine() { return ms_; }
  const TestConfig& config() const { return tc_; }
  unsigned assoc() const { return ms_.cache_config().assoc; }
  double access_threshold() const;
  // Threshold on the summed second-pass latency used by Test 2.
  double aggregate_threshold(size_t set_size) const;

 private:
  bool slow(const AccessOutcome& o) const;
  bool vote(unsigned positives) const { return 2 * positives > tc_.repetitions; }
  bool maybe_flip(bool answer);

  Machine& ms_;
  TestConfig tc_;
  Rng noise_;
};

}  // namespace evsim

#endif  // EVSIM_EVICTION_TEST_HPP_
