#ifndef EVSIM_REDUCTION_HPP_
#define EVSIM_REDUCTION_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "evsim/eviction_test.hpp"
#include "evsim/memory.hpp"
#include "evsim/probability.hpp"

namespace evsim {

enum class FailureKind { kNone, kNotEvictionSet, kTestInconsistency, kBudgetExhausted };

std::string_view to_string(FailureKind kind);

struct ReductionOutcome {
  bool success = false;
  std::vector<VirtAddr> result;
  uint64_t accesses_used = 0;
  uint64_t tests_used = 0;
  uint64_t backtrack_steps = 0;
  uint64_t attempts = 1;
  // Set by the ground-truth oracle, never by the algorithm itself.
  bool verified_congruent = false;
  FailureKind failure = FailureKind::kNone;
  std::string diagnostics;
};

// Partition into k contiguous blocks whose sizes differ by at most one;
// the first n % k blocks get the extra element.
template <typename T>
std::vector<std::vector<T>> split(std::span<const T> items, size_t k) {
  std::vector<std::vector<T>> blocks(k);
  const size_t n = items.size(), base = n / k, extra = n % k;
  size_t pos = 0;
  for (size_t i = 0; i < k; ++i) {
    size_t len = base + (i < extra ? 1 : 0);
    blocks[i].assign(items.begin() + pos, items.begin() + pos + len);
    pos += len;
  }
  return blocks;
}

// Quadratic baseline: drop one candidate at a time, keep those whose
// removal breaks eviction.
ReductionOutcome baseline_reduce(EvictionTester& tester, std::span<const VirtAddr> set, VirtAddr x);

// Linear reduction by threshold group testing over a+1 blocks.
ReductionOutcome group_test_reduce(EvictionTester& tester, std::span<const VirtAddr> set,
                                   VirtAddr x);

// Same algorithms driven by the robust arbitrary-address test; the target
// size is a+1 and the blocks are split a+2 ways.
ReductionOutcome reduce_any(EvictionTester& tester, std::span<const VirtAddr> set,
                            ReductionAlgorithm algorithm);

struct Backtracking {
  // Discarded levels kept for backtracking; 0 keeps all of them.
  unsigned depth = 0;
  uint64_t max_steps = 1000;
};

struct RepeatUntilSuccess {
  // Fresh candidates are drawn from here (x must not be a member).
  std::span<const VirtAddr> pool;
  size_t set_size = 0;
  unsigned max_attempts = 10;
  uint64_t seed = 0;
};

using RecoveryStrategy = std::variant<Backtracking, RepeatUntilSuccess>;

ReductionOutcome reduce_with_recovery(EvictionTester& tester, std::span<const VirtAddr> set,
                                      VirtAddr x, const RecoveryStrategy& strategy);

struct FindAllOptions {
  // Size of the subset reduced per round; 0 picks the model optimum.
  size_t subset_size = 0;
  unsigned max_failures = 16;
  uint64_t seed = 0;
};

struct FindAllResult {
  // One minimal eviction set (a addresses) per discovered class.
  std::vector<std::vector<VirtAddr>> sets;
  uint64_t accesses_used = 0;
  uint64_t tests_used = 0;
  unsigned failed_reductions = 0;
};

// Reduce, sweep the pool with a membership test built from the minimal
// set, strip the class, repeat until the rest is no eviction set.
FindAllResult find_all_eviction_sets(EvictionTester& tester, std::span<const VirtAddr> pool,
                                     const FindAllOptions& opts, const AdversaryModel& adversary);

// Oracle checks.
bool verify_specific(Machine& ms, std::span<const VirtAddr> result, VirtAddr x);
bool verify_any(Machine& ms, std::span<const VirtAddr> result);
// Number of elements of `set` congruent with x.
size_t count_congruent(Machine& ms, std::span<const VirtAddr> set, VirtAddr x);

}  // namespace evsim

#endif  // EVSIM_REDUCTION_HPP_
