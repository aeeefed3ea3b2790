#include "evsim/reduction.hpp"

#include <algorithm>
#include <functional>
#include <unordered_set>

#include <fmt/format.h>

namespace evsim {
namespace {

using SetTest = std::function<bool(std::span<const VirtAddr>)>;

// Snapshot of the machine counters so every outcome reports its own cost,
// failed attempts included.
class CostMeter {
 public:
  explicit CostMeter(const Machine& ms)
      : ms_(ms), accesses_(ms.counters().mem_accesses), tests_(ms.counters().test_invocations) {}
  void fill(ReductionOutcome& out) const {
    out.accesses_used = ms_.counters().mem_accesses - accesses_;
    out.tests_used = ms_.counters().test_invocations - tests_;
  }

 private:
  const Machine& ms_;
  uint64_t accesses_, tests_;
};

// S with block [begin, end) removed.
void complement(std::span<const VirtAddr> s, size_t begin, size_t end, std::vector<VirtAddr>& out) {
  out.clear();
  out.insert(out.end(), s.begin(), s.begin() + begin);
  out.insert(out.end(), s.begin() + end, s.end());
}

// Block boundaries of split(s, k) without materializing the blocks.
std::pair<size_t, size_t> block_range(size_t n, size_t k, size_t i) {
  const size_t base = n / k, extra = n % k;
  size_t begin = i * base + std::min(i, extra);
  return {begin, begin + base + (i < extra ? 1 : 0)};
}

ReductionOutcome baseline_core(std::span<const VirtAddr> set, size_t target, const SetTest& test) {
  ReductionOutcome out;
  std::vector<VirtAddr> kept;
  std::vector<VirtAddr> probe;
  size_t head = 0;
  while (kept.size() < target) {
    if (head == set.size()) {
      out.failure = FailureKind::kTestInconsistency;
      out.diagnostics = fmt::format("candidates exhausted with {} of {} elements", kept.size(),
                                    target);
      return out;
    }
    probe.assign(kept.begin(), kept.end());
    probe.insert(probe.end(), set.begin() + head + 1, set.end());
    if (!test(probe)) kept.push_back(set[head]);
    ++head;
  }
  out.success = true;
  out.result = std::move(kept);
  return out;
}

ReductionOutcome group_core(std::span<const VirtAddr> set, size_t target, const SetTest& test) {
  ReductionOutcome out;
  std::vector<VirtAddr> s(set.begin(), set.end());
  std::vector<VirtAddr> rest;
  const size_t k = target + 1;
  while (s.size() > target) {
    bool found = false;
    for (size_t i = 0; i < k; ++i) {
      auto [b, e] = block_range(s.size(), k, i);
      complement(s, b, e, rest);
      if (test(rest)) {
        s.swap(rest);
        found = true;
        break;
      }
    }
    if (!found) {
      out.failure = FailureKind::kTestInconsistency;
      out.diagnostics = fmt::format("no removable block at size {}", s.size());
      return out;
    }
  }
  out.success = true;
  out.result = std::move(s);
  return out;
}

struct Level {
  std::vector<VirtAddr> before;
  size_t next_block;
};

ReductionOutcome backtracking_core(std::span<const VirtAddr> set, size_t target,
                                   const SetTest& test, const Backtracking& opts) {
  ReductionOutcome out;
  std::vector<VirtAddr> s(set.begin(), set.end());
  std::vector<VirtAddr> rest;
  std::vector<Level> stack;
  const size_t k = target + 1;
  size_t start = 0;
  while (s.size() > target) {
    bool found = false;
    for (size_t i = start; i < k; ++i) {
      auto [b, e] = block_range(s.size(), k, i);
      complement(s, b, e, rest);
      if (test(rest)) {
        stack.push_back(Level{s, i + 1});
        if (opts.depth > 0 && stack.size() > opts.depth) stack.erase(stack.begin());
        s.swap(rest);
        found = true;
        break;
      }
    }
    start = 0;
    if (found) continue;
    if (stack.empty()) {
      out.failure = FailureKind::kTestInconsistency;
      out.diagnostics = fmt::format("no removable block at size {} and nothing to backtrack to",
                                    s.size());
      return out;
    }
    if (out.backtrack_steps == opts.max_steps) {
      out.failure = FailureKind::kBudgetExhausted;
      out.diagnostics = fmt::format("backtracking budget of {} steps exhausted at size {}",
                                    opts.max_steps, s.size());
      return out;
    }
    // Restore the most recently discarded block and resume at the parent
    // with the blocks not yet tried there.
    ++out.backtrack_steps;
    s = std::move(stack.back().before);
    start = stack.back().next_block;
    stack.pop_back();
  }
  out.success = true;
  out.result = std::move(s);
  return out;
}

}  // namespace

std::string_view to_string(FailureKind kind) {
  switch (kind) {
    case FailureKind::kNone: return "none";
    case FailureKind::kNotEvictionSet: return "not-eviction-set";
    case FailureKind::kTestInconsistency: return "test-inconsistency";
    case FailureKind::kBudgetExhausted: return "budget-exhausted";
  }
  return "?";
}

size_t count_congruent(Machine& ms, std::span<const VirtAddr> set, VirtAddr x) {
  return static_cast<size_t>(
      std::count_if(set.begin(), set.end(), [&](VirtAddr y) { return ms.congruent(x, y); }));
}

bool verify_specific(Machine& ms, std::span<const VirtAddr> result, VirtAddr x) {
  return result.size() == ms.cache_config().assoc && count_congruent(ms, result, x) == result.size();
}

bool verify_any(Machine& ms, std::span<const VirtAddr> result) {
  if (result.size() != ms.cache_config().assoc + 1) return false;
  return count_congruent(ms, result, result.front()) == result.size();
}

ReductionOutcome baseline_reduce(EvictionTester& tester, std::span<const VirtAddr> set,
                                 VirtAddr x) {
  CostMeter meter(tester.machine());
  auto out = baseline_core(set, tester.assoc(),
                           [&](std::span<const VirtAddr> s) { return tester.specific(s, x); });
  meter.fill(out);
  out.verified_congruent = out.success && verify_specific(tester.machine(), out.result, x);
  return out;
}

ReductionOutcome group_test_reduce(EvictionTester& tester, std::span<const VirtAddr> set,
                                   VirtAddr x) {
  CostMeter meter(tester.machine());
  auto out = group_core(set, tester.assoc(),
                        [&](std::span<const VirtAddr> s) { return tester.specific(s, x); });
  meter.fill(out);
  out.verified_congruent = out.success && verify_specific(tester.machine(), out.result, x);
  return out;
}

ReductionOutcome reduce_any(EvictionTester& tester, std::span<const VirtAddr> set,
                            ReductionAlgorithm algorithm) {
  CostMeter meter(tester.machine());
  const size_t target = tester.assoc() + 1;
  SetTest test = [&](std::span<const VirtAddr> s) { return tester.any_robust(s); };
  auto out = algorithm == ReductionAlgorithm::kBaseline ? baseline_core(set, target, test)
                                                        : group_core(set, target, test);
  meter.fill(out);
  out.verified_congruent = out.success && verify_any(tester.machine(), out.result);
  return out;
}

ReductionOutcome reduce_with_recovery(EvictionTester& tester, std::span<const VirtAddr> set,
                                      VirtAddr x, const RecoveryStrategy& strategy) {
  CostMeter meter(tester.machine());
  SetTest test = [&](std::span<const VirtAddr> s) { return tester.specific(s, x); };
  ReductionOutcome out;

  if (const auto* bt = std::get_if<Backtracking>(&strategy)) {
    out = backtracking_core(set, tester.assoc(), test, *bt);
  } else {
    const auto& rus = std::get<RepeatUntilSuccess>(strategy);
    if (rus.max_attempts == 0) throw ConfigError("max_attempts must be >= 1");
    std::vector<VirtAddr> current(set.begin(), set.end());
    uint64_t attempts = 0;
    while (true) {
      ++attempts;
      out = group_core(current, tester.assoc(), test);
      if (out.success) break;
      if (attempts == rus.max_attempts) {
        out.failure = FailureKind::kBudgetExhausted;
        out.diagnostics = fmt::format("no success in {} attempts", attempts);
        break;
      }
      const size_t n = rus.set_size ? rus.set_size : set.size();
      current = sample_candidate_set(rus.pool, std::min(n, rus.pool.size()),
                                     derive_seed(rus.seed, attempts))
                    .addrs;
    }
    out.attempts = attempts;
  }
  meter.fill(out);
  out.verified_congruent = out.success && verify_specific(tester.machine(), out.result, x);
  return out;
}

FindAllResult find_all_eviction_sets(EvictionTester& tester, std::span<const VirtAddr> pool,
                                     const FindAllOptions& opts, const AdversaryModel& adversary) {
  Machine& ms = tester.machine();
  const uint64_t accesses0 = ms.counters().mem_accesses;
  const uint64_t tests0 = ms.counters().test_invocations;
  const size_t a = tester.assoc();

  size_t subset = opts.subset_size;
  if (subset == 0) {
    auto model = EvictionModel::from_geometry(adversary, ms.cache_config(),
                                              EvictionMode::kArbitraryAddress);
    subset = optimal_initial_size(model, ReductionAlgorithm::kGroupTesting);
  }

  FindAllResult res;
  std::vector<VirtAddr> remaining(pool.begin(), pool.end());
  Rng rng(opts.seed);
  shuffle_in_place(remaining, rng);
  std::vector<VirtAddr> probe;

  while (remaining.size() > a) {
    // Grow the subset until it tests as an eviction set.
    size_t n = std::min(subset, remaining.size());
    bool evicting = false;
    while (true) {
      if (tester.any_robust(std::span(remaining).first(n))) {
        evicting = true;
        break;
      }
      if (n == remaining.size()) break;
      n = std::min(2 * n, remaining.size());
    }
    if (!evicting) break;

    auto red = reduce_any(tester, std::span(remaining).first(n), ReductionAlgorithm::kGroupTesting);
    if (!red.success) {
      if (++res.failed_reductions > opts.max_failures) break;
      shuffle_in_place(remaining, rng);
      continue;
    }

    // result = {x, e_1..e_a}; the test (e_2..e_a) + y evicts x iff y ~ x.
    const VirtAddr x = red.result.front();
    std::vector<VirtAddr> minimal(red.result.begin() + 1, red.result.end());
    std::unordered_set<VirtAddr> strip(red.result.begin(), red.result.end());
    for (VirtAddr y : remaining) {
      if (strip.count(y)) continue;
      probe.assign(minimal.begin() + 1, minimal.end());
      probe.push_back(y);
      if (tester.specific(probe, x)) strip.insert(y);
    }
    std::erase_if(remaining, [&](VirtAddr y) { return strip.count(y) > 0; });
    res.sets.push_back(std::move(minimal));
  }
  res.accesses_used = ms.counters().mem_accesses - accesses0;
  res.tests_used = ms.counters().test_invocations - tests0;
  return res;
}

}  // namespace evsim
