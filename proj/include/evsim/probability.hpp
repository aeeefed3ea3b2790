#ifndef EVSIM_PROBABILITY_HPP_
#define EVSIM_PROBABILITY_HPP_

#include <cstdint>

#include "evsim/cache.hpp"
#include "evsim/memory.hpp"

namespace evsim {

enum class EvictionMode { kSpecificAddress, kArbitraryAddress };
enum class ReductionAlgorithm { kBaseline, kGroupTesting };

// Parameters of the random-candidate model: each candidate collides with
// the target independently with collision_prob; for arbitrary eviction the
// candidates fall uniformly into `bins` cache sets.
struct EvictionModel {
  double collision_prob = 1.0 / 128;
  unsigned assoc = 12;
  double bins = 128;
  EvictionMode mode = EvictionMode::kSpecificAddress;

  static EvictionModel from_geometry(const AdversaryModel& adv, const CacheConfig& cfg,
                                     EvictionMode mode);
  void validate() const;
  double probability(uint64_t n) const;
};

// 2^(gamma - c - s).
double collision_probability(const AdversaryModel& adv, const CacheConfig& cfg);

// P(X >= a) for X ~ Binomial(n, p).
double prob_eviction_specific(uint64_t n, double p, unsigned assoc);

// 1 - P(all bins hold <= a balls), independent-Poisson approximation.
double prob_eviction_any(uint64_t n, double bins, unsigned assoc);

// Expected accesses n / p(n) to find an eviction set by repeated sampling.
// Infinite when p(n) == 0.
double expected_search_cost(uint64_t n, const EvictionModel& model);

// Accesses charged to a reduction of n elements in the cost model.
double reduction_cost(uint64_t n, unsigned assoc, ReductionAlgorithm alg);

// argmin over n in [a, 10^6] of n / p(n) + reduction_cost(n).
uint64_t optimal_initial_size(const EvictionModel& model, ReductionAlgorithm alg);

// a^2 n + a n - a^3 - a^2: worst-case group-testing access count.
int64_t closed_form_group_accesses(int64_t n, int64_t assoc);

}  // namespace evsim

#endif  // EVSIM_PROBABILITY_HPP_
