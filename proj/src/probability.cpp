#include "evsim/probability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace evsim {
namespace {

// log(exp(a) + exp(b)) without overflow.
double log_add(double a, double b) {
  if (a == -INFINITY) return b;
  if (b == -INFINITY) return a;
  double hi = std::max(a, b), lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

double log_binomial_pmf(uint64_t n, uint64_t k, double log_p, double log_q) {
  const double nn = static_cast<double>(n), kk = static_cast<double>(k);
  return std::lgamma(nn + 1) - std::lgamma(kk + 1) - std::lgamma(nn - kk + 1) + kk * log_p +
         (nn - kk) * log_q;
}

double log_poisson_pmf(uint64_t k, double lambda) {
  const double kk = static_cast<double>(k);
  return -lambda + kk * std::log(lambda) - std::lgamma(kk + 1);
}

constexpr double kTailCutoff = 40.0;  // stop once terms drop e^-40 below the sum

}  // namespace

double collision_probability(const AdversaryModel& adv, const CacheConfig& cfg) {
  if (adv.controlled_bits > cfg.set_bits) throw ConfigError("gamma must not exceed set_bits");
  return std::ldexp(1.0, static_cast<int>(adv.controlled_bits) - static_cast<int>(cfg.set_bits) -
                             static_cast<int>(cfg.slice_bits));
}

double prob_eviction_specific(uint64_t n, double p, unsigned assoc) {
  if (n < assoc) return 0.0;
  if (assoc == 0) return 1.0;
  if (p <= 0) return 0.0;
  if (p >= 1) return 1.0;
  const double log_p = std::log(p), log_q = std::log1p(-p);
  const double mean = static_cast<double>(n) * p;

  if (static_cast<double>(assoc) - 1 >= mean) {
    // Upper tail is the small side: sum it directly past the mode.
    double acc = -INFINITY;
    for (uint64_t k = assoc; k <= n; ++k) {
      double t = log_binomial_pmf(n, k, log_p, log_q);
      acc = log_add(acc, t);
      if (t < acc - kTailCutoff) break;
    }
    return std::min(1.0, std::exp(acc));
  }
  double lower = -INFINITY;
  for (uint64_t k = 0; k < assoc; ++k) lower = log_add(lower, log_binomial_pmf(n, k, log_p, log_q));
  return std::clamp(-std::expm1(lower), 0.0, 1.0);
}

double prob_eviction_any(uint64_t n, double bins, unsigned assoc) {
  if (n <= assoc) return 0.0;
  if (bins < 1) throw ConfigError("bins must be >= 1");
  const double lambda = static_cast<double>(n) / bins;
  // log P(Pois(lambda) <= a) for a single bin.
  double log_cdf;
  if (static_cast<double>(assoc) >= lambda) {
    double upper = -INFINITY;
    for (uint64_t k = assoc + 1;; ++k) {
      double t = log_poisson_pmf(k, lambda);
      upper = log_add(upper, t);
      if (t < upper - kTailCutoff) break;
    }
    log_cdf = std::log1p(-std::exp(upper));
  } else {
    double lower = -INFINITY;
    for (uint64_t k = 0; k <= assoc; ++k) lower = log_add(lower, log_poisson_pmf(k, lambda));
    log_cdf = lower;
  }
  return std::clamp(-std::expm1(bins * log_cdf), 0.0, 1.0);
}

EvictionModel EvictionModel::from_geometry(const AdversaryModel& adv, const CacheConfig& cfg,
                                           EvictionMode mode) {
  EvictionModel m;
  m.collision_prob = collision_probability(adv, cfg);
  m.assoc = cfg.assoc;
  m.bins = 1.0 / m.collision_prob;
  m.mode = mode;
  return m;
}

void EvictionModel::validate() const {
  if (!(collision_prob > 0 && collision_prob <= 1)) throw ConfigError("collision_prob out of (0,1]");
  if (assoc < 1) throw ConfigError("assoc must be >= 1");
  if (bins < 1) throw ConfigError("bins must be >= 1");
}

double EvictionModel::probability(uint64_t n) const {
  return mode == EvictionMode::kSpecificAddress ? prob_eviction_specific(n, collision_prob, assoc)
                                                : prob_eviction_any(n, bins, assoc);
}

double expected_search_cost(uint64_t n, const EvictionModel& model) {
  double p = model.probability(n);
  if (p <= 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(n) / p;
}

double reduction_cost(uint64_t n, unsigned assoc, ReductionAlgorithm alg) {
  const double nn = static_cast<double>(n);
  if (alg == ReductionAlgorithm::kBaseline) return nn * nn;
  return static_cast<double>(assoc) * (assoc + 1) * nn;
}

uint64_t optimal_initial_size(const EvictionModel& model, ReductionAlgorithm alg) {
  model.validate();
  const uint64_t lo_n = model.mode == EvictionMode::kSpecificAddress ? model.assoc : model.assoc + 1;
  const uint64_t hi_n = 1'000'000;
  auto cost = [&](uint64_t n) {
    return expected_search_cost(n, model) + reduction_cost(n, model.assoc, alg);
  };
  auto cost_at = [&](double log_n) {
    return cost(static_cast<uint64_t>(std::llround(std::exp(log_n))));
  };

  // Golden-section search on log n; the total cost is unimodal.
  const double phi = (std::sqrt(5.0) - 1) / 2;
  double a = std::log(static_cast<double>(lo_n)), b = std::log(static_cast<double>(hi_n));
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = cost_at(c), fd = cost_at(d);
  for (int it = 0; it < 200 && b - a > 1e-9; ++it) {
    if (fc <= fd) {
      b = d; d = c; fd = fc;
      c = b - phi * (b - a); fc = cost_at(c);
    } else {
      a = c; c = d; fc = fd;
      d = a + phi * (b - a); fd = cost_at(d);
    }
  }
  const uint64_t center = static_cast<uint64_t>(std::llround(std::exp((a + b) / 2)));

  // Rounding flattens the bottom of the curve; settle it with an integer scan.
  const uint64_t window = std::max<uint64_t>(64, center / 20);
  const uint64_t from = center > lo_n + window ? center - window : lo_n;
  const uint64_t to = std::min(hi_n, center + window);
  uint64_t best = center;
  double best_cost = cost(center);
  for (uint64_t n = from; n <= to; ++n) {
    double v = cost(n);
    if (v < best_cost) {
      best_cost = v;
      best = n;
    }
  }
  return best;
}

int64_t closed_form_group_accesses(int64_t n, int64_t assoc) {
  return assoc * assoc * n + assoc * n - assoc * assoc * assoc - assoc * assoc;
}

}  // namespace evsim
