#ifndef EVSIM_MEMORY_HPP_
#define EVSIM_MEMORY_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "evsim/cache.hpp"
#include "evsim/rng.hpp"

namespace evsim {

using VirtAddr = uint64_t;
using PhysAddr = uint64_t;

// Which page-offset bits the attacker controls. controlled_bits is the
// number of set-index bits fixed through the page offset; fixed_offset
// holds the value of bits [0, line_bits + controlled_bits).
struct AdversaryModel {
  unsigned page_bits = 12;
  unsigned controlled_bits = 6;
  uint64_t fixed_offset = 0;

  // gamma = min(page_bits - line_bits, set_bits).
  static AdversaryModel from_pages(const CacheConfig& cfg, unsigned page_bits);
  // Attacker that deliberately uses fewer bits than its pages allow.
  static AdversaryModel with_control(const CacheConfig& cfg, unsigned page_bits, unsigned gamma);

  void validate(const CacheConfig& cfg) const;
  uint64_t stride(const CacheConfig& cfg) const {
    return uint64_t{1} << (cfg.line_bits + controlled_bits);
  }
};

// Restricts the high PFN bits, as when huge pages come from a fixed zone.
struct ZoneMask {
  uint64_t mask = 0;
  uint64_t value = 0;
};

class TranslationMap {
 public:
  TranslationMap(unsigned page_bits, unsigned phys_bits, unsigned virt_bits,
                 std::optional<ZoneMask> zone, uint64_t seed);

  PhysAddr translate(VirtAddr va);
  unsigned page_bits() const { return page_bits_; }
  size_t mapped_pages() const { return map_.size(); }

 private:
  unsigned page_bits_;
  unsigned phys_bits_;
  uint64_t virt_mask_;
  std::optional<ZoneMask> zone_;
  uint64_t frame_capacity_;
  Rng rng_;
  std::unordered_map<uint64_t, uint64_t> map_;
  std::unordered_set<uint64_t> used_;
};

struct TlbConfig {
  bool enabled = false;
  unsigned entries = 1536;
  unsigned ways = 4;
};

// Single-level set-associative TLB with LRU replacement.
class Tlb {
 public:
  explicit Tlb(const TlbConfig& cfg);
  // True on hit. A miss installs the translation.
  bool lookup(uint64_t vpn);
  bool holds(uint64_t vpn) const;
  void flush();
  size_t size() const;
  const TlbConfig& config() const { return cfg_; }

 private:
  TlbConfig cfg_;
  unsigned sets_;
  std::vector<uint64_t> vpns_;
  std::vector<uint8_t> count_;
};

struct LatencyModel {
  double hit = 1.0;
  double miss = 30.0;
  double tlb_penalty = 20.0;
  double jitter_sigma = 0.0;
};

struct MachineConfig {
  CacheConfig cache;
  unsigned page_bits = 12;
  unsigned virt_bits = 48;
  TlbConfig tlb;
  LatencyModel latency;
  std::optional<ZoneMask> zone;

  void validate() const;
};

MachineConfig skylake_like();
MachineConfig haswell_like();

struct Counters {
  uint64_t mem_accesses = 0;
  uint64_t tlb_misses = 0;
  uint64_t page_walk_accesses = 0;
  uint64_t test_invocations = 0;
};

struct AccessOutcome {
  bool llc_hit = false;
  bool tlb_hit = true;
  double latency = 0.0;
};

inline constexpr unsigned kPageWalkLevels = 4;

// Ground-truth machine: cache, page table, TLB and counters. Single owner;
// independent instances share nothing.
class Machine {
 public:
  Machine(const MachineConfig& cfg, uint64_t seed);

  AccessOutcome access(VirtAddr va);
  PhysAddr translate(VirtAddr va) { return tmap_.translate(va); }
  void reset();

  // Oracle queries. None of these touch cache or TLB state.
  bool congruent(VirtAddr a, VirtAddr b);
  CacheLocation location(VirtAddr va);
  bool is_cached(VirtAddr va);

  const MachineConfig& config() const { return cfg_; }
  const CacheConfig& cache_config() const { return cfg_.cache; }
  const Counters& counters() const { return counters_; }
  Counters& counters() { return counters_; }
  const Cache& cache() const { return cache_; }
  const Tlb& tlb() const { return tlb_; }

 private:
  PhysAddr page_table_line(unsigned level, uint64_t vpn) const;

  MachineConfig cfg_;
  Cache cache_;
  TranslationMap tmap_;
  Tlb tlb_;
  uint64_t pt_key_;
  Rng jitter_rng_;
  Counters counters_;
};

// Candidate addresses that agree on the controlled bits.
struct AddressPool {
  std::vector<VirtAddr> addrs;
  AdversaryModel adversary;
  uint64_t stride = 0;
  uint64_t id = 0;
};

struct CandidateSet {
  std::vector<VirtAddr> addrs;
  uint64_t pool_id = 0;
  uint64_t stride = 0;

  size_t size() const { return addrs.size(); }
};

// Lays `count` addresses out at stride 2^(gamma+line_bits) from a random
// base, so every member carries adversary.fixed_offset in its low bits.
AddressPool build_pool(const Machine& ms, size_t count, const AdversaryModel& adversary,
                       uint64_t seed);

// Uniform sample without replacement, in random order.
CandidateSet sample_candidate_set(const AddressPool& pool, size_t n, uint64_t seed);
CandidateSet sample_candidate_set(std::span<const VirtAddr> pool, size_t n, uint64_t seed,
                                  uint64_t pool_id = 0, uint64_t stride = 0);

}  // namespace evsim

#endif  // EVSIM_MEMORY_HPP_
