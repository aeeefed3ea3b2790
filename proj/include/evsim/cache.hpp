#ifndef EVSIM_CACHE_HPP_
#define EVSIM_CACHE_HPP_

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "evsim/rng.hpp"

namespace evsim {

// Raised for any invalid geometry, policy or experiment parameter.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PolicyKind { kLru, kFifo, kTreePlru, kBip, kAdaptiveDueling };

enum class LeaderMode { kStatic, kRandRuntime };

enum class SliceHashKind { kRandom, kXorFold };

std::string_view to_string(PolicyKind kind);
PolicyKind parse_policy(std::string_view name);

// Set dueling between LRU and BIP. The hardware mechanism this stands in
// for is undocumented; LRU/BIP is the classic DIP pairing.
struct AdaptiveParams {
  LeaderMode leader_mode = LeaderMode::kStatic;
  unsigned leaders_per_policy = 16;
  unsigned psel_bits = 10;
  uint64_t reselect_interval = 1'000'000;
  double bip_epsilon = 1.0 / 32;
};

struct CacheConfig {
  unsigned assoc = 12;
  unsigned set_bits = 10;
  unsigned slice_bits = 3;
  unsigned line_bits = 6;
  unsigned phys_bits = 34;
  PolicyKind policy = PolicyKind::kLru;
  AdaptiveParams adaptive;
  SliceHashKind slice_hash = SliceHashKind::kRandom;
  // One mask per slice bit; slice bit j is the parity of (pa & masks[j]).
  std::vector<uint64_t> xor_masks;
  uint64_t hash_seed = 0;

  void validate() const;

  uint64_t num_sets() const { return uint64_t{1} << set_bits; }
  uint64_t num_slices() const { return uint64_t{1} << slice_bits; }
  uint64_t total_sets() const { return num_sets() * num_slices(); }
  uint64_t total_lines() const { return total_sets() * assoc; }
  uint64_t total_bytes() const { return total_lines() << line_bits; }
};

// Published complex-addressing masks for 2, 4 and 8 slices.
std::vector<uint64_t> intel_like_xor_masks(unsigned slice_bits);

struct CacheLocation {
  uint32_t slice = 0;
  uint32_t set_index = 0;
  uint64_t tag = 0;

  bool operator==(const CacheLocation&) const = default;
};

// Maps the line address bits [line_bits, phys_bits) to a slice.
class SliceHash {
 public:
  explicit SliceHash(const CacheConfig& cfg);
  uint32_t operator()(uint64_t pa) const;

 private:
  SliceHashKind kind_;
  unsigned slice_bits_;
  unsigned line_bits_;
  uint64_t phys_mask_;
  uint64_t key_;
  std::vector<uint64_t> masks_;
};

CacheLocation derive_location(const CacheConfig& cfg, const SliceHash& hash, uint64_t pa);
CacheLocation derive_location(const CacheConfig& cfg, uint64_t pa);

// Ground truth: same set index and same slice.
bool congruent(const CacheConfig& cfg, const SliceHash& hash, uint64_t pa1, uint64_t pa2);
bool congruent(const CacheConfig& cfg, uint64_t pa1, uint64_t pa2);

struct CacheAccessResult {
  bool hit = false;
  // Reported for instrumentation only. Simulated attackers never look at it.
  std::optional<uint64_t> evicted_tag;
};

enum class SetRole : uint8_t { kFollower, kLruLeader, kBipLeader };

// The whole sliced LLC: one replacement state machine per (slice, set).
class Cache {
 public:
  Cache(const CacheConfig& cfg, uint64_t seed);

  CacheAccessResult access(uint64_t pa);
  bool contains(uint64_t pa) const;
  void reset();

  CacheLocation locate(uint64_t pa) const { return derive_location(cfg_, hash_, pa); }
  const CacheConfig& config() const { return cfg_; }
  const SliceHash& slice_hash() const { return hash_; }

  unsigned occupancy(uint32_t slice, uint32_t set_index) const;
  // Resident tags of one set, in policy order (MRU first for recency
  // policies, newest first for FIFO, way order for tree PLRU).
  std::vector<uint64_t> resident_tags(uint32_t slice, uint32_t set_index) const;

  SetRole role(uint32_t slice, uint32_t set_index) const;
  unsigned psel() const { return psel_; }
  bool followers_use_bip() const;
  uint64_t accesses() const { return accesses_; }

  // Leader layout for the static mode, identical in every slice.
  static std::vector<uint32_t> static_leaders(const CacheConfig& cfg, SetRole which);

 private:
  uint64_t set_id(const CacheLocation& loc) const {
    return (uint64_t{loc.slice} << cfg_.set_bits) | loc.set_index;
  }
  bool insert_at_lru(uint64_t sid);
  void assign_leaders();

  CacheAccessResult access_recency(uint64_t sid, uint64_t tag);
  CacheAccessResult access_fifo(uint64_t sid, uint64_t tag);
  CacheAccessResult access_plru(uint64_t sid, uint64_t tag);
  void plru_touch(uint64_t sid, unsigned way);
  unsigned plru_victim(uint64_t sid) const;

  CacheConfig cfg_;
  SliceHash hash_;
  uint64_t seed_;
  Rng rng_;
  uint64_t reroll_count_ = 0;

  std::vector<uint64_t> tags_;     // total_sets * assoc
  std::vector<uint8_t> count_;     // valid lines per set
  std::vector<uint64_t> plru_;     // tree bits, one word per set
  std::vector<SetRole> roles_;     // per set, adaptive policy only
  unsigned psel_ = 0;
  uint64_t accesses_ = 0;
};

}  // namespace evsim

#endif  // EVSIM_CACHE_HPP_
