#include "evsim/cache.hpp"

#include <algorithm>
#include <bit>
#include <string>

#include <fmt/format.h>

namespace evsim {

std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kLru: return "lru";
    case PolicyKind::kFifo: return "fifo";
    case PolicyKind::kTreePlru: return "plru";
    case PolicyKind::kBip: return "bip";
    case PolicyKind::kAdaptiveDueling: return "adaptive";
  }
  return "?";
}

PolicyKind parse_policy(std::string_view name) {
  if (name == "lru") return PolicyKind::kLru;
  if (name == "fifo") return PolicyKind::kFifo;
  if (name == "plru" || name == "tree-plru") return PolicyKind::kTreePlru;
  if (name == "bip") return PolicyKind::kBip;
  if (name == "adaptive" || name == "dueling") return PolicyKind::kAdaptiveDueling;
  throw ConfigError(fmt::format("unknown replacement policy '{}'", name));
}

void CacheConfig::validate() const {
  if (assoc < 1 || assoc > 255) throw ConfigError("assoc must be in [1, 255]");
  if (set_bits < 1) throw ConfigError("set_bits must be >= 1");
  if (line_bits < 1) throw ConfigError("line_bits must be >= 1");
  if (slice_bits > 16 || set_bits > 24) throw ConfigError("cache geometry too large");
  if (phys_bits > 62 || phys_bits < line_bits + set_bits)
    throw ConfigError("phys_bits must cover line and set-index bits and be <= 62");
  if (policy == PolicyKind::kTreePlru && (!std::has_single_bit(assoc) || assoc > 64))
    throw ConfigError("tree PLRU requires a power-of-two associativity <= 64");
  if (policy == PolicyKind::kAdaptiveDueling) {
    if (adaptive.leaders_per_policy < 1) throw ConfigError("leaders_per_policy must be >= 1");
    if (2ull * adaptive.leaders_per_policy > num_sets())
      throw ConfigError("2 * leaders_per_policy must not exceed the number of sets");
    if (adaptive.psel_bits < 1 || adaptive.psel_bits > 30)
      throw ConfigError("psel_bits must be in [1, 30]");
    if (adaptive.leader_mode == LeaderMode::kRandRuntime && adaptive.reselect_interval == 0)
      throw ConfigError("reselect_interval must be positive");
  }
  if (policy == PolicyKind::kBip || policy == PolicyKind::kAdaptiveDueling) {
    if (!(adaptive.bip_epsilon >= 0.0 && adaptive.bip_epsilon <= 1.0))
      throw ConfigError("bip_epsilon must be a probability");
  }
  if (slice_hash == SliceHashKind::kXorFold && xor_masks.size() != slice_bits)
    throw ConfigError("xor-fold slice hash needs exactly one mask per slice bit");
}

std::vector<uint64_t> intel_like_xor_masks(unsigned slice_bits) {
  switch (slice_bits) {
    case 0: return {};
    case 1: return {0x15f575440ull};
    case 2: return {0x6b5faa880ull, 0x35f575440ull};
    case 3: return {0x3cccc93100ull, 0x2eb5faa880ull, 0x1b5f575400ull};
    default: throw ConfigError("xor-fold masks are only known for up to 8 slices");
  }
}

SliceHash::SliceHash(const CacheConfig& cfg)
    : kind_(cfg.slice_hash),
      slice_bits_(cfg.slice_bits),
      line_bits_(cfg.line_bits),
      phys_mask_((uint64_t{1} << cfg.phys_bits) - 1),
      key_(mix64(cfg.hash_seed ^ 0x5ca1ab1e0ddba11ull)),
      masks_(cfg.xor_masks) {}

uint32_t SliceHash::operator()(uint64_t pa) const {
  if (slice_bits_ == 0) return 0;
  if (kind_ == SliceHashKind::kXorFold) {
    uint32_t slice = 0;
    for (unsigned j = 0; j < masks_.size(); ++j)
      slice |= static_cast<uint32_t>(std::popcount(pa & phys_mask_ & masks_[j]) & 1) << j;
    return slice;
  }
  uint64_t line = (pa & phys_mask_) >> line_bits_;
  return static_cast<uint32_t>(mix64(line ^ key_) >> (64 - slice_bits_));
}

CacheLocation derive_location(const CacheConfig& cfg, const SliceHash& hash, uint64_t pa) {
  uint64_t phys = pa & ((uint64_t{1} << cfg.phys_bits) - 1);
  CacheLocation loc;
  loc.set_index = static_cast<uint32_t>((phys >> cfg.line_bits) & (cfg.num_sets() - 1));
  loc.slice = hash(phys);
  loc.tag = phys >> (cfg.line_bits + cfg.set_bits);
  return loc;
}

CacheLocation derive_location(const CacheConfig& cfg, uint64_t pa) {
  return derive_location(cfg, SliceHash(cfg), pa);
}

bool congruent(const CacheConfig& cfg, const SliceHash& hash, uint64_t pa1, uint64_t pa2) {
  CacheLocation l1 = derive_location(cfg, hash, pa1);
  CacheLocation l2 = derive_location(cfg, hash, pa2);
  return l1.set_index == l2.set_index && l1.slice == l2.slice;
}

bool congruent(const CacheConfig& cfg, uint64_t pa1, uint64_t pa2) {
  return congruent(cfg, SliceHash(cfg), pa1, pa2);
}

// ---------------------------------------------------------------------------

Cache::Cache(const CacheConfig& cfg, uint64_t seed)
    : cfg_(cfg), hash_(cfg), seed_(seed), rng_(derive_seed(seed, 1)) {
  cfg_.validate();
  tags_.assign(cfg_.total_sets() * cfg_.assoc, 0);
  count_.assign(cfg_.total_sets(), 0);
  if (cfg_.policy == PolicyKind::kTreePlru) plru_.assign(cfg_.total_sets(), 0);
  if (cfg_.policy == PolicyKind::kAdaptiveDueling) {
    roles_.assign(cfg_.total_sets(), SetRole::kFollower);
    assign_leaders();
  }
}

std::vector<uint32_t> Cache::static_leaders(const CacheConfig& cfg, SetRole which) {
  const uint64_t sets = cfg.num_sets();
  const uint64_t n = cfg.adaptive.leaders_per_policy;
  const uint64_t spacing = sets / n;
  // One set past even spacing spreads the leaders over distinct residues
  // of any power-of-two page stride; fall back to exact spacing if that
  // layout would not fit.
  uint64_t stride = spacing + 1;
  if ((n - 1) * stride + spacing / 2 >= sets) stride = spacing;
  const uint64_t offset = which == SetRole::kBipLeader ? spacing / 2 : 0;
  std::vector<uint32_t> out;
  if (which == SetRole::kFollower) return out;
  for (uint64_t i = 0; i < n; ++i) out.push_back(static_cast<uint32_t>(i * stride + offset));
  return out;
}

void Cache::assign_leaders() {
  std::fill(roles_.begin(), roles_.end(), SetRole::kFollower);
  const uint64_t sets = cfg_.num_sets();
  if (cfg_.adaptive.leader_mode == LeaderMode::kStatic) {
    auto lru = static_leaders(cfg_, SetRole::kLruLeader);
    auto bip = static_leaders(cfg_, SetRole::kBipLeader);
    for (uint64_t slice = 0; slice < cfg_.num_slices(); ++slice) {
      for (uint32_t s : lru) roles_[(slice << cfg_.set_bits) | s] = SetRole::kLruLeader;
      for (uint32_t s : bip) roles_[(slice << cfg_.set_bits) | s] = SetRole::kBipLeader;
    }
    return;
  }
  // Fresh draw per slice: the first half of a random sample leads for LRU,
  // the second half for BIP.
  Rng draw(derive_seed(seed_, 2, reroll_count_++));
  std::vector<uint32_t> idx(sets);
  const uint64_t n = cfg_.adaptive.leaders_per_policy;
  for (uint64_t slice = 0; slice < cfg_.num_slices(); ++slice) {
    for (uint64_t i = 0; i < sets; ++i) idx[i] = static_cast<uint32_t>(i);
    for (uint64_t i = 0; i < 2 * n; ++i) {
      uint64_t j = i + uniform_below(draw, sets - i);
      std::swap(idx[i], idx[j]);
      roles_[(slice << cfg_.set_bits) | idx[i]] = i < n ? SetRole::kLruLeader : SetRole::kBipLeader;
    }
  }
}

SetRole Cache::role(uint32_t slice, uint32_t set_index) const {
  if (roles_.empty()) return SetRole::kFollower;
  return roles_[(uint64_t{slice} << cfg_.set_bits) | set_index];
}

bool Cache::followers_use_bip() const {
  return cfg_.policy == PolicyKind::kAdaptiveDueling &&
         psel_ >= (1u << (cfg_.adaptive.psel_bits - 1));
}

unsigned Cache::occupancy(uint32_t slice, uint32_t set_index) const {
  return count_[(uint64_t{slice} << cfg_.set_bits) | set_index];
}

std::vector<uint64_t> Cache::resident_tags(uint32_t slice, uint32_t set_index) const {
  uint64_t sid = (uint64_t{slice} << cfg_.set_bits) | set_index;
  const uint64_t* base = &tags_[sid * cfg_.assoc];
  return {base, base + count_[sid]};
}

bool Cache::contains(uint64_t pa) const {
  CacheLocation loc = locate(pa);
  uint64_t sid = set_id(loc);
  const uint64_t* base = &tags_[sid * cfg_.assoc];
  return std::find(base, base + count_[sid], loc.tag) != base + count_[sid];
}

void Cache::reset() {
  std::fill(count_.begin(), count_.end(), 0);
  std::fill(plru_.begin(), plru_.end(), 0);
  psel_ = 0;
  accesses_ = 0;
  if (cfg_.policy == PolicyKind::kAdaptiveDueling &&
      cfg_.adaptive.leader_mode == LeaderMode::kRandRuntime)
    assign_leaders();
}

bool Cache::insert_at_lru(uint64_t sid) {
  auto bip_insert = [&] { return uniform_unit(rng_) >= cfg_.adaptive.bip_epsilon; };
  switch (cfg_.policy) {
    case PolicyKind::kBip: return bip_insert();
    case PolicyKind::kAdaptiveDueling:
      switch (roles_[sid]) {
        case SetRole::kLruLeader: return false;
        case SetRole::kBipLeader: return bip_insert();
        case SetRole::kFollower: return followers_use_bip() && bip_insert();
      }
      return false;
    default: return false;
  }
}

CacheAccessResult Cache::access(uint64_t pa) {
  ++accesses_;
  if (cfg_.policy == PolicyKind::kAdaptiveDueling &&
      cfg_.adaptive.leader_mode == LeaderMode::kRandRuntime &&
      accesses_ % cfg_.adaptive.reselect_interval == 0)
    assign_leaders();

  CacheLocation loc = locate(pa);
  uint64_t sid = set_id(loc);
  CacheAccessResult r;
  switch (cfg_.policy) {
    case PolicyKind::kFifo: r = access_fifo(sid, loc.tag); break;
    case PolicyKind::kTreePlru: r = access_plru(sid, loc.tag); break;
    default: r = access_recency(sid, loc.tag); break;
  }

  if (!r.hit && cfg_.policy == PolicyKind::kAdaptiveDueling) {
    const unsigned max = (1u << cfg_.adaptive.psel_bits) - 1;
    if (roles_[sid] == SetRole::kLruLeader && psel_ < max) ++psel_;
    if (roles_[sid] == SetRole::kBipLeader && psel_ > 0) --psel_;
  }
  return r;
}

// LRU, BIP and dueling share one recency stack: slot 0 is MRU.
CacheAccessResult Cache::access_recency(uint64_t sid, uint64_t tag) {
  uint64_t* base = &tags_[sid * cfg_.assoc];
  unsigned n = count_[sid];
  for (unsigned i = 0; i < n; ++i) {
    if (base[i] == tag) {
      std::rotate(base, base + i, base + i + 1);
      return {true, std::nullopt};
    }
  }
  CacheAccessResult r;
  if (n == cfg_.assoc) {
    r.evicted_tag = base[n - 1];
    --n;
  }
  if (insert_at_lru(sid)) {
    base[n] = tag;
  } else {
    std::copy_backward(base, base + n, base + n + 1);
    base[0] = tag;
  }
  count_[sid] = static_cast<uint8_t>(n + 1);
  return r;
}

CacheAccessResult Cache::access_fifo(uint64_t sid, uint64_t tag) {
  uint64_t* base = &tags_[sid * cfg_.assoc];
  unsigned n = count_[sid];
  if (std::find(base, base + n, tag) != base + n) return {true, std::nullopt};
  CacheAccessResult r;
  if (n == cfg_.assoc) {
    r.evicted_tag = base[n - 1];
    --n;
  }
  std::copy_backward(base, base + n, base + n + 1);
  base[0] = tag;
  count_[sid] = static_cast<uint8_t>(n + 1);
  return r;
}

// Tree bits are heap ordered (node k has children 2k+1, 2k+2); a set bit
// points the victim search to the right subtree.
void Cache::plru_touch(uint64_t sid, unsigned way) {
  uint64_t& bits = plru_[sid];
  unsigned node = 0;
  for (unsigned span = cfg_.assoc; span > 1; span /= 2) {
    bool right = (way % span) >= span / 2;
    if (right) bits &= ~(uint64_t{1} << node);
    else bits |= uint64_t{1} << node;
    node = 2 * node + (right ? 2 : 1);
  }
}

unsigned Cache::plru_victim(uint64_t sid) const {
  uint64_t bits = plru_[sid];
  unsigned node = 0, way = 0;
  for (unsigned span = cfg_.assoc; span > 1; span /= 2) {
    bool right = (bits >> node) & 1;
    if (right) way += span / 2;
    node = 2 * node + (right ? 2 : 1);
  }
  return way;
}

CacheAccessResult Cache::access_plru(uint64_t sid, uint64_t tag) {
  uint64_t* base = &tags_[sid * cfg_.assoc];
  unsigned n = count_[sid];
  for (unsigned i = 0; i < n; ++i) {
    if (base[i] == tag) {
      plru_touch(sid, i);
      return {true, std::nullopt};
    }
  }
  CacheAccessResult r;
  unsigned way;
  if (n < cfg_.assoc) {
    way = n;
    count_[sid] = static_cast<uint8_t>(n + 1);
  } else {
    way = plru_victim(sid);
    r.evicted_tag = base[way];
  }
  base[way] = tag;
  plru_touch(sid, way);
  return r;
}

}  // namespace evsim
