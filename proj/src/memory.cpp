#include "evsim/memory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

namespace evsim {

AdversaryModel AdversaryModel::from_pages(const CacheConfig& cfg, unsigned page_bits) {
  unsigned usable = page_bits > cfg.line_bits ? page_bits - cfg.line_bits : 0;
  return with_control(cfg, page_bits, std::min(usable, cfg.set_bits));
}

AdversaryModel AdversaryModel::with_control(const CacheConfig& cfg, unsigned page_bits,
                                            unsigned gamma) {
  AdversaryModel adv;
  adv.page_bits = page_bits;
  adv.controlled_bits = gamma;
  adv.fixed_offset = 0;
  adv.validate(cfg);
  return adv;
}

void AdversaryModel::validate(const CacheConfig& cfg) const {
  if (controlled_bits > cfg.set_bits) throw ConfigError("controlled bits exceed set-index bits");
  if (page_bits < cfg.line_bits) throw ConfigError("pages must be at least one line long");
  if (cfg.line_bits + controlled_bits > page_bits)
    throw ConfigError(fmt::format("cannot control {} set-index bits with 2^{} byte pages",
                                  controlled_bits, page_bits));
  if (fixed_offset >= stride(cfg)) throw ConfigError("fixed_offset exceeds the controlled bits");
}

// ---------------------------------------------------------------------------

TranslationMap::TranslationMap(unsigned page_bits, unsigned phys_bits, unsigned virt_bits,
                               std::optional<ZoneMask> zone, uint64_t seed)
    : page_bits_(page_bits),
      phys_bits_(phys_bits),
      virt_mask_(virt_bits >= 64 ? ~uint64_t{0} : (uint64_t{1} << virt_bits) - 1),
      zone_(zone),
      rng_(seed) {
  if (phys_bits <= page_bits) throw ConfigError("physical space smaller than one page");
  unsigned frame_bits = phys_bits - page_bits;
  uint64_t free_bits = frame_bits;
  if (zone_) {
    zone_->mask &= (uint64_t{1} << frame_bits) - 1;
    zone_->value &= zone_->mask;
    free_bits -= std::popcount(zone_->mask);
  }
  frame_capacity_ = uint64_t{1} << free_bits;
}

PhysAddr TranslationMap::translate(VirtAddr va) {
  va &= virt_mask_;
  const uint64_t vpn = va >> page_bits_;
  const uint64_t offset = va & ((uint64_t{1} << page_bits_) - 1);
  auto it = map_.find(vpn);
  if (it == map_.end()) {
    if (used_.size() >= frame_capacity_)
      throw ConfigError("physical address space exhausted; translation cannot stay injective");
    const uint64_t frames = uint64_t{1} << (phys_bits_ - page_bits_);
    uint64_t pfn;
    do {
      pfn = uniform_below(rng_, frames);
      if (zone_) pfn = (pfn & ~zone_->mask) | zone_->value;
    } while (!used_.insert(pfn).second);
    it = map_.emplace(vpn, pfn).first;
  }
  return (it->second << page_bits_) | offset;
}

// ---------------------------------------------------------------------------

Tlb::Tlb(const TlbConfig& cfg) : cfg_(cfg) {
  if (cfg_.enabled) {
    if (cfg_.ways == 0 || cfg_.entries == 0 || cfg_.entries % cfg_.ways != 0 || cfg_.ways > 255)
      throw ConfigError("TLB entries must be a positive multiple of ways (ways <= 255)");
    sets_ = cfg_.entries / cfg_.ways;
    vpns_.assign(cfg_.entries, 0);
    count_.assign(sets_, 0);
  } else {
    sets_ = 0;
  }
}

bool Tlb::lookup(uint64_t vpn) {
  if (!cfg_.enabled) return true;
  const uint64_t set = vpn % sets_;
  uint64_t* base = &vpns_[set * cfg_.ways];
  unsigned n = count_[set];
  for (unsigned i = 0; i < n; ++i) {
    if (base[i] == vpn) {
      std::rotate(base, base + i, base + i + 1);
      return true;
    }
  }
  if (n == cfg_.ways) --n;
  std::copy_backward(base, base + n, base + n + 1);
  base[0] = vpn;
  count_[set] = static_cast<uint8_t>(n + 1);
  return false;
}

bool Tlb::holds(uint64_t vpn) const {
  if (!cfg_.enabled) return false;
  const uint64_t set = vpn % sets_;
  const uint64_t* base = &vpns_[set * cfg_.ways];
  return std::find(base, base + count_[set], vpn) != base + count_[set];
}

void Tlb::flush() { std::fill(count_.begin(), count_.end(), 0); }

size_t Tlb::size() const { return std::accumulate(count_.begin(), count_.end(), size_t{0}); }

// ---------------------------------------------------------------------------

void MachineConfig::validate() const {
  cache.validate();
  if (virt_bits < page_bits || virt_bits > 63) throw ConfigError("virt_bits out of range");
  if (page_bits < cache.line_bits) throw ConfigError("page_bits must be >= line_bits");
  if (cache.phys_bits <= page_bits) throw ConfigError("phys_bits must exceed page_bits");
  if (latency.jitter_sigma < 0) throw ConfigError("jitter_sigma must be >= 0");
}

MachineConfig skylake_like() {
  MachineConfig m;
  m.cache.assoc = 12;
  m.cache.set_bits = 10;
  m.cache.slice_bits = 3;
  m.cache.line_bits = 6;
  m.tlb.entries = 1536;
  m.tlb.ways = 4;
  return m;
}

MachineConfig haswell_like() {
  MachineConfig m;
  m.cache.assoc = 16;
  m.cache.set_bits = 11;
  m.cache.slice_bits = 2;
  m.cache.line_bits = 6;
  m.tlb.entries = 1024;
  m.tlb.ways = 8;
  return m;
}

Machine::Machine(const MachineConfig& cfg, uint64_t seed)
    : cfg_(cfg),
      cache_((cfg.validate(), [&] {
               CacheConfig c = cfg.cache;
               if (c.hash_seed == 0) c.hash_seed = derive_seed(seed, 10);
               return c;
             }()),
             derive_seed(seed, 11)),
      tmap_(cfg.page_bits, cfg.cache.phys_bits, cfg.virt_bits, cfg.zone, derive_seed(seed, 12)),
      tlb_(cfg.tlb),
      pt_key_(derive_seed(seed, 13)),
      jitter_rng_(derive_seed(seed, 14)) {
  cfg_.cache = cache_.config();
}

PhysAddr Machine::page_table_line(unsigned level, uint64_t vpn) const {
  // Level 1 holds the leaf entry; each level up covers 512x more pages.
  const uint64_t index = vpn >> (9 * (level - 1));
  const uint64_t h = mix64(pt_key_ ^ mix64((uint64_t{level} << 56) ^ index));
  const uint64_t phys_mask = (uint64_t{1} << cfg_.cache.phys_bits) - 1;
  return (h & phys_mask) & ~((uint64_t{1} << cfg_.cache.line_bits) - 1);
}

AccessOutcome Machine::access(VirtAddr va) {
  AccessOutcome out;
  const uint64_t vpn = (va & ((uint64_t{1} << cfg_.virt_bits) - 1)) >> cfg_.page_bits;
  if (cfg_.tlb.enabled) {
    out.tlb_hit = tlb_.lookup(vpn);
    if (!out.tlb_hit) {
      ++counters_.tlb_misses;
      for (unsigned level = kPageWalkLevels; level >= 1; --level)
        cache_.access(page_table_line(level, vpn));
      counters_.page_walk_accesses += kPageWalkLevels;
    }
  }
  const PhysAddr pa = tmap_.translate(va);
  out.llc_hit = cache_.access(pa).hit;
  ++counters_.mem_accesses;

  const LatencyModel& lat = cfg_.latency;
  out.latency = out.llc_hit ? lat.hit : lat.miss;
  if (!out.tlb_hit) out.latency += lat.tlb_penalty;
  if (lat.jitter_sigma > 0) {
    std::normal_distribution<double> noise(0.0, lat.jitter_sigma);
    out.latency += noise(jitter_rng_);
  }
  return out;
}

void Machine::reset() {
  cache_.reset();
  tlb_.flush();
  counters_ = Counters{};
}

bool Machine::congruent(VirtAddr a, VirtAddr b) {
  return evsim::congruent(cfg_.cache, cache_.slice_hash(), translate(a), translate(b));
}

CacheLocation Machine::location(VirtAddr va) { return cache_.locate(translate(va)); }

bool Machine::is_cached(VirtAddr va) { return cache_.contains(translate(va)); }

// ---------------------------------------------------------------------------

AddressPool build_pool(const Machine& ms, size_t count, const AdversaryModel& adversary,
                       uint64_t seed) {
  const MachineConfig& mc = ms.config();
  adversary.validate(mc.cache);
  if (adversary.page_bits != mc.page_bits)
    throw ConfigError("adversary page size does not match the machine");
  AddressPool pool;
  pool.adversary = adversary;
  pool.stride = adversary.stride(mc.cache);
  pool.id = seed;

  const unsigned align_bits = std::max<unsigned>(mc.page_bits,
                                                 mc.cache.line_bits + adversary.controlled_bits);
  const uint64_t span = static_cast<uint64_t>(count) * pool.stride;
  const uint64_t vspace = uint64_t{1} << mc.virt_bits;
  if (span >= vspace / 2) throw ConfigError("pool does not fit in the virtual address space");
  Rng rng(seed);
  const uint64_t slots = (vspace - span) >> align_bits;
  const uint64_t base = uniform_below(rng, slots) << align_bits;

  pool.addrs.reserve(count);
  for (size_t i = 0; i < count; ++i)
    pool.addrs.push_back(base + adversary.fixed_offset + i * pool.stride);
  return pool;
}

CandidateSet sample_candidate_set(std::span<const VirtAddr> pool, size_t n, uint64_t seed,
                                  uint64_t pool_id, uint64_t stride) {
  if (n > pool.size())
    throw ConfigError(fmt::format("cannot sample {} candidates from a pool of {}", n, pool.size()));
  Rng rng(seed);
  std::vector<VirtAddr> tmp(pool.begin(), pool.end());
  for (size_t i = 0; i < n; ++i) {
    size_t j = i + uniform_below(rng, tmp.size() - i);
    std::swap(tmp[i], tmp[j]);
  }
  tmp.resize(n);
  return CandidateSet{std::move(tmp), pool_id, stride};
}

CandidateSet sample_candidate_set(const AddressPool& pool, size_t n, uint64_t seed) {
  return sample_candidate_set(pool.addrs, n, seed, pool.id, pool.stride);
}

}  // namespace evsim
