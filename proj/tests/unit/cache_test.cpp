#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "evsim/cache.hpp"

namespace evsim {
namespace {

CacheConfig small_config(PolicyKind policy, unsigned assoc = 4) {
  CacheConfig cfg;
  cfg.assoc = assoc;
  cfg.set_bits = 4;
  cfg.slice_bits = 1;
  cfg.line_bits = 6;
  cfg.phys_bits = 30;
  cfg.policy = policy;
  cfg.hash_seed = 99;
  return cfg;
}

// Physical line addresses in one (slice, set), found by scanning.
std::vector<uint64_t> congruent_lines(const Cache& c, uint32_t slice, uint32_t set, size_t count) {
  std::vector<uint64_t> out;
  const auto& cfg = c.config();
  for (uint64_t pa = uint64_t{set} << cfg.line_bits; out.size() < count;
       pa += uint64_t{1} << (cfg.line_bits + cfg.set_bits)) {
    if (c.locate(pa).slice == slice) out.push_back(pa);
  }
  return out;
}

TEST(CacheConfigTest, DefaultsDescribeSkylakeGeometry) {
  CacheConfig cfg;
  EXPECT_EQ(cfg.num_sets(), 1024u);
  EXPECT_EQ(cfg.num_slices(), 8u);
  EXPECT_EQ(cfg.total_lines(), 12u * 8192u);
  EXPECT_EQ(cfg.total_bytes(), 6u * 1024u * 1024u);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(CacheConfigTest, RejectsBadGeometry) {
  CacheConfig cfg;
  cfg.assoc = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = CacheConfig{};
  cfg.phys_bits = 10;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = CacheConfig{};
  cfg.policy = PolicyKind::kTreePlru;  // assoc 12 is not a power of two
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.assoc = 16;
  EXPECT_NO_THROW(cfg.validate());
}

TEST(CacheConfigTest, ParsesPolicies) {
  EXPECT_EQ(parse_policy("lru"), PolicyKind::kLru);
  EXPECT_EQ(parse_policy("tree-plru"), PolicyKind::kTreePlru);
  EXPECT_EQ(parse_policy("adaptive"), PolicyKind::kAdaptiveDueling);
  EXPECT_THROW(parse_policy("random"), ConfigError);
  for (auto p : {PolicyKind::kLru, PolicyKind::kFifo, PolicyKind::kTreePlru, PolicyKind::kBip,
                 PolicyKind::kAdaptiveDueling})
    EXPECT_EQ(parse_policy(to_string(p)), p);
}

TEST(LocationTest, SetIndexIsTheBitsAboveTheLineOffset) {
  CacheConfig cfg;
  cfg.hash_seed = 5;
  const uint64_t pa = (uint64_t{0x2a5} << 6) | 0x3f;
  EXPECT_EQ(derive_location(cfg, pa).set_index, 0x2a5u);
  EXPECT_EQ(derive_location(cfg, pa).set_index, derive_location(cfg, pa & ~0x3full).set_index);
}

TEST(LocationTest, SliceIgnoresLineOffset) {
  CacheConfig cfg;
  cfg.hash_seed = 5;
  for (uint64_t line = 0; line < 1000; ++line) {
    uint64_t pa = line * 7919 << 6;
    EXPECT_EQ(derive_location(cfg, pa).slice, derive_location(cfg, pa + 13).slice);
  }
}

TEST(LocationTest, XorFoldMatchesParityOfMasks) {
  CacheConfig cfg;
  cfg.slice_hash = SliceHashKind::kXorFold;
  cfg.xor_masks = intel_like_xor_masks(3);
  ASSERT_EQ(cfg.xor_masks.size(), 3u);
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    uint64_t pa = uniform_below(rng, uint64_t{1} << 34);
    uint32_t expect = 0;
    for (unsigned j = 0; j < 3; ++j)
      expect |= static_cast<uint32_t>(std::popcount(pa & cfg.xor_masks[j]) & 1) << j;
    EXPECT_EQ(derive_location(cfg, pa).slice, expect);
  }
}

TEST(LocationTest, RandomSliceHashIsRoughlyUniform) {
  CacheConfig cfg;
  cfg.hash_seed = 17;
  std::vector<int> hist(cfg.num_slices());
  const int n = 80000;
  for (int i = 0; i < n; ++i) ++hist[derive_location(cfg, uint64_t(i) << 16).slice];
  for (int h : hist) EXPECT_NEAR(h, n / 8.0, 5 * std::sqrt(n / 8.0));
}

TEST(CongruenceTest, IsAnEquivalenceRelation) {
  CacheConfig cfg = small_config(PolicyKind::kLru);
  Rng rng(3);
  std::vector<uint64_t> pas(60);
  for (auto& pa : pas) pa = uniform_below(rng, uint64_t{1} << 16) << 6;
  for (uint64_t a : pas) {
    EXPECT_TRUE(congruent(cfg, a, a));
    for (uint64_t b : pas) {
      EXPECT_EQ(congruent(cfg, a, b), congruent(cfg, b, a));
      for (uint64_t c : pas)
        if (congruent(cfg, a, b) && congruent(cfg, b, c)) EXPECT_TRUE(congruent(cfg, a, c));
    }
  }
}

TEST(CacheTest, FirstAccessMissesSecondHits) {
  Cache c(small_config(PolicyKind::kLru), 1);
  EXPECT_FALSE(c.access(0x1000).hit);
  EXPECT_TRUE(c.access(0x1000).hit);
  EXPECT_TRUE(c.access(0x1000 + 8).hit);  // same line
  EXPECT_TRUE(c.contains(0x1000));
}

TEST(CacheTest, LruEvictsLeastRecentlyUsed) {
  Cache c(small_config(PolicyKind::kLru, 4), 1);
  auto lines = congruent_lines(c, 0, 3, 5);
  for (int i = 0; i < 4; ++i) c.access(lines[i]);
  c.access(lines[0]);  // refresh
  auto r = c.access(lines[4]);
  EXPECT_FALSE(r.hit);
  ASSERT_TRUE(r.evicted_tag.has_value());
  EXPECT_EQ(*r.evicted_tag, c.locate(lines[1]).tag);
  EXPECT_TRUE(c.contains(lines[0]));
  EXPECT_FALSE(c.contains(lines[1]));
}

TEST(CacheTest, FifoIgnoresHits) {
  Cache c(small_config(PolicyKind::kFifo, 4), 1);
  auto lines = congruent_lines(c, 1, 7, 5);
  for (int i = 0; i < 4; ++i) c.access(lines[i]);
  c.access(lines[0]);
  c.access(lines[4]);
  EXPECT_FALSE(c.contains(lines[0]));
  EXPECT_TRUE(c.contains(lines[1]));
}

TEST(CacheTest, TreePlruVictimFollowsTreeBits) {
  Cache c(small_config(PolicyKind::kTreePlru, 4), 1);
  auto lines = congruent_lines(c, 0, 2, 5);
  for (int i = 0; i < 4; ++i) c.access(lines[i]);
  // After 0,1,2,3 the tree points at way 0.
  c.access(lines[4]);
  EXPECT_FALSE(c.contains(lines[0]));
  // Line 4 took way 0; after touching way 2 the tree points at way 1.
  c.access(lines[2]);
  c.access(lines[0]);
  EXPECT_FALSE(c.contains(lines[1]));
}

TEST(CacheTest, BipMostlyInsertsAtLruPosition) {
  CacheConfig cfg = small_config(PolicyKind::kBip, 4);
  cfg.adaptive.bip_epsilon = 0.0;
  Cache c(cfg, 1);
  auto lines = congruent_lines(c, 0, 5, 12);
  for (int i = 0; i < 4; ++i) c.access(lines[i]);
  c.access(lines[0]);  // hit promotes to MRU
  for (int i = 4; i < 12; ++i) c.access(lines[i]);
  // New lines keep replacing each other in the LRU slot.
  EXPECT_TRUE(c.contains(lines[0]));
  EXPECT_TRUE(c.contains(lines[11]));
  EXPECT_FALSE(c.contains(lines[10]));
}

TEST(CacheTest, OccupancyNeverExceedsAssociativity) {
  for (auto policy : {PolicyKind::kLru, PolicyKind::kFifo, PolicyKind::kTreePlru, PolicyKind::kBip,
                      PolicyKind::kAdaptiveDueling}) {
    CacheConfig cfg = small_config(policy, 4);
    cfg.adaptive.leaders_per_policy = 2;
    Cache c(cfg, 2);
    Rng rng(9);
    for (int i = 0; i < 20000; ++i) {
      uint64_t pa = uniform_below(rng, uint64_t{1} << 14) << 6;
      c.access(pa);
      auto loc = c.locate(pa);
      ASSERT_LE(c.occupancy(loc.slice, loc.set_index), cfg.assoc);
      ASSERT_TRUE(c.contains(pa));
    }
    for (uint32_t s = 0; s < cfg.num_slices(); ++s)
      for (uint32_t i = 0; i < cfg.num_sets(); ++i) {
        auto tags = c.resident_tags(s, i);
        EXPECT_EQ(std::set<uint64_t>(tags.begin(), tags.end()).size(), tags.size());
      }
  }
}

TEST(CacheTest, DeterministicForEqualSeeds) {
  CacheConfig cfg = small_config(PolicyKind::kBip, 4);
  Cache a(cfg, 7), b(cfg, 7);
  Rng rng(1);
  for (int i = 0; i < 5000; ++i) {
    uint64_t pa = uniform_below(rng, uint64_t{1} << 14) << 6;
    ASSERT_EQ(a.access(pa).hit, b.access(pa).hit);
  }
}

TEST(CacheTest, ResetEmptiesTheCache) {
  Cache c(small_config(PolicyKind::kLru), 1);
  c.access(0x40);
  c.reset();
  EXPECT_FALSE(c.contains(0x40));
  EXPECT_EQ(c.accesses(), 0u);
}

TEST(DuelingTest, StaticLeadersAreSpacedEvenly) {
  CacheConfig cfg;
  cfg.policy = PolicyKind::kAdaptiveDueling;
  auto lru = Cache::static_leaders(cfg, SetRole::kLruLeader);
  auto bip = Cache::static_leaders(cfg, SetRole::kBipLeader);
  ASSERT_EQ(lru.size(), 16u);
  ASSERT_EQ(bip.size(), 16u);
  for (size_t i = 0; i < 16; ++i) {
    EXPECT_EQ(lru[i], 65u * i);
    EXPECT_EQ(bip[i], 65u * i + 32);
  }
  Cache c(cfg, 1);
  for (uint32_t s = 0; s < cfg.num_slices(); ++s) {
    EXPECT_EQ(c.role(s, 130), SetRole::kLruLeader);
    EXPECT_EQ(c.role(s, 162), SetRole::kBipLeader);
    EXPECT_EQ(c.role(s, 131), SetRole::kFollower);
  }
}

TEST(DuelingTest, LruLeaderMissesPushFollowersToBip) {
  CacheConfig cfg = small_config(PolicyKind::kAdaptiveDueling, 4);
  cfg.adaptive.leaders_per_policy = 2;
  cfg.adaptive.psel_bits = 4;
  Cache c(cfg, 1);
  EXPECT_EQ(c.psel(), 0u);
  EXPECT_FALSE(c.followers_use_bip());
  const uint32_t leader = Cache::static_leaders(cfg, SetRole::kLruLeader).front();
  auto lines = congruent_lines(c, 0, leader, 40);
  for (uint64_t pa : lines) c.access(pa);
  EXPECT_EQ(c.psel(), 15u);  // saturated
  EXPECT_TRUE(c.followers_use_bip());

  const uint32_t bip_leader = Cache::static_leaders(cfg, SetRole::kBipLeader).front();
  for (uint64_t pa : congruent_lines(c, 0, bip_leader, 40)) c.access(pa);
  EXPECT_EQ(c.psel(), 0u);
  EXPECT_FALSE(c.followers_use_bip());
}

TEST(DuelingTest, RandRuntimeLeadersDifferAcrossSlices) {
  CacheConfig cfg;
  cfg.policy = PolicyKind::kAdaptiveDueling;
  cfg.adaptive.leader_mode = LeaderMode::kRandRuntime;
  Cache c(cfg, 4);
  std::set<std::vector<uint32_t>> layouts;
  for (uint32_t s = 0; s < cfg.num_slices(); ++s) {
    std::vector<uint32_t> leaders;
    for (uint32_t i = 0; i < cfg.num_sets(); ++i)
      if (c.role(s, i) == SetRole::kLruLeader) leaders.push_back(i);
    EXPECT_EQ(leaders.size(), 16u);
    layouts.insert(leaders);
  }
  EXPECT_GT(layouts.size(), 1u);
}

}  // namespace
}  // namespace evsim
