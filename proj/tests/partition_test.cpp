#include "mnvc/partition.hpp"

#include <gtest/gtest.h>

#include <random>

namespace mnvc {
namespace {

const TableSet& tables() {
  static const TableSet set;
  return set;
}

struct Stream {
  std::vector<std::int8_t> symbols;
  std::vector<std::uint8_t> tables;
};

Stream random_stream(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Stream s;
  s.symbols.resize(n);
  s.tables.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.tables[i] = static_cast<std::uint8_t>(40 + rng() % 120);
    const auto& t = tables()[s.tables[i]];
    std::uint32_t u = static_cast<std::uint32_t>(rng() >> 48);
    s.symbols[i] = static_cast<std::int8_t>(
        std::upper_bound(t.cdf.begin(), t.cdf.end(), u) - t.cdf.begin() - 1 + kSymbolMin);
  }
  return s;
}

TEST(PlanPartitions, CeilBalanced) {
  auto p = plan_partitions(10, 3);
  EXPECT_EQ(p.boundaries, (std::vector<std::size_t>{0, 4, 7, 10}));
  auto single = plan_partitions(17, 1);
  EXPECT_EQ(single.boundaries, (std::vector<std::size_t>{0, 17}));
  auto empty = plan_partitions(0, 4);
  EXPECT_EQ(empty.boundaries, (std::vector<std::size_t>{0, 0, 0, 0, 0}));
  auto sparse = plan_partitions(2, 4);
  EXPECT_EQ(sparse.boundaries, (std::vector<std::size_t>{0, 1, 2, 2, 2}));
  EXPECT_THROW(plan_partitions(5, 0), Error);
}

TEST(PlanPartitions, SizesDifferByAtMostOne) {
  for (std::size_t n : {0, 1, 7, 100, 1023})
    for (std::size_t p : {1, 2, 3, 8, 16, 33}) {
      auto plan = plan_partitions(n, p);
      std::size_t lo = n, hi = 0;
      for (std::size_t i = 0; i < p; ++i) {
        lo = std::min(lo, plan.size(i));
        hi = std::max(hi, plan.size(i));
        EXPECT_LE(plan.begin(i), plan.end(i));
      }
      EXPECT_LE(hi - lo, 1u);
      EXPECT_EQ(plan.boundaries.back(), n);
    }
}

TEST(EncodeParallel, SinglePartitionBodyEqualsPlainCoder) {
  auto s = random_stream(5000, 1);
  auto payload = encode_parallel(s.symbols, s.tables, tables(), 1);
  EXPECT_EQ(payload.entry_offsets, std::vector<std::uint32_t>{4});
  EXPECT_EQ(payload.segments, ac_encode(s.symbols, s.tables, tables()));
  EXPECT_EQ(decode_parallel(payload, s.tables, tables()), ac_decode(payload.segments, 5000, s.tables, tables()));
}

TEST(EncodeParallel, LayoutAccounting) {
  auto s = random_stream(3001, 2);
  for (std::size_t p : {1, 2, 5, 16}) {
    auto payload = encode_parallel(s.symbols, s.tables, tables(), p);
    auto bytes = payload.serialize();
    EXPECT_EQ(bytes.size(), 4 * p + payload.segments.size());
    std::size_t seg_total = 0;
    for (std::size_t i = 0; i < p; ++i) seg_total += payload.segment(i).size();
    EXPECT_EQ(seg_total, payload.segments.size());
    EXPECT_EQ(PartitionedPayload::parse(bytes, p), payload);
    auto plan = plan_partitions(s.symbols.size(), p);
    for (std::size_t i = 0; i < p; ++i) {
      auto seg = payload.segment(i);
      auto chunk = ac_encode(std::span(s.symbols).subspan(plan.begin(i), plan.size(i)),
                             std::span(s.tables).subspan(plan.begin(i), plan.size(i)), tables());
      EXPECT_TRUE(std::equal(seg.begin(), seg.end(), chunk.begin(), chunk.end()));
    }
  }
}

TEST(EncodeParallel, WorkerCountDoesNotChangeBytes) {
  auto s = random_stream(20000, 3);
  auto serial = encode_parallel(s.symbols, s.tables, tables(), 8, 1).serialize();
  EXPECT_EQ(encode_parallel(s.symbols, s.tables, tables(), 8, 8).serialize(), serial);
  EXPECT_EQ(encode_parallel(s.symbols, s.tables, tables(), 8, 3).serialize(), serial);
}

TEST(DecodeParallel, RoundTripAcrossPartitionCounts) {
  auto s = random_stream(12345, 4);
  for (std::size_t p : {1, 2, 4, 8, 16})
    for (unsigned w : {1u, 4u}) {
      auto payload = PartitionedPayload::parse(encode_parallel(s.symbols, s.tables, tables(), p, w).serialize(), p);
      EXPECT_EQ(decode_parallel(payload, s.tables, tables(), w), s.symbols) << p;
    }
}

TEST(DecodeParallel, EmptyTensor) {
  auto payload = encode_parallel({}, {}, tables(), 4);
  EXPECT_EQ(payload.segments.size(), 4u);
  EXPECT_TRUE(decode_parallel(PartitionedPayload::parse(payload.serialize(), 4), {}, tables()).empty());
}

TEST(DecodeParallel, CorruptionStaysInsideItsPartition) {
  auto s = random_stream(16000, 5);
  const std::size_t p = 8, victim = 3;
  auto payload = encode_parallel(s.symbols, s.tables, tables(), p);
  auto bytes = payload.serialize();
  const std::size_t at = payload.entry_offsets[victim] + payload.segment(victim).size() / 2;
  bytes[at] ^= 0x5A;
  auto bad = PartitionedPayload::parse(bytes, p);
  auto plan = plan_partitions(s.symbols.size(), p);
  for (std::size_t i = 0; i < p; ++i) {
    if (i == victim) continue;
    auto part = decode_partition(bad, i, s.tables, tables());
    EXPECT_TRUE(std::equal(part.begin(), part.end(), s.symbols.begin() + static_cast<long>(plan.begin(i))));
  }
  try {
    auto all = decode_parallel(bad, s.tables, tables());
    for (std::size_t i = 0; i < s.symbols.size(); ++i) {
      if (i >= plan.begin(victim) && i < plan.end(victim)) continue;
      ASSERT_EQ(all[i], s.symbols[i]);
    }
  } catch (const Error& e) {
    EXPECT_EQ(e.index(), victim);
  }
}

TEST(PartitionedPayload, MalformedOffsetsNameTheIndex) {
  auto s = random_stream(4000, 6);
  auto bytes = encode_parallel(s.symbols, s.tables, tables(), 4).serialize();
  auto expect_index = [](std::vector<std::uint8_t> b, std::size_t idx) {
    try {
      PartitionedPayload::parse(b, 4);
      FAIL() << "expected parse error";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::Parse);
      EXPECT_EQ(e.index(), idx);
    }
  };
  auto nonmono = bytes;
  nonmono[8] = bytes[4];
  nonmono[9] = bytes[5];
  nonmono[10] = bytes[6];
  nonmono[11] = bytes[7];
  expect_index(nonmono, 2);
  auto oob = bytes;
  oob[15] = 0x7F;
  expect_index(oob, 3);
  auto first = bytes;
  first[0] = 0;
  expect_index(first, 0);
  std::vector<std::uint8_t> tiny(bytes.begin(), bytes.begin() + 10);
  EXPECT_THROW(PartitionedPayload::parse(tiny, 4), Error);
}

TEST(DecodeParallel, TruncatedSegmentNamesPartition) {
  auto s = random_stream(4000, 7);
  auto payload = encode_parallel(s.symbols, s.tables, tables(), 4);
  auto bytes = payload.serialize();
  bytes.resize(payload.entry_offsets[3] + 2);
  auto cut = PartitionedPayload::parse(bytes, 4);
  try {
    decode_parallel(cut, s.tables, tables());
    FAIL() << "expected truncation";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Truncated);
    EXPECT_EQ(e.index(), 3u);
  }
}

}  // namespace
}  // namespace mnvc
