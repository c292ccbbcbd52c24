#pragma once

// Partitioned payloads for parallel entropy coding.
//
// A latent tensor is flattened channel-major, split into P contiguous,
// ceil-balanced chunks, and each chunk is coded independently. Wire layout:
//
//   [u32 LE entry offset 0] ... [u32 LE entry offset P-1] [seg 0] ... [seg P-1]
//
// Offsets are measured from the first byte of the payload, so offset 0 is
// always 4 * P. The length of segment i is offset[i+1] - offset[i] (or the
// payload length for the last one). P itself is not stored here.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mnvc/arith_coder.hpp"
#include "mnvc/error.hpp"
#include "mnvc/parallel.hpp"

namespace mnvc {

struct PartitionPlan {
  std::size_t total_symbols = 0;
  std::vector<std::size_t> boundaries;  // P + 1 offsets

  std::size_t count() const { return boundaries.size() - 1; }
  std::size_t begin(std::size_t i) const { return boundaries[i]; }
  std::size_t end(std::size_t i) const { return boundaries[i + 1]; }
  std::size_t size(std::size_t i) const { return end(i) - begin(i); }
};

// The first total % P chunks get one extra symbol.
inline PartitionPlan plan_partitions(std::size_t total_symbols, std::size_t partitions) {
  require(partitions >= 1, ErrorKind::Config, "partition count must be >= 1");
  PartitionPlan plan{total_symbols, {}};
  plan.boundaries.resize(partitions + 1);
  const std::size_t base = total_symbols / partitions, extra = total_symbols % partitions;
  plan.boundaries[0] = 0;
  for (std::size_t i = 0; i < partitions; ++i)
    plan.boundaries[i + 1] = plan.boundaries[i] + base + (i < extra ? 1 : 0);
  return plan;
}

inline std::size_t partition_header_size(std::size_t partitions) { return 4 * partitions; }

struct PartitionedPayload {
  std::vector<std::uint32_t> entry_offsets;
  std::vector<std::uint8_t> segments;  // concatenated, in partition order

  std::size_t partitions() const { return entry_offsets.size(); }
  std::size_t byte_size() const { return partition_header_size(partitions()) + segments.size(); }

  std::span<const std::uint8_t> segment(std::size_t i) const {
    const std::size_t header = partition_header_size(partitions());
    const std::size_t b = entry_offsets[i] - header;
    const std::size_t e = (i + 1 < partitions() ? entry_offsets[i + 1] : byte_size()) - header;
    return std::span<const std::uint8_t>(segments).subspan(b, e - b);
  }

  std::vector<std::uint8_t> serialize() const {
    std::vector<std::uint8_t> out;
    out.reserve(byte_size());
    for (std::uint32_t v : entry_offsets)
      for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
    out.insert(out.end(), segments.begin(), segments.end());
    return out;
  }

  bool operator==(const PartitionedPayload&) const = default;

  // Validates the entry-point header; errors name the offending index.
  static PartitionedPayload parse(std::span<const std::uint8_t> bytes, std::size_t partitions) {
    require(partitions >= 1, ErrorKind::Config, "partition count must be >= 1");
    const std::size_t header = partition_header_size(partitions);
    if (bytes.size() < header)
      fail(ErrorKind::Truncated, "payload shorter than its entry-point header (" + std::to_string(bytes.size()) +
                                     " < " + std::to_string(header) + ")");
    PartitionedPayload p;
    p.entry_offsets.resize(partitions);
    for (std::size_t i = 0; i < partitions; ++i) {
      const std::uint8_t* b = bytes.data() + 4 * i;
      p.entry_offsets[i] = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }
    if (p.entry_offsets[0] != header)
      fail(ErrorKind::Parse, "entry offset 0 must equal header length " + std::to_string(header), 0);
    for (std::size_t i = 1; i < partitions; ++i) {
      if (p.entry_offsets[i] <= p.entry_offsets[i - 1])
        fail(ErrorKind::Parse, "entry offset " + std::to_string(i) + " is not increasing", i);
      if (p.entry_offsets[i] >= bytes.size())
        fail(ErrorKind::Parse, "entry offset " + std::to_string(i) + " is out of bounds", i);
    }
    if (p.entry_offsets[partitions - 1] >= bytes.size())
      fail(ErrorKind::Parse, "entry offset " + std::to_string(partitions - 1) + " leaves an empty last segment",
           partitions - 1);
    p.segments.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
    return p;
  }
};

// Segment i == ac_encode of chunk i; bytes do not depend on `workers`.
inline PartitionedPayload encode_parallel(std::span<const std::int8_t> symbols, std::span<const std::uint8_t> tables,
                                          const TableSet& set, std::size_t partitions,
                                          unsigned workers = default_workers()) {
  check_coding_inputs(symbols.size(), tables);
  const PartitionPlan plan = plan_partitions(symbols.size(), partitions);
  std::vector<std::vector<std::uint8_t>> parts(partitions);
  parallel_for(partitions, workers, [&](std::size_t i) {
    parts[i] = ac_encode(symbols.subspan(plan.begin(i), plan.size(i)), tables.subspan(plan.begin(i), plan.size(i)), set);
  });
  PartitionedPayload out;
  out.entry_offsets.resize(partitions);
  std::size_t offset = partition_header_size(partitions);
  for (std::size_t i = 0; i < partitions; ++i) {
    require(offset <= 0xFFFFFFFFu, ErrorKind::Config, "payload exceeds 4 GiB");
    out.entry_offsets[i] = static_cast<std::uint32_t>(offset);
    offset += parts[i].size();
    out.segments.insert(out.segments.end(), parts[i].begin(), parts[i].end());
  }
  return out;
}

// Decodes a single partition; errors carry the partition id.
inline std::vector<std::int8_t> decode_partition(const PartitionedPayload& payload, std::size_t index,
                                                 std::span<const std::uint8_t> tables, const TableSet& set,
                                                 DecodeStatus* status = nullptr) {
  const PartitionPlan plan = plan_partitions(tables.size(), payload.partitions());
  try {
    return ac_decode(payload.segment(index), plan.size(index), tables.subspan(plan.begin(index), plan.size(index)),
                     set, status);
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("partition ") + std::to_string(index) + ": " + e.message(), index);
  }
}

// Concatenation of per-partition decodes in partition order; the symbol
// count is tables.size().
inline std::vector<std::int8_t> decode_parallel(const PartitionedPayload& payload, std::span<const std::uint8_t> tables,
                                                const TableSet& set, unsigned workers = default_workers(),
                                                bool* trailing_garbage = nullptr) {
  require(payload.partitions() >= 1, ErrorKind::Parse, "payload has no partitions");
  const PartitionPlan plan = plan_partitions(tables.size(), payload.partitions());
  std::vector<std::int8_t> out(tables.size());
  std::vector<char> garbage(payload.partitions(), 0);
  parallel_for(payload.partitions(), workers, [&](std::size_t i) {
    DecodeStatus st;
    auto part = decode_partition(payload, i, tables, set, &st);
    std::copy(part.begin(), part.end(), out.begin() + static_cast<std::ptrdiff_t>(plan.begin(i)));
    garbage[i] = st.trailing_garbage;
  });
  if (trailing_garbage) *trailing_garbage = std::find(garbage.begin(), garbage.end(), 1) != garbage.end();
  return out;
}

}  // namespace mnvc
