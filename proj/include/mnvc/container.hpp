#pragma once

// On-disk stream: a fixed 38-byte header followed by one record per frame.
// Byte layout in docs/bitstream.md.
//
//   header:  "MNVCSTRM" u16 version u16 width u16 height u16 display_w
//            u16 display_h u16 gop u16 partitions u32 frame_count
//            u16 gamma (8.8 fixed point) i16 theta u64 weights checksum
//   record:  u8 type, u32 length per sub-stream (2 intra, 4 inter),
//            sub-stream bytes in order

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mnvc/bytes.hpp"
#include "mnvc/codec.hpp"
#include "mnvc/entropy_model.hpp"
#include "mnvc/error.hpp"
#include "mnvc/partition.hpp"

namespace mnvc {

inline constexpr std::uint16_t kStreamVersion = 1;
inline constexpr std::size_t kStreamHeaderSize = 38;

struct ContainerHeader {
  std::uint16_t width = 0, height = 0;  // padded
  std::uint16_t display_width = 0, display_height = 0;
  std::uint16_t gop = 1;
  std::uint16_t partitions = 1;
  std::uint32_t frame_count = 0;
  std::uint16_t gamma_q8 = 32 * 256;
  std::int16_t theta = 70;
  std::uint64_t weights_checksum = 0;

  bool operator==(const ContainerHeader&) const = default;

  ScaleQuantParams scale() const { return {gamma_q8 / 256.0, theta}; }

  static std::uint16_t encode_gamma(double gamma) {
    const double q = gamma * 256.0;
    if (!(q >= 1.0 && q <= 65535.0) || q != std::floor(q))
      fail(ErrorKind::Validation, "gamma is not representable as 8.8 fixed point");
    return static_cast<std::uint16_t>(q);
  }

  void validate() const {
    require(width > 0 && height > 0 && width % 64 == 0 && height % 64 == 0, ErrorKind::Validation,
            "padded dims must be positive multiples of 64");
    require(display_width > 0 && display_height > 0 && display_width <= width && display_height <= height,
            ErrorKind::Validation, "display dims must be positive and within the padded dims");
    require(width - display_width < 64 && height - display_height < 64, ErrorKind::Validation,
            "padding exceeds one 64-pixel block");
    require(gop >= 1, ErrorKind::Validation, "gop must be >= 1");
    require(partitions >= 1, ErrorKind::Validation, "partition count must be >= 1");
    require(gamma_q8 > 0, ErrorKind::Validation, "gamma must be positive");
  }

  FrameType expected_type(std::size_t frame) const {
    return frame % gop == 0 ? FrameType::Intra : FrameType::Inter;
  }
  std::size_t gop_count() const { return (frame_count + gop - 1) / gop; }
};

inline void write_header(ByteWriter& w, const ContainerHeader& h) {
  w.tag("MNVCSTRM");
  w.u16(kStreamVersion);
  w.u16(h.width);
  w.u16(h.height);
  w.u16(h.display_width);
  w.u16(h.display_height);
  w.u16(h.gop);
  w.u16(h.partitions);
  w.u32(h.frame_count);
  w.u16(h.gamma_q8);
  w.i16(h.theta);
  w.u64(h.weights_checksum);
}

inline ContainerHeader read_header(ByteReader& r) {
  const auto magic = r.bytes(8);
  if (std::string(magic.begin(), magic.end()) != "MNVCSTRM") fail(ErrorKind::Format, "not an MNVC stream (bad magic)");
  const std::uint16_t version = r.u16();
  if (version != kStreamVersion) fail(ErrorKind::Format, "unsupported stream version " + std::to_string(version));
  ContainerHeader h;
  h.width = r.u16();
  h.height = r.u16();
  h.display_width = r.u16();
  h.display_height = r.u16();
  h.gop = r.u16();
  h.partitions = r.u16();
  h.frame_count = r.u32();
  h.gamma_q8 = r.u16();
  h.theta = r.i16();
  h.weights_checksum = r.u64();
  h.validate();
  return h;
}

inline std::size_t record_size(const FramePayload& f) { return 1 + 4 * f.streams.size() + f.byte_size(); }

// Structural check of one record against the header.
inline void validate_record(const ContainerHeader& h, const FramePayload& f, std::size_t index) {
  try {
    if (f.type != FrameType::Intra && f.type != FrameType::Inter) fail(ErrorKind::Validation, "unknown frame type");
    if (f.type != h.expected_type(index))
      fail(ErrorKind::Validation, std::string("frame type does not follow the GoP schedule (expected ") +
                                      (h.expected_type(index) == FrameType::Intra ? "intra" : "inter") + ")");
    if (f.streams.size() != substream_count(f.type)) fail(ErrorKind::Validation, "wrong number of sub-streams");
    for (const auto& s : f.streams) {
      if (s.size() > 0xFFFFFFFFu) fail(ErrorKind::Validation, "sub-stream exceeds 4 GiB");
      PartitionedPayload::parse(s, h.partitions);
    }
  } catch (const Error& e) {
    throw Error(e.kind(), "frame " + std::to_string(index) + ": " + e.message(), index);
  }
}

inline std::vector<std::uint8_t> write_stream(const ContainerHeader& h, std::span<const FramePayload> frames) {
  h.validate();
  if (frames.size() != h.frame_count)
    fail(ErrorKind::Validation, "header frame count " + std::to_string(h.frame_count) + " but " +
                                    std::to_string(frames.size()) + " frames given");
  ByteWriter w;
  write_header(w, h);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    validate_record(h, frames[i], i);
    w.u8(static_cast<std::uint8_t>(frames[i].type));
    for (const auto& s : frames[i].streams) w.u32(static_cast<std::uint32_t>(s.size()));
    for (const auto& s : frames[i].streams) w.bytes(s);
  }
  return std::move(w).take();
}

inline std::size_t write_stream(const ContainerHeader& h, std::span<const FramePayload> frames,
                                const std::string& path) {
  const auto bytes = write_stream(h, frames);
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(ErrorKind::Io, "write failed: " + path);
  return bytes.size();
}

// Streaming parser over an in-memory stream. Each record is validated
// before it is returned; errors carry the frame index.
class StreamReader {
 public:
  explicit StreamReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {
    ByteReader r(bytes_, "stream header");
    header_ = read_header(r);
    pos_ = r.position();
    gop_offsets_.push_back(pos_);
  }

  const ContainerHeader& header() const { return header_; }
  std::size_t next_index() const { return index_; }

  std::optional<FramePayload> next() {
    if (index_ >= header_.frame_count) {
      if (pos_ != bytes_.size())
        fail(ErrorKind::Format, "trailing bytes after the last frame", index_);
      return std::nullopt;
    }
    const std::size_t i = index_;
    FramePayload f;
    std::size_t end = 0;
    try {
      ByteReader r(bytes_.subspan(pos_), "frame " + std::to_string(i));
      const std::uint8_t type = r.u8();
      if (type > 1) fail(ErrorKind::Format, "unknown frame type " + std::to_string(type));
      f.type = static_cast<FrameType>(type);
      std::vector<std::uint32_t> lengths(substream_count(f.type));
      for (auto& l : lengths) l = r.u32();
      for (auto l : lengths) {
        auto b = r.bytes(l);
        f.streams.emplace_back(b.begin(), b.end());
      }
      end = pos_ + r.position();
    } catch (const Error& e) {
      throw Error(e.kind(), "frame " + std::to_string(i) + ": " + e.message(), i);
    }
    validate_record(header_, f, i);
    pos_ = end;
    ++index_;
    if (index_ % header_.gop == 0 && gop_offsets_.size() == index_ / header_.gop) gop_offsets_.push_back(pos_);
    return f;
  }

  // Positions the reader at the first frame of GoP g. Record headers up to
  // that point are walked via their length fields only.
  void seek_gop(std::size_t g) {
    if (g >= header_.gop_count() && !(g == 0 && header_.frame_count == 0))
      fail(ErrorKind::Validation, "GoP " + std::to_string(g) + " out of range");
    while (gop_offsets_.size() <= g) {
      std::size_t frame = (gop_offsets_.size() - 1) * header_.gop;
      std::size_t pos = gop_offsets_.back();
      for (std::size_t k = 0; k < header_.gop; ++k, ++frame) pos = skip_record(pos, frame);
      gop_offsets_.push_back(pos);
    }
    pos_ = gop_offsets_[g];
    index_ = g * header_.gop;
  }

 private:
  std::size_t skip_record(std::size_t pos, std::size_t frame) const {
    try {
      ByteReader r(bytes_.subspan(pos), "frame " + std::to_string(frame));
      const std::uint8_t type = r.u8();
      if (type > 1) fail(ErrorKind::Format, "unknown frame type " + std::to_string(type));
      std::size_t total = 0;
      const std::size_t n = substream_count(static_cast<FrameType>(type));
      for (std::size_t k = 0; k < n; ++k) total += r.u32();
      r.bytes(total);
      return pos + r.position();
    } catch (const Error& e) {
      throw Error(e.kind(), "frame " + std::to_string(frame) + ": " + e.message(), frame);
    }
  }

  std::span<const std::uint8_t> bytes_;
  ContainerHeader header_;
  std::size_t pos_ = 0;
  std::size_t index_ = 0;
  std::vector<std::size_t> gop_offsets_;
};

struct ParsedStream {
  ContainerHeader header;
  std::vector<FramePayload> frames;
};

inline ParsedStream read_stream(std::span<const std::uint8_t> bytes) {
  StreamReader r(bytes);
  ParsedStream s{r.header(), {}};
  while (auto f = r.next()) s.frames.push_back(std::move(*f));
  return s;
}

// A self-contained stream holding GoPs [g, end) of `bytes`.
inline std::vector<std::uint8_t> slice_from_gop(std::span<const std::uint8_t> bytes, std::size_t g) {
  StreamReader r(bytes);
  r.seek_gop(g);
  ContainerHeader h = r.header();
  std::vector<FramePayload> frames;
  while (auto f = r.next()) frames.push_back(std::move(*f));
  h.frame_count = static_cast<std::uint32_t>(frames.size());
  return write_stream(h, frames);
}

}  // namespace mnvc
