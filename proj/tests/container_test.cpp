#include <gtest/gtest.h>

#include <random>

#include "golden.hpp"
#include "mnvc/mnvc.hpp"

using namespace mnvc;

namespace {

std::string data(const std::string& name) { return std::string(MNVC_TEST_DATA) + "/" + name; }

const std::vector<std::uint8_t>& golden_stream() {
  static const auto b = read_file(data("tiny_gop2.mnvc"));
  return b;
}

const ModelWeights& golden_weights() {
  static const ModelWeights w = load_weights(data("tiny_weights.bin"));
  return w;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::Io;
}

}  // namespace

TEST(Container, HeaderOnlyStreamIsFixedSize) {
  const auto bytes = read_file(data("header_only.mnvc"));
  EXPECT_EQ(bytes.size(), kStreamHeaderSize);
  const ParsedStream s = read_stream(bytes);
  EXPECT_EQ(s.header.frame_count, 0u);
  EXPECT_TRUE(s.frames.empty());
  EXPECT_EQ(write_stream(s.header, {}), bytes);
}

TEST(Container, HeaderFieldsOfGolden) {
  const ParsedStream s = read_stream(golden_stream());
  EXPECT_EQ(s.header.width, 128);
  EXPECT_EQ(s.header.height, 64);
  EXPECT_EQ(s.header.display_width, golden::kWidth);
  EXPECT_EQ(s.header.display_height, golden::kHeight);
  EXPECT_EQ(s.header.gop, golden::kGop);
  EXPECT_EQ(s.header.partitions, golden::kPartitions);
  EXPECT_EQ(s.header.frame_count, static_cast<std::uint32_t>(golden::kFrames));
  EXPECT_EQ(s.header.gamma_q8, 32 * 256);
  EXPECT_EQ(s.header.theta, 70);
  EXPECT_EQ(s.header.weights_checksum, weights_checksum(golden_weights()));
  EXPECT_EQ(std::string(golden_stream().begin(), golden_stream().begin() + 8), "MNVCSTRM");
}

TEST(Container, WriteReadWriteIsByteIdentical) {
  const ParsedStream s = read_stream(golden_stream());
  const auto again = write_stream(s.header, s.frames);
  EXPECT_EQ(again, golden_stream());
  std::size_t expected = kStreamHeaderSize;
  for (const auto& f : s.frames) expected += record_size(f);
  EXPECT_EQ(expected, golden_stream().size());
  EXPECT_EQ(read_stream(again).frames, s.frames);
}

TEST(Container, ScheduleViolationsRejected) {
  ParsedStream s = read_stream(golden_stream());
  std::swap(s.frames[0], s.frames[1]);
  EXPECT_EQ(kind_of([&] { write_stream(s.header, s.frames); }), ErrorKind::Validation);
  s = read_stream(golden_stream());
  s.frames[3].streams.pop_back();
  EXPECT_EQ(kind_of([&] { write_stream(s.header, s.frames); }), ErrorKind::Validation);
  s = read_stream(golden_stream());
  s.frames.pop_back();
  EXPECT_EQ(kind_of([&] { write_stream(s.header, s.frames); }), ErrorKind::Validation);
}

TEST(Container, TamperedMagicAndVersion) {
  auto b = golden_stream();
  b[0] = 'X';
  EXPECT_EQ(kind_of([&] { read_stream(b); }), ErrorKind::Format);
  b = golden_stream();
  b[8] = 9;
  EXPECT_EQ(kind_of([&] { read_stream(b); }), ErrorKind::Format);
}

TEST(Container, InvalidDimensionsRejected) {
  auto patch16 = [](std::vector<std::uint8_t> b, std::size_t off, std::uint16_t v) {
    b[off] = static_cast<std::uint8_t>(v & 0xFF);
    b[off + 1] = static_cast<std::uint8_t>(v >> 8);
    return b;
  };
  EXPECT_EQ(kind_of([&] { read_stream(patch16(golden_stream(), 10, 100)); }), ErrorKind::Validation);  // width
  EXPECT_EQ(kind_of([&] { read_stream(patch16(golden_stream(), 14, 129)); }), ErrorKind::Validation);  // display w
  EXPECT_EQ(kind_of([&] { read_stream(patch16(golden_stream(), 14, 60)); }), ErrorKind::Validation);   // pad >= 64
  EXPECT_EQ(kind_of([&] { read_stream(patch16(golden_stream(), 18, 0)); }), ErrorKind::Validation);    // gop
  EXPECT_EQ(kind_of([&] { read_stream(patch16(golden_stream(), 20, 0)); }), ErrorKind::Validation);    // partitions
}

TEST(Container, TrailingBytesRejected) {
  auto b = golden_stream();
  b.push_back(0);
  EXPECT_EQ(kind_of([&] { read_stream(b); }), ErrorKind::Format);
}

TEST(Container, TruncationAtEveryByteNamesTheFrame) {
  const auto& full = golden_stream();
  const ParsedStream ref = read_stream(full);
  std::vector<std::size_t> record_end;
  std::size_t pos = kStreamHeaderSize;
  for (const auto& f : ref.frames) record_end.push_back(pos += record_size(f));
  for (std::size_t cut = 0; cut < full.size(); ++cut) {
    const std::span<const std::uint8_t> b(full.data(), cut);
    std::vector<FramePayload> got;
    try {
      StreamReader r(b);
      while (auto f = r.next()) got.push_back(std::move(*f));
      FAIL() << "cut " << cut << " parsed cleanly";
    } catch (const Error& e) {
      if (cut < kStreamHeaderSize) {
        EXPECT_EQ(e.kind(), ErrorKind::Truncated) << cut;
        continue;
      }
      std::size_t k = 0;
      while (record_end[k] <= cut) ++k;
      ASSERT_TRUE(e.index().has_value()) << cut;
      EXPECT_EQ(*e.index(), k) << cut;
      EXPECT_EQ(got.size(), k) << cut;
      for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i], ref.frames[i]);
    }
  }
}

TEST(Container, SeekToGop) {
  StreamReader r(golden_stream());
  const ParsedStream ref = read_stream(golden_stream());
  r.seek_gop(2);
  EXPECT_EQ(r.next_index(), 4u);
  EXPECT_EQ(*r.next(), ref.frames[4]);
  r.seek_gop(1);
  EXPECT_EQ(*r.next(), ref.frames[2]);
  r.seek_gop(0);
  EXPECT_EQ(*r.next(), ref.frames[0]);
  EXPECT_EQ(kind_of([&] { r.seek_gop(3); }), ErrorKind::Validation);
}

TEST(Container, SliceFromGopIsSelfContained) {
  const auto sliced = slice_from_gop(golden_stream(), 1);
  const ParsedStream s = read_stream(sliced);
  const ParsedStream ref = read_stream(golden_stream());
  ASSERT_EQ(s.frames.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(s.frames[i], ref.frames[i + 2]);
}

TEST(Container, MutatedStreamsFailWithTypedErrors) {
  std::mt19937 rng(2024);
  const auto& base = golden_stream();
  for (int trial = 0; trial < 1000; ++trial) {
    auto b = base;
    const int edits = 1 + static_cast<int>(rng() % 4);
    for (int k = 0; k < edits; ++k) b[rng() % b.size()] = static_cast<std::uint8_t>(rng());
    if (rng() % 4 == 0) b.resize(rng() % b.size());
    try {
      const ParsedStream s = read_stream(b);
      (void)decode_video(b, golden_weights(), 1);
    } catch (const Error&) {
    }
  }
  SUCCEED();
}

TEST(Golden, WeightsFileMatchesGenerator) {
  const CodecConfig cfg = load_config(std::string(MNVC_SOURCE_DIR) + "/configs/tiny.json");
  EXPECT_EQ(serialize_weights(generate_weights(cfg, golden::kWeightSeed)), read_file(data("tiny_weights.bin")));
}

TEST(Golden, EncoderReproducesStream) {
  const RawVideo clip = load_video(data("clip.ppm"));
  ASSERT_EQ(clip.frames, golden::make_clip().frames);
  EncodeOptions opt;
  opt.gop = golden::kGop;
  opt.partitions = golden::kPartitions;
  opt.workers = 1;
  const EncodedVideo e = encode_video(clip, golden_weights(), opt);
  EXPECT_EQ(e.stream, golden_stream());
  EXPECT_EQ(e.recon, load_video(data("tiny_gop2_recon.ppm")).frames);
}

TEST(Golden, DecoderReproducesReconstruction) {
  for (unsigned workers : {1u, 3u}) {
    const DecodedVideo d = decode_video(golden_stream(), golden_weights(), workers);
    EXPECT_EQ(d.video.frames, load_video(data("tiny_gop2_recon.ppm")).frames);
    EXPECT_FALSE(d.trailing_garbage);
  }
}

TEST(Golden, WrongWeightsRejected) {
  const CodecConfig cfg = load_config(std::string(MNVC_SOURCE_DIR) + "/configs/tiny.json");
  EXPECT_EQ(kind_of([&] { decode_video(golden_stream(), generate_weights(cfg, 4), 1); }), ErrorKind::Validation);
}
