#pragma once

// Throughput measurements shared by the bench tool and the acceptance run.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "mnvc/mnvc.hpp"

namespace mnvc::bench {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct EntropyResult {
  std::size_t symbols = 0;
  std::size_t payload_bytes = 0;
  double decode_s = 0.0;
  double mb_per_s() const { return decode_s > 0 ? static_cast<double>(payload_bytes) / 1e6 / decode_s : 0.0; }
  double msym_per_s() const { return decode_s > 0 ? static_cast<double>(symbols) / 1e6 / decode_s : 0.0; }
};

// Latent-sized symbol field (channels x h/16 x w/16) drawn from the coder's
// own tables with scale indices spread over a typical range; best of
// `repeats` decodes.
inline EntropyResult entropy_decode(int height, int width, int channels, std::size_t partitions, unsigned workers,
                                    int repeats = 3, std::uint64_t seed = 12345) {
  const TableSet set{ScaleQuantParams{}};
  const std::size_t n = static_cast<std::size_t>(channels) * (height / 16) * (width / 16);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> scale(40, 120);
  std::uniform_int_distribution<std::uint32_t> u(0, kProbTotal - 1);
  std::vector<std::uint8_t> tables(n);
  std::vector<std::int8_t> symbols(n);
  for (std::size_t i = 0; i < n; ++i) {
    tables[i] = static_cast<std::uint8_t>(scale(rng));
    const CdfTable& t = set[tables[i]];
    const std::uint32_t target = u(rng);
    int bin = 0;
    while (t.cdf[bin + 1] <= target) ++bin;
    symbols[i] = static_cast<std::int8_t>(bin + kSymbolMin);
  }
  const PartitionedPayload p = encode_parallel(symbols, tables, set, partitions, workers);
  EntropyResult r;
  r.symbols = n;
  r.payload_bytes = p.serialize().size();
  r.decode_s = 1e30;
  for (int k = 0; k < repeats; ++k) {
    const auto t0 = Clock::now();
    const auto out = decode_parallel(p, tables, set, workers);
    r.decode_s = std::min(r.decode_s, seconds_since(t0));
    if (out != symbols) fail(ErrorKind::Corrupt, "entropy bench decoded different symbols");
  }
  return r;
}

struct CodecResult {
  std::size_t frames = 0;
  double encode_s = 0.0;
  double decode_s = 0.0;  // reconstruction only
  std::size_t stream_bytes = 0;
  double encode_fps() const { return encode_s > 0 ? static_cast<double>(frames) / encode_s : 0.0; }
  double decode_fps() const { return decode_s > 0 ? static_cast<double>(frames) / decode_s : 0.0; }
};

// End-to-end encode and decode of `frames` synthetic frames (one GoP).
inline CodecResult end_to_end(const ModelWeights& w, int height, int width, std::size_t frames, unsigned workers,
                              std::uint64_t seed = 777) {
  std::mt19937_64 rng(seed);
  const QuantTensor base = detail::calibration_frame(rng, height, width);
  RawVideo v;
  v.width = width;
  v.height = height;
  for (std::size_t i = 0; i < frames; ++i)
    v.frames.push_back(to_image(detail::shifted_frame(base, static_cast<int>(i), 2 * static_cast<int>(i))));
  EncodeOptions opt;
  opt.gop = frames;
  opt.workers = workers;
  CodecResult r;
  r.frames = frames;
  auto t0 = Clock::now();
  const EncodedVideo e = encode_video(v, w, opt);
  r.encode_s = seconds_since(t0);
  r.stream_bytes = e.stream.size();
  const DecodedVideo d = decode_video(e.stream, w, workers);
  for (double ms : d.frame_ms) r.decode_s += ms / 1000.0;
  if (d.video.frames != e.recon) fail(ErrorKind::Desync, "bench decode differs from the sender reconstruction");
  return r;
}

}  // namespace mnvc::bench
