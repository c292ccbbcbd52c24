#pragma once

// Whole-video encode and decode on top of the frame codec and the container.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mnvc/codec.hpp"
#include "mnvc/container.hpp"
#include "mnvc/error.hpp"
#include "mnvc/model_weights.hpp"
#include "mnvc/video_io.hpp"

namespace mnvc {

struct EncodeOptions {
  std::size_t gop = 0;         // 0: from the weights config
  std::size_t partitions = 0;  // 0: from the weights config
  unsigned workers = default_workers();
};

struct EncodedVideo {
  std::vector<std::uint8_t> stream;
  std::vector<Image> recon;  // sender-side reconstructions, display size
};

inline ContainerHeader make_header(const ModelWeights& w, int display_w, int display_h, std::size_t gop,
                                   std::size_t partitions, std::size_t frames) {
  require(display_w > 0 && display_h > 0, ErrorKind::Config, "display dims must be positive");
  require(gop >= 1 && gop <= 65535, ErrorKind::Config, "gop must be in [1, 65535]");
  require(partitions >= 1 && partitions <= 65535, ErrorKind::Config, "partitions must be in [1, 65535]");
  require(frames <= 0xFFFFFFFFu, ErrorKind::Config, "too many frames");
  const int pw = round_up(display_w, 64), ph = round_up(display_h, 64);
  require(pw <= 65535 && ph <= 65535, ErrorKind::Config, "frame dims exceed 65535");
  ContainerHeader h;
  h.width = static_cast<std::uint16_t>(pw);
  h.height = static_cast<std::uint16_t>(ph);
  h.display_width = static_cast<std::uint16_t>(display_w);
  h.display_height = static_cast<std::uint16_t>(display_h);
  h.gop = static_cast<std::uint16_t>(gop);
  h.partitions = static_cast<std::uint16_t>(partitions);
  h.frame_count = static_cast<std::uint32_t>(frames);
  h.gamma_q8 = ContainerHeader::encode_gamma(w.config.scale.gamma);
  h.theta = static_cast<std::int16_t>(w.config.scale.theta);
  h.weights_checksum = weights_checksum(w);
  return h;
}

inline EncodedVideo encode_video(const RawVideo& video, const ModelWeights& weights, const EncodeOptions& opt = {}) {
  require(!video.frames.empty(), ErrorKind::Config, "no input frames");
  const std::size_t gop = opt.gop ? opt.gop : static_cast<std::size_t>(weights.config.gop);
  const std::size_t parts = opt.partitions ? opt.partitions : static_cast<std::size_t>(weights.config.partitions);
  const ContainerHeader h = make_header(weights, video.width, video.height, gop, parts, video.frames.size());
  const Codec codec(weights, parts, opt.workers);
  VideoEncoder enc(codec, gop);
  EncodedVideo out;
  std::vector<FramePayload> payloads;
  payloads.reserve(video.frames.size());
  for (const Image& f : video.frames) {
    require(f.width == video.width && f.height == video.height, ErrorKind::Shape, "frame dims vary within the video");
    QuantTensor recon;
    payloads.push_back(enc.encode(to_tensor(pad_to_multiple(f, 64)), &recon));
    out.recon.push_back(crop_to_display(to_image(recon), video.width, video.height));
  }
  out.stream = write_stream(h, payloads);
  return out;
}

inline void check_stream_matches(const ContainerHeader& h, const ModelWeights& w) {
  if (h.weights_checksum != weights_checksum(w))
    fail(ErrorKind::Validation, "stream was encoded with different weights (checksum mismatch)");
  if (h.scale() != w.config.scale) fail(ErrorKind::Validation, "stream scale quantization differs from the weights");
}

struct DecodedVideo {
  RawVideo video;
  std::vector<double> frame_ms;  // reconstruction time per frame
  bool trailing_garbage = false;
};

inline DecodedVideo decode_video(std::span<const std::uint8_t> stream, const ModelWeights& weights,
                                 unsigned workers = default_workers()) {
  StreamReader reader(stream);
  const ContainerHeader& h = reader.header();
  check_stream_matches(h, weights);
  const Codec codec(weights, h.partitions, workers);
  VideoDecoder dec(codec, h.height, h.width);
  DecodedVideo out;
  out.video.width = h.display_width;
  out.video.height = h.display_height;
  while (auto f = reader.next()) {
    const std::size_t index = reader.next_index() - 1;
    const auto t0 = std::chrono::steady_clock::now();
    QuantTensor x;
    try {
      x = dec.decode(*f);
    } catch (const Error& e) {
      throw Error(e.kind(), "frame " + std::to_string(index) + ": " + e.message(), index);
    }
    const auto t1 = std::chrono::steady_clock::now();
    out.frame_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    out.video.frames.push_back(crop_to_display(to_image(x), h.display_width, h.display_height));
  }
  out.trailing_garbage = dec.saw_trailing_garbage();
  return out;
}

}  // namespace mnvc
