#pragma once

// Intra and inter frame coding on top of the quantized networks.
//
// Intra:  y = I_a(x), z = HI_a(y); z is coded under the static per-channel
//         prior, y under scale indices from HI_s(z); x^ = I_s(y).
// Inter:  f_prev = F_prev(x^_{t-1}), f = F_curr(x_t),
//         y_M = M_c(f_prev ++ f), x~ = M_s(f_prev ++ M_s_up(y_M)),
//         r = x_t - x~, y_R = R_a(r), x^_t = x~ + R_s(y_R).
// Each hyperprior branch contributes two sub-streams (z then y), each a
// partitioned payload. Frame sub-stream order: z_M, y_M, z_R, y_R.
//
// Latents are exactly lossless through the coder, so the encoder's
// reconstruction is computed from the same tensors the decoder will see.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mnvc/codec_config.hpp"
#include "mnvc/entropy_model.hpp"
#include "mnvc/error.hpp"
#include "mnvc/model_weights.hpp"
#include "mnvc/parallel.hpp"
#include "mnvc/partition.hpp"
#include "mnvc/qtensor.hpp"

namespace mnvc {

enum class FrameType : std::uint8_t { Intra = 0, Inter = 1 };

inline std::size_t substream_count(FrameType t) { return t == FrameType::Intra ? 2 : 4; }

struct FramePayload {
  FrameType type = FrameType::Intra;
  std::vector<std::vector<std::uint8_t>> streams;  // serialized partitioned payloads

  bool operator==(const FramePayload&) const = default;

  std::size_t byte_size() const {
    std::size_t n = 0;
    for (const auto& s : streams) n += s.size();
    return n;
  }
};

struct DecoderState {
  std::optional<QuantTensor> reference;  // x^_{t-1}
  std::size_t frame_in_gop = 0;

  void reset() {
    reference.reset();
    frame_in_gop = 0;
  }
};

struct Shape {
  int channels = 0, height = 0, width = 0;
  bool operator==(const Shape&) const = default;
  std::size_t size() const { return static_cast<std::size_t>(channels) * height * width; }
};

inline Shape net_output_shape(const NetworkConfig& n, Shape in) {
  for (const LayerConfig& l : n.layers) {
    if (l.mode == ConvMode::Transposed) {
      in.height *= 2;
      in.width *= 2;
    } else {
      in.height = (in.height + l.stride - 1) / l.stride;
      in.width = (in.width + l.stride - 1) / l.stride;
    }
    in.channels = l.out_channels;
  }
  return in;
}

class Codec {
 public:
  struct Encoded {
    FramePayload payload;
    QuantTensor recon;
  };

  explicit Codec(const ModelWeights& weights, std::size_t partitions = 0, unsigned workers = default_workers())
      : w_(weights),
        tables_(&shared_table_set(weights.config.scale)),
        partitions_(partitions ? partitions : static_cast<std::size_t>(weights.config.partitions)),
        workers_(std::max(1u, workers)) {
    w_.validate();
    require(partitions_ >= 1 && partitions_ <= 65535, ErrorKind::Config, "partitions must be in [1, 65535]");
    const QuantParams ls = kind_params(TensorKind::LogScale);
    for (int e = -128; e < 128; ++e)
      log_scale_lut_[static_cast<std::size_t>(e + 128)] =
          static_cast<std::uint8_t>(quantize_log_scale_from_log(e * ls.scale, w_.config.scale));
  }

  const ModelWeights& weights() const { return w_; }
  const CodecConfig& config() const { return w_.config; }
  const TableSet& tables() const { return *tables_; }
  std::size_t partitions() const { return partitions_; }
  unsigned workers() const { return workers_; }

  // Scale index for a raw log-scale activation.
  std::uint8_t scale_index(std::int8_t e) const { return log_scale_lut_[static_cast<std::size_t>(e + 128)]; }

  Shape latent_shape(int height, int width) const {
    return net_output_shape(config().net(NetId::IA), {3, height, width});
  }
  Shape hyperlatent_shape(int height, int width) const {
    return net_output_shape(config().net(NetId::HIA), latent_shape(height, width));
  }

  Encoded intra_encode(const QuantTensor& x) const {
    check_frame(x);
    const QuantTensor y = run(NetId::IA, x);
    Encoded out;
    out.payload.type = FrameType::Intra;
    encode_branch(y, NetId::HIA, NetId::HIS, Module::Intra, out.payload.streams);
    out.recon = run(NetId::IS, y);
    return out;
  }

  QuantTensor intra_decode(const FramePayload& p, int height, int width, bool* trailing_garbage = nullptr) const {
    check_payload(p, FrameType::Intra);
    check_dims(height, width);
    const QuantTensor y = decode_branch(p.streams[0], p.streams[1], NetId::IA, NetId::HIA, NetId::HIS, Module::Intra,
                                        {3, height, width}, trailing_garbage);
    return run(NetId::IS, y);
  }

  Encoded inter_encode(const QuantTensor& x, const DecoderState& st) const {
    check_frame(x);
    const QuantTensor& ref = reference(st, x.height, x.width);
    const QuantTensor fp = run(NetId::FPrev, ref);
    const QuantTensor y_m = run(NetId::MC, concat_q(fp, run(NetId::FCurr, x)));
    Encoded out;
    out.payload.type = FrameType::Inter;
    encode_branch(y_m, NetId::HMA, NetId::HMS, Module::Motion, out.payload.streams);
    const QuantTensor pred = predict(fp, y_m);
    const QuantTensor y_r = run(NetId::RA, sub_q(x, pred, kind_params(TensorKind::Residual)));
    encode_branch(y_r, NetId::HRA, NetId::HRS, Module::Residual, out.payload.streams);
    out.recon = add_q(pred, run(NetId::RS, y_r), kind_params(TensorKind::Frame));
    return out;
  }

  QuantTensor inter_decode(const FramePayload& p, const DecoderState& st, bool* trailing_garbage = nullptr) const {
    check_payload(p, FrameType::Inter);
    if (!st.reference) fail(ErrorKind::Desync, "inter frame without a decoded reference frame");
    const QuantTensor& ref = *st.reference;
    const Shape frame{3, ref.height, ref.width};
    const QuantTensor fp = run(NetId::FPrev, ref);
    const Shape motion_in = net_output_shape(config().net(NetId::FPrev), frame);
    const QuantTensor y_m = decode_branch(p.streams[0], p.streams[1], NetId::MC, NetId::HMA, NetId::HMS,
                                          Module::Motion, {motion_in.channels + config().net(NetId::FCurr).out_channels(),
                                                           motion_in.height, motion_in.width},
                                          trailing_garbage);
    const QuantTensor pred = predict(fp, y_m);
    const QuantTensor y_r = decode_branch(p.streams[2], p.streams[3], NetId::RA, NetId::HRA, NetId::HRS,
                                          Module::Residual, frame, trailing_garbage);
    return add_q(pred, run(NetId::RS, y_r), kind_params(TensorKind::Frame));
  }

  // Symbol/table sequences of one coded sub-stream pair, for rate analysis.
  struct BranchSymbols {
    std::vector<std::int8_t> z, y;
    std::vector<std::uint8_t> z_tables, y_tables;
  };
  BranchSymbols branch_symbols(const QuantTensor& y, NetId ha, NetId hs, Module m) const {
    BranchSymbols b;
    const QuantTensor z = run(ha, y);
    b.z = z.data;
    b.z_tables = prior_tables(z, m);
    b.y = y.data;
    b.y_tables = scale_tables(run(hs, z));
    return b;
  }

 private:
  QuantTensor run(NetId id, const QuantTensor& x) const { return run_net(w_.net(id), x, workers_); }

  QuantTensor predict(const QuantTensor& fp, const QuantTensor& y_m) const {
    return run(NetId::MS, concat_q(fp, run(NetId::MSUp, y_m)));
  }

  static void check_dims(int height, int width) {
    if (height <= 0 || width <= 0 || height % 64 != 0 || width % 64 != 0)
      fail(ErrorKind::Config, "frame dims must be positive multiples of 64 (got " + std::to_string(height) + "x" +
                                  std::to_string(width) + "); pad first");
  }

  static void check_frame(const QuantTensor& x) {
    x.validate();
    require(x.channels == 3, ErrorKind::Shape, "frames have 3 channels");
    require(x.params == kind_params(TensorKind::Frame), ErrorKind::Shape, "frame tensor has wrong quantization");
    check_dims(x.height, x.width);
  }

  static void check_payload(const FramePayload& p, FrameType t) {
    if (p.type != t) fail(ErrorKind::Desync, t == FrameType::Intra ? "expected an intra frame" : "expected an inter frame");
    if (p.streams.size() != substream_count(t))
      fail(ErrorKind::Parse, "frame carries " + std::to_string(p.streams.size()) + " sub-streams, expected " +
                                 std::to_string(substream_count(t)));
  }

  static const QuantTensor& reference(const DecoderState& st, int h, int w) {
    if (!st.reference) fail(ErrorKind::Desync, "inter frame without a reference frame");
    if (st.reference->height != h || st.reference->width != w)
      fail(ErrorKind::Desync, "reference frame dims do not match the current frame");
    return *st.reference;
  }

  std::vector<std::uint8_t> prior_tables(const QuantTensor& z, Module m) const {
    const auto& prior = w_.prior(m);
    std::vector<std::uint8_t> t(z.size());
    const std::size_t plane = z.plane_size();
    for (std::size_t c = 0; c < static_cast<std::size_t>(z.channels); ++c)
      std::fill_n(t.begin() + static_cast<std::ptrdiff_t>(c * plane), plane, prior[c]);
    return t;
  }

  std::vector<std::uint8_t> scale_tables(const QuantTensor& log_scale) const {
    std::vector<std::uint8_t> t(log_scale.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale_index(log_scale.data[i]);
    return t;
  }

  void encode_branch(const QuantTensor& y, NetId ha, NetId hs, Module m,
                     std::vector<std::vector<std::uint8_t>>& streams) const {
    const BranchSymbols b = branch_symbols(y, ha, hs, m);
    streams.push_back(encode_parallel(b.z, b.z_tables, *tables_, partitions_, workers_).serialize());
    streams.push_back(encode_parallel(b.y, b.y_tables, *tables_, partitions_, workers_).serialize());
  }

  QuantTensor decode_stream(std::span<const std::uint8_t> bytes, std::span<const std::uint8_t> t, Shape s,
                            const char* what, bool* trailing_garbage) const {
    try {
      const PartitionedPayload p = PartitionedPayload::parse(bytes, partitions_);
      bool garbage = false;
      QuantTensor out{s.channels, s.height, s.width, kind_params(TensorKind::Latent),
                      decode_parallel(p, t, *tables_, workers_, &garbage)};
      if (garbage && trailing_garbage) *trailing_garbage = true;
      return out;
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(what) + " stream: " + e.message(), e.index());
    }
  }

  // Decodes z, derives the scale indices, decodes y. `analysis_in` is the
  // input shape of the branch's analysis network.
  QuantTensor decode_branch(std::span<const std::uint8_t> z_bytes, std::span<const std::uint8_t> y_bytes, NetId a,
                            NetId ha, NetId hs, Module m, Shape analysis_in, bool* trailing_garbage) const {
    const Shape ys = net_output_shape(config().net(a), analysis_in);
    const Shape zs = net_output_shape(config().net(ha), ys);
    std::vector<std::uint8_t> zt(zs.size());
    const std::size_t plane = static_cast<std::size_t>(zs.height) * zs.width;
    for (std::size_t c = 0; c < static_cast<std::size_t>(zs.channels); ++c)
      std::fill_n(zt.begin() + static_cast<std::ptrdiff_t>(c * plane), plane, w_.prior(m)[c]);
    const QuantTensor z = decode_stream(z_bytes, zt, zs, "hyperlatent", trailing_garbage);
    const QuantTensor ls = run(hs, z);
    if (ls.channels != ys.channels || ls.height != ys.height || ls.width != ys.width)
      fail(ErrorKind::Config, "hyper synthesis output does not match the latent shape");
    return decode_stream(y_bytes, scale_tables(ls), ys, "latent", trailing_garbage);
  }

  ModelWeights w_;
  const TableSet* tables_;
  std::size_t partitions_;
  unsigned workers_;
  std::array<std::uint8_t, 256> log_scale_lut_{};
};

// Frame-sequence drivers: frame k of every GoP of length `gop` is intra iff
// k == 0, and the reference is always the previous reconstruction.
class VideoEncoder {
 public:
  VideoEncoder(const Codec& codec, std::size_t gop) : codec_(codec), gop_(gop) {
    require(gop >= 1, ErrorKind::Config, "gop must be >= 1");
  }

  FramePayload encode(const QuantTensor& x, QuantTensor* recon = nullptr) {
    Codec::Encoded e = (index_ % gop_ == 0) ? codec_.intra_encode(x) : codec_.inter_encode(x, state_);
    state_.reference = e.recon;
    state_.frame_in_gop = index_ % gop_;
    ++index_;
    if (recon) *recon = std::move(e.recon);
    return std::move(e.payload);
  }

 private:
  const Codec& codec_;
  std::size_t gop_;
  std::size_t index_ = 0;
  DecoderState state_;
};

class VideoDecoder {
 public:
  VideoDecoder(const Codec& codec, int height, int width) : codec_(codec), height_(height), width_(width) {}

  QuantTensor decode(const FramePayload& p) {
    QuantTensor out;
    if (p.type == FrameType::Intra) {
      out = codec_.intra_decode(p, height_, width_, &trailing_garbage_);
      state_.frame_in_gop = 0;
    } else {
      if (!state_.reference) fail(ErrorKind::Desync, "inter frame before any intra frame");
      out = codec_.inter_decode(p, state_, &trailing_garbage_);
      ++state_.frame_in_gop;
    }
    state_.reference = out;
    return out;
  }

  // Drops the reference, e.g. after seeking to a GoP boundary.
  void reset() { state_.reset(); }
  const DecoderState& state() const { return state_; }
  bool saw_trailing_garbage() const { return trailing_garbage_; }

 private:
  const Codec& codec_;
  int height_, width_;
  DecoderState state_;
  bool trailing_garbage_ = false;
};

}  // namespace mnvc
