#pragma once

// Quantized parameters for every layer of a CodecConfig, plus the static
// prior of each hyperlatent channel.
//
// File layout (all little-endian, see docs/weights.md):
//
//   "MNVC" u16 version
//   config block
//   per network, per layer: f64 weight_scale[oc], i8 weights[oc*ic*k*k],
//                           i32 bias[oc], i32 multiplier[oc], u8 shift[oc]
//   per module (intra, motion, residual): u16 count, u8 n[count]
//   u64 FNV-1a of every preceding byte

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mnvc/bytes.hpp"
#include "mnvc/codec_config.hpp"
#include "mnvc/entropy_model.hpp"
#include "mnvc/error.hpp"
#include "mnvc/qtensor.hpp"

namespace mnvc {

inline constexpr std::uint16_t kWeightsVersion = 1;

struct ModelWeights {
  CodecConfig config;
  std::array<std::vector<ConvLayerSpec>, kNumNets> layers;
  std::array<std::vector<std::uint8_t>, 3> hyper_prior;  // indexed by Module
  std::uint64_t checksum = 0;

  bool operator==(const ModelWeights&) const = default;

  const std::vector<ConvLayerSpec>& net(NetId id) const { return layers[static_cast<std::size_t>(id)]; }
  std::vector<ConvLayerSpec>& net(NetId id) { return layers[static_cast<std::size_t>(id)]; }
  const std::vector<std::uint8_t>& prior(Module m) const { return hyper_prior[static_cast<std::size_t>(m)]; }

  void validate() const {
    config.validate();
    for (std::size_t i = 0; i < kNumNets; ++i) {
      const NetworkConfig& nc = config.nets[i];
      if (layers[i].size() != nc.layers.size())
        fail(ErrorKind::Validation, std::string(kNetNames[i]) + ": layer count does not match config");
      for (std::size_t l = 0; l < nc.layers.size(); ++l) {
        const ConvLayerSpec& s = layers[i][l];
        const ConvLayerSpec shape = nc.layer_spec(l);
        if (s.in_channels != shape.in_channels || s.out_channels != shape.out_channels ||
            s.kernel_h != shape.kernel_h || s.kernel_w != shape.kernel_w || s.stride != shape.stride ||
            s.mode != shape.mode || s.activation != shape.activation || !(s.input == shape.input) ||
            !(s.output == shape.output))
          fail(ErrorKind::Validation, std::string(kNetNames[i]) + " layer " + std::to_string(l) +
                                          " does not match config", l);
        try {
          s.validate();
        } catch (const Error& e) {
          throw Error(ErrorKind::Validation, std::string(kNetNames[i]) + " layer " + std::to_string(l) + ": " +
                                                 e.message(), l);
        }
      }
    }
    const int hyper[3] = {config.intra_hyper_channels(), config.motion_hyper_channels(),
                          config.residual_hyper_channels()};
    for (int m = 0; m < 3; ++m)
      require(hyper_prior[m].size() == static_cast<std::size_t>(hyper[m]), ErrorKind::Validation,
              "hyperlatent prior must hold one index per hyperlatent channel");
  }
};

// ---- serialization ----

namespace detail {

inline void write_config(ByteWriter& w, const CodecConfig& c) {
  w.u16(static_cast<std::uint16_t>(c.gop));
  w.u16(static_cast<std::uint16_t>(c.partitions));
  w.f64(c.scale.gamma);
  w.i32(c.scale.theta);
  w.u8(static_cast<std::uint8_t>(kNumNets));
  for (const NetworkConfig& n : c.nets) {
    w.u8(static_cast<std::uint8_t>(n.input));
    w.u16(static_cast<std::uint16_t>(n.layers.size()));
    for (const LayerConfig& l : n.layers) {
      w.u16(static_cast<std::uint16_t>(l.in_channels));
      w.u16(static_cast<std::uint16_t>(l.out_channels));
      w.u8(static_cast<std::uint8_t>(l.kernel));
      w.u8(static_cast<std::uint8_t>(l.stride));
      w.u8(static_cast<std::uint8_t>(l.mode));
      w.u8(static_cast<std::uint8_t>(l.activation));
      w.u8(static_cast<std::uint8_t>(l.output));
    }
  }
}

template <typename E>
E read_enum(ByteReader& r, std::uint8_t max, const char* what) {
  const std::uint8_t v = r.u8();
  if (v > max) fail(ErrorKind::Format, std::string("bad ") + what + " code " + std::to_string(v));
  return static_cast<E>(v);
}

inline CodecConfig read_config(ByteReader& r) {
  CodecConfig c;
  c.gop = r.u16();
  c.partitions = r.u16();
  c.scale.gamma = r.f64();
  c.scale.theta = r.i32();
  require(r.u8() == kNumNets, ErrorKind::Format, "weights file network count mismatch");
  for (NetworkConfig& n : c.nets) {
    n.input = read_enum<TensorKind>(r, 4, "tensor kind");
    const std::size_t count = r.u16();
    n.layers.clear();
    for (std::size_t i = 0; i < count; ++i) {
      LayerConfig l;
      l.in_channels = r.u16();
      l.out_channels = r.u16();
      l.kernel = r.u8();
      l.stride = r.u8();
      l.mode = read_enum<ConvMode>(r, 1, "conv mode");
      l.activation = read_enum<Activation>(r, 1, "activation");
      l.output = read_enum<TensorKind>(r, 4, "tensor kind");
      n.layers.push_back(l);
    }
  }
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::Format, std::string("weights file carries an invalid config: ") + e.message());
  }
  return c;
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_weights(const ModelWeights& m) {
  ByteWriter w;
  w.tag("MNVC");
  w.u16(kWeightsVersion);
  detail::write_config(w, m.config);
  for (const auto& net : m.layers)
    for (const ConvLayerSpec& s : net) {
      for (double v : s.weight_scales) w.f64(v);
      w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(s.weights.data()), s.weights.size()));
      for (std::int32_t b : s.biases) w.i32(b);
      for (const Requant& q : s.requant) w.i32(q.multiplier);
      for (const Requant& q : s.requant) w.u8(q.shift);
    }
  for (const auto& p : m.hyper_prior) {
    w.u16(static_cast<std::uint16_t>(p.size()));
    w.bytes(p);
  }
  w.u64(fnv1a64(w.data()));
  return std::move(w).take();
}

inline std::uint64_t weights_checksum(const ModelWeights& m) {
  const auto bytes = serialize_weights(m);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[bytes.size() - 8 + i]) << (8 * i);
  return v;
}

inline ModelWeights deserialize_weights(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "weights file");
  auto magic = r.bytes(4);
  if (std::string(magic.begin(), magic.end()) != "MNVC") fail(ErrorKind::Format, "weights file: bad magic");
  const std::uint16_t version = r.u16();
  if (version != kWeightsVersion)
    fail(ErrorKind::Format, "weights file: unsupported version " + std::to_string(version));
  ModelWeights m;
  m.config = detail::read_config(r);
  for (std::size_t i = 0; i < kNumNets; ++i) {
    const NetworkConfig& nc = m.config.nets[i];
    for (std::size_t l = 0; l < nc.layers.size(); ++l) {
      ConvLayerSpec s = nc.layer_spec(l);
      const std::size_t oc = static_cast<std::size_t>(s.out_channels);
      s.weight_scales.resize(oc);
      for (double& v : s.weight_scales) v = r.f64();
      auto wb = r.bytes(s.weight_count());
      s.weights.assign(reinterpret_cast<const std::int8_t*>(wb.data()),
                       reinterpret_cast<const std::int8_t*>(wb.data()) + wb.size());
      s.biases.resize(oc);
      for (std::int32_t& b : s.biases) b = r.i32();
      s.requant.resize(oc);
      for (Requant& q : s.requant) q.multiplier = r.i32();
      for (Requant& q : s.requant) q.shift = r.u8();
      m.layers[i].push_back(std::move(s));
    }
  }
  for (auto& p : m.hyper_prior) {
    const std::size_t n = r.u16();
    auto b = r.bytes(n);
    p.assign(b.begin(), b.end());
  }
  const std::size_t body = r.position();
  const std::uint64_t stored = r.u64();
  if (!r.done()) fail(ErrorKind::Format, "weights file: trailing bytes after checksum");
  if (fnv1a64(bytes.subspan(0, body)) != stored) fail(ErrorKind::Format, "weights file: checksum mismatch");
  m.checksum = stored;
  try {
    m.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::Format, std::string("weights file: ") + e.message());
  }
  return m;
}

inline void save_weights(const ModelWeights& m, const std::string& path) {
  const auto bytes = serialize_weights(m);
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(ErrorKind::Io, "write failed: " + path);
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

inline ModelWeights load_weights(const std::string& path) { return deserialize_weights(read_file(path)); }

// ---- network execution ----

inline QuantTensor run_net(const std::vector<ConvLayerSpec>& net, QuantTensor x, unsigned workers) {
  for (const ConvLayerSpec& l : net) x = conv_q(x, l, workers);
  return x;
}

// ---- generation ----

namespace detail {

// Target output statistics, in output quantization steps.
struct CalibrationTarget {
  double mean;  // raw int8 value
  double std;
};

inline CalibrationTarget calibration_target(TensorKind k, bool hyperlatent) {
  switch (k) {
    case TensorKind::Frame: return {0.0, 50.0};
    case TensorKind::Feature: return {-108.0, 60.0};
    case TensorKind::Latent: return {0.0, hyperlatent ? 3.0 : 4.0};
    case TensorKind::LogScale: return {40.0, 12.0};
    case TensorKind::Residual: return {0.0, 12.0};
  }
  return {0.0, 1.0};
}

// Per-channel first and second moments of a tensor's raw values.
struct ChannelStats {
  std::vector<double> mean, var;
  double pooled_var = 0.0;
  std::size_t samples = 0;
};

inline void finish_stats(ChannelStats& st, const std::vector<double>& sum, const std::vector<double>& sq,
                         std::size_t samples) {
  const std::size_t c = sum.size();
  st.mean.resize(c);
  st.var.resize(c);
  st.samples = samples;
  double pooled = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    st.mean[i] = sum[i] / static_cast<double>(samples);
    st.var[i] = std::max(0.0, sq[i] / static_cast<double>(samples) - st.mean[i] * st.mean[i]);
    pooled += st.var[i];
  }
  st.pooled_var = pooled / static_cast<double>(c);
}

// Standard deviation shrunk toward the channel-pooled value; tiny tensors
// (hyperlatents at calibration size) have only a handful of samples.
inline double shrunk_std(const ChannelStats& st, std::size_t c) {
  constexpr double kPrior = 16.0;
  const double n = static_cast<double>(st.samples);
  return std::sqrt((n * st.var[c] + kPrior * st.pooled_var) / (n + kPrior));
}

// Sets biases, weight scales and requantization of one layer so that its
// output on `in` roughly hits the target statistics.
inline void calibrate_layer(ConvLayerSpec& L, const QuantTensor& in, CalibrationTarget target) {
  const std::size_t oc = static_cast<std::size_t>(L.out_channels);
  L.biases.assign(oc, 0);
  std::vector<double> sum(oc, 0.0), sq(oc, 0.0);
  std::size_t per_channel = 0;
  detail::conv_rows(in, L, 1, [&](std::size_t c, int, std::span<const std::int32_t> row) {
    for (std::int32_t v : row) {
      sum[c] += v;
      sq[c] += static_cast<double>(v) * v;
    }
    if (c == 0) per_channel += row.size();
  });
  ChannelStats st;
  finish_stats(st, sum, sq, per_channel);
  const std::int64_t bias_limit = std::numeric_limits<std::int32_t>::max() -
                                  static_cast<std::int64_t>(L.fan_in()) * kMaxWeightMagnitude * kMaxActivationSpan;
  L.weight_scales.resize(oc);
  for (std::size_t c = 0; c < oc; ++c) {
    const double sd = std::max(1.0, shrunk_std(st, c));
    const double m = target.std / sd;
    const double b = (target.mean - L.output.zero_point) / m - st.mean[c];
    L.biases[c] = static_cast<std::int32_t>(std::clamp<std::int64_t>(round_half_up(b), -bias_limit, bias_limit));
    L.weight_scales[c] = m * L.output.scale / L.input.scale;
  }
  L.derive_requant();
}

inline QuantTensor calibrate_net(const NetworkConfig& nc, std::vector<ConvLayerSpec>& net, QuantTensor x,
                                 bool hyperlatent) {
  for (std::size_t i = 0; i < net.size(); ++i) {
    calibrate_layer(net[i], x, calibration_target(nc.layers[i].output, hyperlatent && i + 1 == net.size()));
    x = conv_q(x, net[i], 1);
  }
  return x;
}

// Root-mean-square of each hyperlatent channel mapped to a scale index.
inline std::vector<std::uint8_t> prior_from(const QuantTensor& z, const ScaleQuantParams& p) {
  std::vector<double> sum(static_cast<std::size_t>(z.channels), 0.0), sq(sum.size(), 0.0);
  for (int c = 0; c < z.channels; ++c)
    for (std::int8_t v : z.plane(c)) sq[static_cast<std::size_t>(c)] += static_cast<double>(v) * v;
  ChannelStats st;
  finish_stats(st, sum, sq, z.plane_size());
  std::vector<std::uint8_t> out(sum.size());
  for (std::size_t c = 0; c < out.size(); ++c)
    out[c] = static_cast<std::uint8_t>(quantize_log_scale(std::max(0.05, shrunk_std(st, c)), p));
  return out;
}

// Integer-only synthetic frame: a coarse random grid, bilinearly upsampled,
// plus small noise. Frame grid (pixel - 128).
inline QuantTensor calibration_frame(std::mt19937_64& rng, int h, int w) {
  constexpr int kCell = 16;
  const int gh = h / kCell + 2, gw = w / kCell + 2;
  QuantTensor t = QuantTensor::filled(3, h, w, kind_params(TensorKind::Frame));
  for (int c = 0; c < 3; ++c) {
    std::vector<int> grid(static_cast<std::size_t>(gh) * gw);
    for (int& g : grid) g = static_cast<int>(rng() % 256);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int gy = y / kCell, gx = x / kCell, fy = y % kCell, fx = x % kCell;
        auto at = [&](int yy, int xx) { return grid[static_cast<std::size_t>(yy) * gw + xx]; };
        const int top = at(gy, gx) * (kCell - fx) + at(gy, gx + 1) * fx;
        const int bot = at(gy + 1, gx) * (kCell - fx) + at(gy + 1, gx + 1) * fx;
        const int v = (top * (kCell - fy) + bot * fy) / (kCell * kCell);
        const int noise = static_cast<int>(rng() % 17) - 8;
        t.at(c, y, x) = saturate_i8(v + noise - 128);
      }
  }
  return t;
}

// Next frame: the previous one shifted by (dy, dx) with edge clamping.
inline QuantTensor shifted_frame(const QuantTensor& f, int dy, int dx) {
  QuantTensor t = f;
  for (int c = 0; c < f.channels; ++c)
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x)
        t.at(c, y, x) = f.at(c, std::clamp(y - dy, 0, f.height - 1), std::clamp(x - dx, 0, f.width - 1));
  return t;
}

}  // namespace detail

inline constexpr int kCalibrationSize = 128;

// Deterministic weights for testing: int8 weights straight from
// mt19937_64(seed) (raw % 255 - 127, config order), then biases and
// per-channel scales calibrated on synthetic integer frames.
inline ModelWeights generate_weights(const CodecConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelWeights m;
  m.config = cfg;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < kNumNets; ++i) {
    const NetworkConfig& nc = cfg.nets[i];
    for (std::size_t l = 0; l < nc.layers.size(); ++l) {
      ConvLayerSpec s = nc.layer_spec(l);
      s.weights.resize(s.weight_count());
      for (auto& w : s.weights) w = static_cast<std::int8_t>(static_cast<int>(rng() % 255) - 127);
      m.layers[i].push_back(std::move(s));
    }
  }

  using detail::calibrate_net;
  auto net = [&](NetId id) -> std::vector<ConvLayerSpec>& { return m.net(id); };
  auto nc = [&](NetId id) -> const NetworkConfig& { return cfg.net(id); };
  const int n = kCalibrationSize;
  const QuantTensor x0 = detail::calibration_frame(rng, n, n);
  const QuantTensor x1 = detail::shifted_frame(x0, 2, 3);

  QuantTensor y = calibrate_net(nc(NetId::IA), net(NetId::IA), x0, false);
  QuantTensor z = calibrate_net(nc(NetId::HIA), net(NetId::HIA), y, true);
  m.hyper_prior[0] = detail::prior_from(z, cfg.scale);
  calibrate_net(nc(NetId::HIS), net(NetId::HIS), z, false);
  calibrate_net(nc(NetId::IS), net(NetId::IS), y, false);

  const QuantTensor fp = calibrate_net(nc(NetId::FPrev), net(NetId::FPrev), x0, false);
  const QuantTensor fc = calibrate_net(nc(NetId::FCurr), net(NetId::FCurr), x1, false);
  y = calibrate_net(nc(NetId::MC), net(NetId::MC), concat_q(fp, fc), false);
  z = calibrate_net(nc(NetId::HMA), net(NetId::HMA), y, true);
  m.hyper_prior[1] = detail::prior_from(z, cfg.scale);
  calibrate_net(nc(NetId::HMS), net(NetId::HMS), z, false);
  const QuantTensor up = calibrate_net(nc(NetId::MSUp), net(NetId::MSUp), y, false);
  const QuantTensor pred = calibrate_net(nc(NetId::MS), net(NetId::MS), concat_q(fp, up), false);

  const QuantTensor r = sub_q(x1, pred, kind_params(TensorKind::Residual));
  y = calibrate_net(nc(NetId::RA), net(NetId::RA), r, false);
  z = calibrate_net(nc(NetId::HRA), net(NetId::HRA), y, true);
  m.hyper_prior[2] = detail::prior_from(z, cfg.scale);
  calibrate_net(nc(NetId::HRS), net(NetId::HRS), z, false);
  calibrate_net(nc(NetId::RS), net(NetId::RS), y, false);

  m.validate();
  m.checksum = weights_checksum(m);
  return m;
}

// Every weight and bias zero; every latent sits at its zero point.
inline ModelWeights zero_weights(const CodecConfig& cfg) {
  cfg.validate();
  ModelWeights m;
  m.config = cfg;
  for (std::size_t i = 0; i < kNumNets; ++i) {
    const NetworkConfig& nc = cfg.nets[i];
    for (std::size_t l = 0; l < nc.layers.size(); ++l) {
      ConvLayerSpec s = nc.layer_spec(l);
      s.weights.assign(s.weight_count(), 0);
      s.weight_scales.assign(static_cast<std::size_t>(s.out_channels), 1.0);
      s.biases.assign(static_cast<std::size_t>(s.out_channels), 0);
      s.derive_requant();
      m.layers[i].push_back(std::move(s));
    }
  }
  const int hyper[3] = {cfg.intra_hyper_channels(), cfg.motion_hyper_channels(), cfg.residual_hyper_channels()};
  for (int k = 0; k < 3; ++k)
    m.hyper_prior[k].assign(static_cast<std::size_t>(hyper[k]),
                            static_cast<std::uint8_t>(std::clamp(cfg.scale.theta, 0, kNumScaleIndices - 1)));
  m.validate();
  m.checksum = weights_checksum(m);
  return m;
}

}  // namespace mnvc
