#pragma once

// Layer-by-layer description of the codec networks.
//
// Intra:    I_a, I_s, HI_a, HI_s
// Motion:   F_prev, F_curr, M_c, M_s_up, M_s, HM_a, HM_s
// Residual: R_a, R_s, HR_a, HR_s
//
// The motion synthesis is split in two: M_s_up lifts the decoded motion
// latent to the resolution of f_{t-1}, the pair is concatenated and M_s
// turns it into the prediction x~_t.

#include <array>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#if __has_include(<nlohmann/json.hpp>)
#include <nlohmann/json.hpp>
#else
#include <json.hpp>
#endif

#include "mnvc/entropy_model.hpp"
#include "mnvc/error.hpp"
#include "mnvc/qtensor.hpp"

namespace mnvc {

// Every graph node lives on one of these activation grids.
enum class TensorKind : std::uint8_t {
  Frame = 0,     // pixel p stored as p - 128, real p / 255
  Feature = 1,   // non-negative features, 1/64 steps
  Latent = 2,    // integer latents: the int8 value is the coded symbol
  LogScale = 3,  // ln(sigma) in 1/32 steps
  Residual = 4,  // frame differences, 2/255 steps
};

inline QuantParams kind_params(TensorKind k) {
  switch (k) {
    case TensorKind::Frame: return {1.0 / 255.0, -128};
    case TensorKind::Feature: return {1.0 / 64.0, -128};
    case TensorKind::Latent: return {1.0, 0};
    case TensorKind::LogScale: return {1.0 / 32.0, 0};
    case TensorKind::Residual: return {2.0 / 255.0, 0};
  }
  fail(ErrorKind::Config, "unknown tensor kind");
}

inline const char* kind_name(TensorKind k) {
  switch (k) {
    case TensorKind::Frame: return "frame";
    case TensorKind::Feature: return "feature";
    case TensorKind::Latent: return "latent";
    case TensorKind::LogScale: return "log_scale";
    case TensorKind::Residual: return "residual";
  }
  return "?";
}

struct LayerConfig {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 5;
  int stride = 2;
  ConvMode mode = ConvMode::Forward;
  Activation activation = Activation::Relu;
  TensorKind output = TensorKind::Feature;

  bool operator==(const LayerConfig&) const = default;
};

enum class NetId : std::uint8_t {
  IA, IS, HIA, HIS,
  FPrev, FCurr, MC, MSUp, MS, HMA, HMS,
  RA, RS, HRA, HRS,
};
inline constexpr std::size_t kNumNets = 15;

inline constexpr std::array<std::string_view, kNumNets> kNetNames = {
    "I_a", "I_s", "HI_a", "HI_s", "F_prev", "F_curr", "M_c", "M_s_up",
    "M_s", "HM_a", "HM_s", "R_a", "R_s", "HR_a", "HR_s"};

inline std::string_view net_name(NetId id) { return kNetNames[static_cast<std::size_t>(id)]; }

enum class Module : std::uint8_t { Intra = 0, Motion = 1, Residual = 2 };

inline Module net_module(NetId id) {
  if (id <= NetId::HIS) return Module::Intra;
  if (id <= NetId::HMS) return Module::Motion;
  return Module::Residual;
}

// Networks the receiver has to run.
inline bool on_receiver(NetId id) {
  switch (id) {
    case NetId::IS: case NetId::HIS: case NetId::FPrev: case NetId::MSUp:
    case NetId::MS: case NetId::HMS: case NetId::RS: case NetId::HRS:
      return true;
    default:
      return false;
  }
}

struct NetworkConfig {
  TensorKind input = TensorKind::Frame;
  std::vector<LayerConfig> layers;

  bool operator==(const NetworkConfig&) const = default;

  int in_channels() const { return layers.empty() ? 0 : layers.front().in_channels; }
  int out_channels() const { return layers.empty() ? 0 : layers.back().out_channels; }
  TensorKind output() const { return layers.empty() ? input : layers.back().output; }

  int count(ConvMode mode, int stride) const {
    int n = 0;
    for (const auto& l : layers) n += (l.mode == mode && l.stride == stride) ? 1 : 0;
    return n;
  }
  int downsamples() const { return count(ConvMode::Forward, 2); }
  int upsamples() const { return count(ConvMode::Transposed, 2); }

  // Conv spec skeleton without parameter blocks.
  ConvLayerSpec layer_spec(std::size_t i) const {
    const LayerConfig& l = layers[i];
    ConvLayerSpec s;
    s.in_channels = l.in_channels;
    s.out_channels = l.out_channels;
    s.kernel_h = s.kernel_w = l.kernel;
    s.stride = l.stride;
    s.mode = l.mode;
    s.activation = l.activation;
    s.input = kind_params(i == 0 ? input : layers[i - 1].output);
    s.output = kind_params(l.output);
    return s;
  }
};

struct CodecConfig {
  int gop = 8;
  int partitions = 8;
  ScaleQuantParams scale;
  std::array<NetworkConfig, kNumNets> nets;

  bool operator==(const CodecConfig&) const = default;

  const NetworkConfig& net(NetId id) const { return nets[static_cast<std::size_t>(id)]; }
  NetworkConfig& net(NetId id) { return nets[static_cast<std::size_t>(id)]; }

  int intra_latent_channels() const { return net(NetId::IA).out_channels(); }
  int intra_hyper_channels() const { return net(NetId::HIA).out_channels(); }
  int motion_latent_channels() const { return net(NetId::MC).out_channels(); }
  int motion_hyper_channels() const { return net(NetId::HMA).out_channels(); }
  int residual_latent_channels() const { return net(NetId::RA).out_channels(); }
  int residual_hyper_channels() const { return net(NetId::HRA).out_channels(); }

  void validate() const;

  static CodecConfig default_config();
};

namespace detail {

inline void check_net(const CodecConfig& cfg, NetId id, TensorKind in, TensorKind out, int down, int up) {
  const NetworkConfig& n = cfg.net(id);
  const std::string name(net_name(id));
  require(!n.layers.empty(), ErrorKind::Config, ("network " + name + " has no layers").c_str());
  if (n.input != in) fail(ErrorKind::Config, name + " must take a " + kind_name(in) + " input");
  if (n.output() != out) fail(ErrorKind::Config, name + " must produce a " + kind_name(out) + " output");
  for (std::size_t i = 0; i < n.layers.size(); ++i) {
    try {
      n.layer_spec(i).validate_shape();
    } catch (const Error& e) {
      throw Error(e.kind(), name + " layer " + std::to_string(i) + ": " + e.message(), i);
    }
    if (i > 0 && n.layers[i].in_channels != n.layers[i - 1].out_channels)
      fail(ErrorKind::Config, name + " layer " + std::to_string(i) + " input channels do not chain", i);
  }
  if (n.downsamples() != down || n.upsamples() != up)
    fail(ErrorKind::Config, name + " needs " + std::to_string(down) + " stride-2 convs and " + std::to_string(up) +
                                " upsampling stages, has " + std::to_string(n.downsamples()) + " and " +
                                std::to_string(n.upsamples()));
}

inline void check_channels(bool ok, const char* what) { require(ok, ErrorKind::Config, what); }

}  // namespace detail

inline void CodecConfig::validate() const {
  require(gop >= 1 && gop <= 65535, ErrorKind::Config, "gop must be in [1, 65535]");
  require(partitions >= 1 && partitions <= 65535, ErrorKind::Config, "partitions must be in [1, 65535]");
  scale.validate();
  using detail::check_net;
  using K = TensorKind;
  const int fd = net(NetId::FPrev).downsamples();
  require(fd <= 4, ErrorKind::Config, "F_prev may downsample at most 4 times");
  check_net(*this, NetId::IA, K::Frame, K::Latent, 4, 0);
  check_net(*this, NetId::IS, K::Latent, K::Frame, 0, 4);
  check_net(*this, NetId::HIA, K::Latent, K::Latent, 2, 0);
  check_net(*this, NetId::HIS, K::Latent, K::LogScale, 0, 2);
  check_net(*this, NetId::FPrev, K::Frame, K::Feature, fd, 0);
  check_net(*this, NetId::FCurr, K::Frame, K::Feature, fd, 0);
  check_net(*this, NetId::MC, K::Feature, K::Latent, 4 - fd, 0);
  check_net(*this, NetId::MSUp, K::Latent, K::Feature, 0, 4 - fd);
  check_net(*this, NetId::MS, K::Feature, K::Frame, 0, fd);
  check_net(*this, NetId::HMA, K::Latent, K::Latent, 2, 0);
  check_net(*this, NetId::HMS, K::Latent, K::LogScale, 0, 2);
  check_net(*this, NetId::RA, K::Residual, K::Latent, 4, 0);
  check_net(*this, NetId::RS, K::Latent, K::Residual, 0, 4);
  check_net(*this, NetId::HRA, K::Latent, K::Latent, 2, 0);
  check_net(*this, NetId::HRS, K::Latent, K::LogScale, 0, 2);

  auto in = [&](NetId id) { return net(id).in_channels(); };
  auto out = [&](NetId id) { return net(id).out_channels(); };
  using detail::check_channels;
  check_channels(in(NetId::IA) == 3 && out(NetId::IS) == 3, "intra path must map 3 channels to 3");
  check_channels(in(NetId::FPrev) == 3 && in(NetId::FCurr) == 3 && out(NetId::MS) == 3,
                 "motion path must map 3 channels to 3");
  check_channels(in(NetId::RA) == 3 && out(NetId::RS) == 3, "residual path must map 3 channels to 3");
  for (auto [a, s, ha, hs] : {std::array{NetId::IA, NetId::IS, NetId::HIA, NetId::HIS},
                              std::array{NetId::MC, NetId::MSUp, NetId::HMA, NetId::HMS},
                              std::array{NetId::RA, NetId::RS, NetId::HRA, NetId::HRS}}) {
    check_channels(in(s) == out(a) && in(ha) == out(a), "latent channels disagree between analysis and synthesis");
    check_channels(out(hs) == out(a), "hyper synthesis must predict one scale per latent channel");
    check_channels(in(hs) == out(ha), "hyperlatent channels disagree");
  }
  check_channels(in(NetId::MC) == out(NetId::FPrev) + out(NetId::FCurr), "M_c input must be F_prev + F_curr channels");
  check_channels(in(NetId::MS) == out(NetId::FPrev) + out(NetId::MSUp), "M_s input must be F_prev + M_s_up channels");
}

namespace detail {

inline LayerConfig down(int in, int out, Activation a, TensorKind k, int kernel = 5) {
  return {in, out, kernel, 2, ConvMode::Forward, a, k};
}
inline LayerConfig up(int in, int out, Activation a, TensorKind k) {
  return {in, out, 5, 2, ConvMode::Transposed, a, k};
}
inline LayerConfig flat(int in, int out, Activation a, TensorKind k) {
  return {in, out, 3, 1, ConvMode::Forward, a, k};
}

}  // namespace detail

// Default: 96-wide sender analysis, 64-wide receiver synthesis, 128 latent
// and 64 hyperlatent channels.
inline CodecConfig CodecConfig::default_config() {
  using detail::down;
  using detail::flat;
  using detail::up;
  using K = TensorKind;
  constexpr auto R = Activation::Relu;
  constexpr auto N = Activation::None;
  CodecConfig c;
  auto analysis = [&](K in) {
    return NetworkConfig{in, {down(3, 96, R, K::Feature), down(96, 96, R, K::Feature), down(96, 96, R, K::Feature),
                              down(96, 128, N, K::Latent)}};
  };
  auto synthesis = [&](K out) {
    return NetworkConfig{K::Latent, {up(128, 64, R, K::Feature), up(64, 64, R, K::Feature),
                                     up(64, 64, R, K::Feature), up(64, 3, N, out)}};
  };
  const NetworkConfig hyper_a{K::Latent,
                              {flat(128, 96, R, K::Feature), down(96, 96, R, K::Feature), down(96, 64, N, K::Latent)}};
  const NetworkConfig hyper_s{K::Latent,
                              {up(64, 64, R, K::Feature), up(64, 64, R, K::Feature), flat(64, 128, N, K::LogScale)}};
  c.net(NetId::IA) = analysis(K::Frame);
  c.net(NetId::IS) = synthesis(K::Frame);
  c.net(NetId::HIA) = hyper_a;
  c.net(NetId::HIS) = hyper_s;
  c.net(NetId::FPrev) = {K::Frame, {down(3, 64, R, K::Feature), down(64, 64, R, K::Feature)}};
  c.net(NetId::FCurr) = {K::Frame, {down(3, 96, R, K::Feature), down(96, 96, R, K::Feature)}};
  c.net(NetId::MC) = {K::Feature, {down(160, 96, R, K::Feature), down(96, 128, N, K::Latent)}};
  c.net(NetId::MSUp) = {K::Latent, {up(128, 64, R, K::Feature), up(64, 64, R, K::Feature)}};
  c.net(NetId::MS) = {K::Feature, {up(128, 64, R, K::Feature), up(64, 3, N, K::Frame)}};
  c.net(NetId::HMA) = hyper_a;
  c.net(NetId::HMS) = hyper_s;
  c.net(NetId::RA) = analysis(K::Residual);
  c.net(NetId::RS) = synthesis(K::Residual);
  c.net(NetId::HRA) = hyper_a;
  c.net(NetId::HRS) = hyper_s;
  return c;
}

// ---- JSON ----

NLOHMANN_JSON_SERIALIZE_ENUM(TensorKind, {{TensorKind::Frame, "frame"},
                                          {TensorKind::Feature, "feature"},
                                          {TensorKind::Latent, "latent"},
                                          {TensorKind::LogScale, "log_scale"},
                                          {TensorKind::Residual, "residual"}})
NLOHMANN_JSON_SERIALIZE_ENUM(ConvMode, {{ConvMode::Forward, "forward"}, {ConvMode::Transposed, "transposed"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Activation, {{Activation::None, "none"}, {Activation::Relu, "relu"}})

namespace detail {

template <typename E>
E parse_enum(const nlohmann::json& j, const char* key, std::initializer_list<std::string_view> allowed) {
  const auto& v = j.at(key);
  const std::string s = v.get<std::string>();
  for (auto a : allowed)
    if (s == a) return v.get<E>();
  fail(ErrorKind::Config, std::string("unknown value '") + s + "' for " + key);
}

}  // namespace detail

inline nlohmann::json config_to_json(const CodecConfig& c) {
  nlohmann::json j;
  j["gop"] = c.gop;
  j["partitions"] = c.partitions;
  j["gamma"] = c.scale.gamma;
  j["theta"] = c.scale.theta;
  nlohmann::json nets = nlohmann::json::object();
  for (std::size_t i = 0; i < kNumNets; ++i) {
    const NetworkConfig& n = c.nets[i];
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : n.layers)
      layers.push_back({{"in", l.in_channels}, {"out", l.out_channels}, {"kernel", l.kernel}, {"stride", l.stride},
                        {"mode", l.mode}, {"activation", l.activation}, {"output", l.output}});
    nets[std::string(kNetNames[i])] = {{"input", n.input}, {"layers", layers}};
  }
  j["networks"] = nets;
  return j;
}

// Missing top-level keys fall back to the defaults; a network, when
// present, must be given in full.
inline CodecConfig config_from_json(const nlohmann::json& j) {
  CodecConfig c = CodecConfig::default_config();
  try {
    require(j.is_object(), ErrorKind::Config, "config must be a JSON object");
    if (j.contains("gop")) c.gop = j.at("gop").get<int>();
    if (j.contains("partitions")) c.partitions = j.at("partitions").get<int>();
    if (j.contains("gamma")) c.scale.gamma = j.at("gamma").get<double>();
    if (j.contains("theta")) c.scale.theta = j.at("theta").get<int>();
    if (j.contains("networks")) {
      const auto& nets = j.at("networks");
      require(nets.is_object(), ErrorKind::Config, "'networks' must be an object");
      for (auto it = nets.begin(); it != nets.end(); ++it) {
        std::size_t idx = kNumNets;
        for (std::size_t i = 0; i < kNumNets; ++i)
          if (kNetNames[i] == it.key()) idx = i;
        if (idx == kNumNets) fail(ErrorKind::Config, "unknown network '" + it.key() + "'");
        NetworkConfig n;
        n.input = detail::parse_enum<TensorKind>(it.value(), "input",
                                                 {"frame", "feature", "latent", "log_scale", "residual"});
        for (const auto& l : it.value().at("layers")) {
          LayerConfig lc;
          lc.in_channels = l.at("in").get<int>();
          lc.out_channels = l.at("out").get<int>();
          lc.kernel = l.at("kernel").get<int>();
          lc.stride = l.at("stride").get<int>();
          lc.mode = detail::parse_enum<ConvMode>(l, "mode", {"forward", "transposed"});
          lc.activation = detail::parse_enum<Activation>(l, "activation", {"none", "relu"});
          lc.output = detail::parse_enum<TensorKind>(l, "output",
                                                     {"frame", "feature", "latent", "log_scale", "residual"});
          n.layers.push_back(lc);
        }
        c.nets[idx] = std::move(n);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("bad config JSON: ") + e.what());
  }
  c.validate();
  return c;
}

inline CodecConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::Io, "cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace mnvc
