#pragma once

// Parameter and MAC accounting, normalized per input pixel.
//
//   forward conv:    MACs = out_h * out_w * out_c * in_c * kh * kw
//   transposed conv: MACs = in_h * in_w * in_c * out_c * kh * kw
//   params           = weights + one bias per output channel

#include <array>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "mnvc/codec_config.hpp"

namespace mnvc {

struct LayerCost {
  std::int64_t params = 0;
  std::int64_t macs = 0;
};

inline LayerCost layer_cost(const LayerConfig& l, std::int64_t in_h, std::int64_t in_w) {
  const std::int64_t taps = static_cast<std::int64_t>(l.in_channels) * l.out_channels * l.kernel * l.kernel;
  LayerCost c;
  c.params = taps + l.out_channels;
  if (l.mode == ConvMode::Transposed) {
    c.macs = in_h * in_w * taps;
  } else {
    const std::int64_t oh = (in_h + l.stride - 1) / l.stride, ow = (in_w + l.stride - 1) / l.stride;
    c.macs = oh * ow * taps;
  }
  return c;
}

struct NetCost {
  std::int64_t params = 0;
  double macs_per_pixel = 0.0;
};

struct ModuleRow {
  std::string label;
  std::int64_t params = 0;
  double kmacs_per_pixel = 0.0;
};

struct ComplexityReport {
  std::array<NetCost, kNumNets> nets{};
  std::array<ModuleRow, 3> sender;
  std::array<ModuleRow, 3> receiver;
};

namespace detail {

// Spatial size of each network's input, as a power-of-two divisor of the
// frame size.
inline std::array<int, kNumNets> net_input_levels(const CodecConfig& cfg) {
  std::array<int, kNumNets> lv{};
  auto set = [&](NetId id, int v) { lv[static_cast<std::size_t>(id)] = v; };
  const int f = cfg.net(NetId::FPrev).downsamples();
  set(NetId::IA, 0);
  set(NetId::IS, 4);
  set(NetId::HIA, 4);
  set(NetId::HIS, 6);
  set(NetId::FPrev, 0);
  set(NetId::FCurr, 0);
  set(NetId::MC, f);
  set(NetId::MSUp, 4);
  set(NetId::MS, f);
  set(NetId::HMA, 4);
  set(NetId::HMS, 6);
  set(NetId::RA, 0);
  set(NetId::RS, 4);
  set(NetId::HRA, 4);
  set(NetId::HRS, 6);
  return lv;
}

}  // namespace detail

inline NetCost net_cost(const NetworkConfig& n, std::int64_t in_h, std::int64_t in_w, std::int64_t pixels) {
  NetCost c;
  std::int64_t macs = 0;
  for (const LayerConfig& l : n.layers) {
    LayerCost lc = layer_cost(l, in_h, in_w);
    c.params += lc.params;
    macs += lc.macs;
    if (l.mode == ConvMode::Transposed) {
      in_h *= 2;
      in_w *= 2;
    } else {
      in_h = (in_h + l.stride - 1) / l.stride;
      in_w = (in_w + l.stride - 1) / l.stride;
    }
  }
  c.macs_per_pixel = static_cast<double>(macs) / static_cast<double>(pixels);
  return c;
}

// Sender side runs every network; the receiver runs the synthesis and
// hyper-synthesis networks plus F_prev.
inline ComplexityReport count_complexity(const CodecConfig& cfg) {
  cfg.validate();
  constexpr std::int64_t kRef = 256;  // any multiple of 64 gives the same per-pixel figures
  const auto levels = detail::net_input_levels(cfg);
  ComplexityReport r;
  const char* names[3] = {"I-frame", "Motion", "Residual"};
  for (int m = 0; m < 3; ++m) {
    r.sender[m].label = std::string(names[m]) + " net";
    r.receiver[m].label = std::string(names[m]) + " receiver";
  }
  for (std::size_t i = 0; i < kNumNets; ++i) {
    const std::int64_t side = kRef >> levels[i];
    r.nets[i] = net_cost(cfg.nets[i], side, side, kRef * kRef);
    const auto id = static_cast<NetId>(i);
    const auto m = static_cast<std::size_t>(net_module(id));
    r.sender[m].params += r.nets[i].params;
    r.sender[m].kmacs_per_pixel += r.nets[i].macs_per_pixel / 1000.0;
    if (on_receiver(id)) {
      r.receiver[m].params += r.nets[i].params;
      r.receiver[m].kmacs_per_pixel += r.nets[i].macs_per_pixel / 1000.0;
    }
  }
  return r;
}

inline double total_kmacs(std::span<const ModuleRow> rows) {
  double t = 0.0;
  for (const auto& r : rows) t += r.kmacs_per_pixel;
  return t;
}

inline std::int64_t total_params(std::span<const ModuleRow> rows) {
  std::int64_t t = 0;
  for (const auto& r : rows) t += r.params;
  return t;
}

namespace detail {

inline std::string table_line(const std::string& label, std::int64_t params, double p_pct, double kmacs,
                              double k_pct) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%20s  %8.3fM  %6.1f%%  %8.1f  %6.1f%%\n", label.c_str(),
                static_cast<double>(params) / 1e6, p_pct, kmacs, k_pct);
  return buf;
}

inline std::string table_block(std::span<const ModuleRow> rows, const std::string& total_label) {
  const std::int64_t tp = total_params(rows);
  const double tk = total_kmacs(rows);
  std::string out;
  for (const auto& r : rows)
    out += table_line(r.label, r.params, tp ? 100.0 * static_cast<double>(r.params) / static_cast<double>(tp) : 0.0,
                      r.kmacs_per_pixel, tk > 0 ? 100.0 * r.kmacs_per_pixel / tk : 0.0);
  out += table_line(total_label, tp, 100.0, tk, 100.0);
  return out;
}

}  // namespace detail

// Sender block on top, receiver block below; totals are sums of the rows.
inline std::string format_complexity_table(std::span<const ModuleRow> sender, std::span<const ModuleRow> receiver) {
  std::string out;
  char head[160];
  std::snprintf(head, sizeof head, "%20s  %-18s  %s\n", "Module", "Parameters", "KMACs / pixel");
  out += head;
  out += std::string(61, '-') + "\n";
  out += detail::table_block(sender, "Total");
  out += std::string(61, '-') + "\n";
  out += detail::table_block(receiver, "Total receiver");
  return out;
}

inline std::string format_complexity_table(const ComplexityReport& r) {
  return format_complexity_table(r.sender, r.receiver);
}

}  // namespace mnvc
