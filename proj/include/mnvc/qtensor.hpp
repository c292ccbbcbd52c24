#pragma once

// Fixed-point tensor arithmetic for the codec graph.
//
// Every activation is an int8 tensor with an affine (scale, zero_point)
// mapping. Weights are symmetric int8 with one scale per output channel.
// A convolution accumulates (x - zero_point_in) * w in int32 and maps the
// accumulator back to int8 with a per-channel (multiplier, shift) pair:
//
//   out = clamp(((acc * multiplier + 2^(shift-1)) >> shift) + zero_point_out)
//
// i.e. round-half-up in the integer domain. No floating point is touched on
// the inference path, so the same inputs give the same bytes everywhere.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#if defined(__SSE2__)
#include <emmintrin.h>
#endif

#include "mnvc/error.hpp"
#include "mnvc/parallel.hpp"

namespace mnvc {

struct QuantParams {
  double scale = 1.0;
  std::int32_t zero_point = 0;

  bool operator==(const QuantParams&) const = default;

  void validate() const {
    require(std::isfinite(scale) && scale > 0.0, ErrorKind::Config, "quant scale must be positive");
    require(zero_point >= -128 && zero_point <= 127, ErrorKind::Config,
            "zero_point must fit in int8");
  }
};

inline std::int8_t saturate_i8(std::int64_t v) {
  return static_cast<std::int8_t>(std::clamp<std::int64_t>(v, -128, 127));
}

// Round half up on a real value; used only where a value enters the integer
// domain from configuration or test oracles.
inline std::int64_t round_half_up(double v) { return static_cast<std::int64_t>(std::floor(v + 0.5)); }

// Real multiplier m ~= multiplier * 2^-shift with multiplier in [2^30, 2^31).
struct Requant {
  std::int32_t multiplier = 0;
  std::uint8_t shift = 0;

  bool operator==(const Requant&) const = default;

  static Requant from_real(double m) {
    require(std::isfinite(m) && m >= 0.0, ErrorKind::Config, "requant multiplier must be >= 0");
    if (m == 0.0) return {};
    int exp = 0;
    double frac = std::frexp(m, &exp);  // m = frac * 2^exp, frac in [0.5, 1)
    std::int64_t q = round_half_up(std::ldexp(frac, 31));
    if (q == (std::int64_t{1} << 31)) {
      q >>= 1;
      ++exp;
    }
    int shift = 31 - exp;
    require(shift >= 0, ErrorKind::Config, "requant multiplier too large (>= 2^31)");
    if (shift > 62) {
      // Too small for full precision; keep what fits in a 62-bit shift.
      q = round_half_up(std::ldexp(m, 62));
      shift = 62;
    }
    return {static_cast<std::int32_t>(q), static_cast<std::uint8_t>(shift)};
  }

  double real() const { return std::ldexp(static_cast<double>(multiplier), -static_cast<int>(shift)); }

  // |acc| < 2^31 and multiplier < 2^31 keep the product inside int64.
  std::int64_t apply(std::int64_t acc) const {
    std::int64_t prod = acc * multiplier;
    if (shift == 0) return prod;
    return (prod + (std::int64_t{1} << (shift - 1))) >> shift;
  }
};

struct QuantTensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  QuantParams params;
  std::vector<std::int8_t> data;  // channel-planar, row-major

  static QuantTensor filled(int c, int h, int w, QuantParams p) {
    require(c >= 0 && h >= 0 && w >= 0, ErrorKind::Shape, "negative tensor dimension");
    QuantTensor t{c, h, w, p, {}};
    t.data.assign(static_cast<std::size_t>(c) * h * w, static_cast<std::int8_t>(p.zero_point));
    return t;
  }

  // Quantizes real values with round-half-up and saturation.
  static QuantTensor quantize(std::span<const double> values, int c, int h, int w, QuantParams p) {
    QuantTensor t = filled(c, h, w, p);
    require(values.size() == t.data.size(), ErrorKind::Shape, "value count does not match shape");
    for (std::size_t i = 0; i < values.size(); ++i)
      t.data[i] = saturate_i8(round_half_up(values[i] / p.scale) + p.zero_point);
    return t;
  }

  std::size_t size() const { return data.size(); }
  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }

  std::int8_t at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  std::int8_t& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }

  std::span<const std::int8_t> plane(int c) const {
    return std::span<const std::int8_t>(data).subspan(static_cast<std::size_t>(c) * plane_size(), plane_size());
  }

  double dequantize(std::size_t i) const { return (static_cast<double>(data[i]) - params.zero_point) * params.scale; }

  std::vector<double> dequantize() const {
    std::vector<double> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out[i] = dequantize(i);
    return out;
  }

  bool same_shape(const QuantTensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  bool operator==(const QuantTensor&) const = default;

  void validate() const {
    params.validate();
    require(channels >= 0 && height >= 0 && width >= 0, ErrorKind::Shape, "negative tensor dimension");
    require(data.size() == static_cast<std::size_t>(channels) * height * width, ErrorKind::Shape,
            "tensor data length does not match shape");
  }
};

enum class ConvMode : std::uint8_t { Forward = 0, Transposed = 1 };
enum class Activation : std::uint8_t { None = 0, Relu = 1 };

// Worst-case |x - zero_point| for int8 activations.
inline constexpr std::int64_t kMaxActivationSpan = 255;
inline constexpr std::int64_t kMaxWeightMagnitude = 128;

struct ConvLayerSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  ConvMode mode = ConvMode::Forward;
  Activation activation = Activation::None;

  QuantParams input;
  QuantParams output;

  std::vector<std::int8_t> weights;   // [out][in][kh][kw]
  std::vector<double> weight_scales;  // per output channel
  std::vector<std::int32_t> biases;   // accumulator domain, per output channel
  std::vector<Requant> requant;       // per output channel

  bool operator==(const ConvLayerSpec&) const = default;

  int pad_h() const { return (kernel_h - 1) / 2; }
  int pad_w() const { return (kernel_w - 1) / 2; }
  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel_h * kernel_w;
  }
  std::size_t fan_in() const { return static_cast<std::size_t>(in_channels) * kernel_h * kernel_w; }

  // Largest accumulator magnitude reachable from weights and biases alone.
  std::int64_t accumulator_bound() const {
    std::int64_t max_bias = 0;
    for (std::int64_t b : biases) max_bias = std::max(max_bias, b < 0 ? -b : b);
    return static_cast<std::int64_t>(fan_in()) * kMaxWeightMagnitude * kMaxActivationSpan + max_bias;
  }

  int out_height(int in_h) const { return mode == ConvMode::Transposed ? in_h * 2 : (in_h + stride - 1) / stride; }
  int out_width(int in_w) const { return mode == ConvMode::Transposed ? in_w * 2 : (in_w + stride - 1) / stride; }

  // Shape-only checks (no parameter blocks).
  void validate_shape() const {
    require(in_channels > 0 && out_channels > 0, ErrorKind::Config, "channel counts must be positive");
    require(kernel_h > 0 && kernel_w > 0 && kernel_h % 2 == 1 && kernel_w % 2 == 1, ErrorKind::Config,
            "kernel dims must be positive and odd");
    require(stride == 1 || stride == 2, ErrorKind::Config, "stride must be 1 or 2");
    require(mode == ConvMode::Forward || stride == 2, ErrorKind::Config, "transposed conv requires stride 2");
    require(mode == ConvMode::Forward || mode == ConvMode::Transposed, ErrorKind::Config, "unknown conv mode");
    require(activation == Activation::None || activation == Activation::Relu, ErrorKind::Config,
            "unknown activation");
  }

  void validate() const {
    validate_shape();
    input.validate();
    output.validate();
    const auto oc = static_cast<std::size_t>(out_channels);
    require(weights.size() == weight_count(), ErrorKind::Config, "weight count does not match layer shape");
    require(weight_scales.size() == oc && biases.size() == oc && requant.size() == oc, ErrorKind::Config,
            "per-channel parameter blocks must have out_channels entries");
    for (double s : weight_scales)
      require(std::isfinite(s) && s > 0.0, ErrorKind::Config, "weight scales must be positive");
    for (const auto& r : requant)
      require(r.multiplier >= 0 && r.shift <= 62, ErrorKind::Config, "requant multiplier/shift out of range");
    require(accumulator_bound() <= std::numeric_limits<std::int32_t>::max(), ErrorKind::Config,
            "accumulator guard violated: fan_in * 128 * 255 + |bias| exceeds int32");
  }

  // Requant multipliers implied by the current input/output/weight scales.
  void derive_requant() {
    requant.resize(static_cast<std::size_t>(out_channels));
    for (std::size_t c = 0; c < requant.size(); ++c)
      requant[c] = Requant::from_real(input.scale * weight_scales[c] / output.scale);
  }
};

namespace detail {

inline void finish_row(std::span<const std::int32_t> acc, const Requant& rq, std::int32_t zp_out, bool relu,
                       std::int8_t* dst) {
  const std::int64_t lo = relu ? std::max<std::int64_t>(zp_out, -128) : -128;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    std::int64_t v = rq.apply(acc[i]) + zp_out;
    dst[i] = static_cast<std::int8_t>(std::clamp<std::int64_t>(v, lo, 127));
  }
}

// Output columns are produced in blocks of this many, accumulators held in
// registers across every kernel tap.
inline constexpr int kColumnBlock = 16;

// (x - zp) planes with a zero border of `pad` on every side. For stride 2 the
// columns are split into even/odd phases so the inner loops stay unit-stride.
// The buffer has kColumnBlock elements of tail slack for block overreads.
struct PaddedInput {
  int rows = 0;
  int phase_width = 0;
  int phases = 1;
  std::vector<std::int16_t> buf;  // [channel][phase][row][col]

  const std::int16_t* row(int c, int phase, int r) const {
    return buf.data() + ((static_cast<std::size_t>(c) * phases + phase) * rows + r) * phase_width;
  }
};

inline PaddedInput pad_input(const QuantTensor& in, int pad_y, int pad_x, int phases) {
  PaddedInput p;
  p.rows = in.height + 2 * pad_y;
  const int full_w = in.width + 2 * pad_x;
  p.phases = phases;
  p.phase_width = (full_w + phases - 1) / phases;
  p.buf.assign(static_cast<std::size_t>(in.channels) * phases * p.rows * p.phase_width + kColumnBlock, 0);
  const std::int16_t zp = static_cast<std::int16_t>(in.params.zero_point);
  for (int c = 0; c < in.channels; ++c) {
    for (int y = 0; y < in.height; ++y) {
      const std::int8_t* src = in.data.data() + (static_cast<std::size_t>(c) * in.height + y) * in.width;
      for (int x = 0; x < in.width; ++x) {
        int px = x + pad_x;
        std::size_t idx = ((static_cast<std::size_t>(c) * phases + px % phases) * p.rows + (y + pad_y)) *
                              p.phase_width + px / phases;
        p.buf[idx] = static_cast<std::int16_t>(src[x] - zp);
      }
    }
  }
  return p;
}

// Two kernel taps, as offsets from a per-row base pointer into PaddedInput.
struct TapPair {
  std::ptrdiff_t off0 = 0, off1 = 0;
  std::int16_t w0 = 0, w1 = 0;
};

class TapList {
 public:
  void add(std::ptrdiff_t off, std::int8_t w) {
    if (w == 0) return;
    if (open_) {
      pairs_.back().off1 = off;
      pairs_.back().w1 = w;
    } else {
      pairs_.push_back({off, off, w, 0});
    }
    open_ = !open_;
  }
  const std::vector<TapPair>& pairs() const { return pairs_; }

 private:
  std::vector<TapPair> pairs_;
  bool open_ = false;
};

// out[x] = bias + sum_t w_t * base[off_t + x] for x in [0, n). Integer sums
// are exact, so the SIMD and scalar paths agree bit for bit.
inline void accumulate_taps(const std::int16_t* base, const std::vector<TapPair>& taps, std::int32_t bias, int n,
                            std::int32_t* out) {
#if defined(__SSE2__)
  static_assert(kColumnBlock == 16);
  for (int x0 = 0; x0 < n; x0 += kColumnBlock) {
    __m128i a0 = _mm_set1_epi32(bias), a1 = a0, a2 = a0, a3 = a0;
    const std::int16_t* b = base + x0;
    for (const TapPair& t : taps) {
      const std::int16_t* p = b + t.off0;
      const std::int16_t* q = b + t.off1;
      const __m128i w = _mm_set1_epi32(static_cast<std::int32_t>((static_cast<std::uint32_t>(t.w1) << 16) |
                                                                 (static_cast<std::uint32_t>(t.w0) & 0xFFFFu)));
      const __m128i p0 = _mm_loadu_si128(reinterpret_cast<const __m128i*>(p));
      const __m128i q0 = _mm_loadu_si128(reinterpret_cast<const __m128i*>(q));
      const __m128i p1 = _mm_loadu_si128(reinterpret_cast<const __m128i*>(p + 8));
      const __m128i q1 = _mm_loadu_si128(reinterpret_cast<const __m128i*>(q + 8));
      a0 = _mm_add_epi32(a0, _mm_madd_epi16(_mm_unpacklo_epi16(p0, q0), w));
      a1 = _mm_add_epi32(a1, _mm_madd_epi16(_mm_unpackhi_epi16(p0, q0), w));
      a2 = _mm_add_epi32(a2, _mm_madd_epi16(_mm_unpacklo_epi16(p1, q1), w));
      a3 = _mm_add_epi32(a3, _mm_madd_epi16(_mm_unpackhi_epi16(p1, q1), w));
    }
    alignas(16) std::int32_t a[kColumnBlock];
    _mm_store_si128(reinterpret_cast<__m128i*>(a), a0);
    _mm_store_si128(reinterpret_cast<__m128i*>(a + 4), a1);
    _mm_store_si128(reinterpret_cast<__m128i*>(a + 8), a2);
    _mm_store_si128(reinterpret_cast<__m128i*>(a + 12), a3);
    const int m = std::min(kColumnBlock, n - x0);
    for (int i = 0; i < m; ++i) out[x0 + i] = a[i];
  }
#else
  for (int x = 0; x < n; ++x) out[x] = bias;
  for (const TapPair& t : taps)
    for (int x = 0; x < n; ++x) out[x] += t.w0 * base[t.off0 + x] + t.w1 * base[t.off1 + x];
#endif
}

// Both kernels hand each finished accumulator row to sink(oc, oy, row).
// Output rows are distributed over workers; for a given oy the channels are
// visited in order by one worker.
template <typename Sink>
void conv_forward(const QuantTensor& in, const ConvLayerSpec& L, unsigned workers, Sink&& sink) {
  const int s = L.stride;
  const int kh = L.kernel_h, kw = L.kernel_w;
  const int oh = L.out_height(in.height), ow = L.out_width(in.width);
  const PaddedInput pin = pad_input(in, L.pad_h(), L.pad_w(), s);
  const std::ptrdiff_t pw = pin.phase_width;

  std::vector<TapList> taps(static_cast<std::size_t>(L.out_channels));
  for (std::size_t oc = 0; oc < taps.size(); ++oc) {
    const std::int8_t* w = L.weights.data() + oc * L.fan_in();
    for (int ic = 0; ic < L.in_channels; ++ic)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx, ++w)
          taps[oc].add(((static_cast<std::ptrdiff_t>(ic) * s + kx % s) * pin.rows + ky) * pw + kx / s, *w);
  }

  parallel_for(static_cast<std::size_t>(oh), workers, [&](std::size_t oy) {
    std::vector<std::int32_t> acc(static_cast<std::size_t>(ow));
    const std::int16_t* base = pin.buf.data() + static_cast<std::ptrdiff_t>(oy) * s * pw;
    for (std::size_t oc = 0; oc < taps.size(); ++oc) {
      accumulate_taps(base, taps[oc].pairs(), L.biases[oc], ow, acc.data());
      sink(oc, static_cast<int>(oy), std::span<const std::int32_t>(acc));
    }
  });
}

// Stride-2 transposed conv: out[2*iy + ky - pad][2*ix + kx - pad] += w * in[iy][ix].
// Evaluated in gather form: output row parity e and column phase q select
// which kernel taps land on a given output element.
template <typename Sink>
void conv_transposed(const QuantTensor& in, const ConvLayerSpec& L, unsigned workers, Sink&& sink) {
  const int kh = L.kernel_h, kw = L.kernel_w;
  const int py = L.pad_h(), px = L.pad_w();
  const int iw = in.width;
  const int oh = L.out_height(in.height), ow = L.out_width(iw);
  const int margin_x = px + 1, margin_y = kh / 2 + 1;
  const PaddedInput pin = pad_input(in, margin_y, margin_x, 1);
  const std::ptrdiff_t pw = pin.phase_width;

  // taps[oc][e][q]
  std::vector<std::array<std::array<TapList, 2>, 2>> taps(static_cast<std::size_t>(L.out_channels));
  for (std::size_t oc = 0; oc < taps.size(); ++oc) {
    const std::int8_t* w = L.weights.data() + oc * L.fan_in();
    for (int ic = 0; ic < L.in_channels; ++ic)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx, ++w) {
          const int e = ky & 1, q = (kx + px) & 1;
          // Input row base_iy - (ky - e)/2, input column j + (q + px - kx)/2.
          taps[oc][e][q].add((static_cast<std::ptrdiff_t>(ic) * pin.rows - (ky - e) / 2) * pw + (q + px - kx) / 2,
                             *w);
        }
  }

  parallel_for(static_cast<std::size_t>(oh), workers, [&](std::size_t oy_) {
    const int oy = static_cast<int>(oy_);
    const int e = (oy + py) & 1;
    const int base_iy = (oy + py - e) / 2;
    const std::int16_t* base = pin.buf.data() + (base_iy + margin_y) * pw + margin_x;
    std::vector<std::int32_t> acc[2] = {std::vector<std::int32_t>(static_cast<std::size_t>(iw)),
                                        std::vector<std::int32_t>(static_cast<std::size_t>(iw))};
    std::vector<std::int32_t> row(static_cast<std::size_t>(ow));
    for (std::size_t oc = 0; oc < taps.size(); ++oc) {
      for (int q = 0; q < 2; ++q) accumulate_taps(base, taps[oc][e][q].pairs(), L.biases[oc], iw, acc[q].data());
      for (int j = 0; j < iw; ++j) {
        row[2 * j] = acc[0][j];
        row[2 * j + 1] = acc[1][j];
      }
      sink(oc, oy, std::span<const std::int32_t>(row));
    }
  });
}

template <typename Sink>
void conv_rows(const QuantTensor& in, const ConvLayerSpec& L, unsigned workers, Sink&& sink) {
  if (L.mode == ConvMode::Forward)
    conv_forward(in, L, workers, sink);
  else
    conv_transposed(in, L, workers, sink);
}

inline void check_conv_input(const QuantTensor& in, const ConvLayerSpec& layer) {
  in.validate();
  if (in.channels != layer.in_channels)
    fail(ErrorKind::Config, "conv input has " + std::to_string(in.channels) + " channels, layer expects " +
                                std::to_string(layer.in_channels));
  require(in.height > 0 && in.width > 0, ErrorKind::Config, "conv input must be non-empty");
  require(in.params == layer.input, ErrorKind::Shape, "conv input quantization does not match layer");
}

}  // namespace detail

// Quantized 2-D convolution. Forward mode zero-pads by (k-1)/2 (with the
// input zero_point) giving ceil(in/stride) outputs; transposed mode always
// doubles the spatial dims.
inline QuantTensor conv_q(const QuantTensor& in, const ConvLayerSpec& layer, unsigned workers = default_workers()) {
  layer.validate();
  detail::check_conv_input(in, layer);
  QuantTensor out = QuantTensor::filled(layer.out_channels, layer.out_height(in.height), layer.out_width(in.width),
                                        layer.output);
  const bool relu = layer.activation == Activation::Relu;
  const auto plane = out.plane_size();
  detail::conv_rows(in, layer, workers, [&](std::size_t oc, int oy, std::span<const std::int32_t> row) {
    detail::finish_row(row, layer.requant[oc], layer.output.zero_point, relu,
                       out.data.data() + oc * plane + static_cast<std::size_t>(oy) * out.width);
  });
  return out;
}

// Channel concatenation; a's planes come first. Both operands must already
// share quantization parameters. A 0-channel operand is an identity.
inline QuantTensor concat_q(const QuantTensor& a, const QuantTensor& b) {
  if (b.channels == 0) return a;
  if (a.channels == 0) return b;
  require(a.height == b.height && a.width == b.width, ErrorKind::Shape, "concat spatial dims differ");
  require(a.params == b.params, ErrorKind::Shape, "concat operands have different quantization");
  QuantTensor out{a.channels + b.channels, a.height, a.width, a.params, {}};
  out.data.reserve(a.data.size() + b.data.size());
  out.data.insert(out.data.end(), a.data.begin(), a.data.end());
  out.data.insert(out.data.end(), b.data.begin(), b.data.end());
  return out;
}

namespace detail {

// Fixed-point ratio with 32 fractional bits for elementwise rescaling.
inline constexpr int kEltShift = 32;

inline std::int64_t elt_ratio(double from_scale, double to_scale) {
  double r = from_scale / to_scale;
  require(r < 1048576.0, ErrorKind::Config, "elementwise rescale ratio exceeds 2^20");
  return round_half_up(std::ldexp(r, kEltShift));
}

inline std::int8_t elt_finish(std::int64_t sum, std::int32_t zp) {
  return saturate_i8(((sum + (std::int64_t{1} << (kEltShift - 1))) >> kEltShift) + zp);
}

inline QuantTensor add_sub(const QuantTensor& a, const QuantTensor& b, QuantParams out_params, bool subtract) {
  require(a.same_shape(b), ErrorKind::Shape, "elementwise operands differ in shape");
  out_params.validate();
  const std::int64_t ra = elt_ratio(a.params.scale, out_params.scale);
  const std::int64_t rb = elt_ratio(b.params.scale, out_params.scale) * (subtract ? -1 : 1);
  QuantTensor out = QuantTensor::filled(a.channels, a.height, a.width, out_params);
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    std::int64_t sum = (a.data[i] - a.params.zero_point) * ra + (b.data[i] - b.params.zero_point) * rb;
    out.data[i] = elt_finish(sum, out_params.zero_point);
  }
  return out;
}

}  // namespace detail

inline QuantTensor add_q(const QuantTensor& a, const QuantTensor& b, QuantParams out_params) {
  return detail::add_sub(a, b, out_params, false);
}

inline QuantTensor sub_q(const QuantTensor& a, const QuantTensor& b, QuantParams out_params) {
  return detail::add_sub(a, b, out_params, true);
}

// Maps a tensor onto new quantization parameters (used ahead of concat_q
// when two branches disagree).
inline QuantTensor requantize_q(const QuantTensor& t, QuantParams out_params) {
  out_params.validate();
  if (t.params == out_params) return t;
  const std::int64_t r = detail::elt_ratio(t.params.scale, out_params.scale);
  QuantTensor out = QuantTensor::filled(t.channels, t.height, t.width, out_params);
  for (std::size_t i = 0; i < t.data.size(); ++i)
    out.data[i] = detail::elt_finish((t.data[i] - t.params.zero_point) * r, out_params.zero_point);
  return out;
}

inline QuantTensor relu_q(QuantTensor t) {
  const auto zp = static_cast<std::int8_t>(t.params.zero_point);
  for (auto& v : t.data) v = std::max(v, zp);
  return t;
}

}  // namespace mnvc
