#pragma once

// Quality and rate metrics over RGB24 frames.
//
// PSNR: 10 log10(255^2 / MSE) with MSE over all three channels, capped at
// 99 dB. Video PSNR is the mean of per-frame values.
//
// MS-SSIM: 5 scales, Gaussian window 11x11 with sigma 1.5, exponents
// (0.0448, 0.2856, 0.3001, 0.2363, 0.1333), K1 = 0.01, K2 = 0.03, L = 255.
// Statistics use valid-mode filtering; when a scale is smaller than 11 px
// the window shrinks to that size and sigma scales with it. Each channel is
// scored separately and the three scores are averaged. Scales are produced
// by 2x2 average pooling (odd trailing rows/columns dropped). Negative
// contrast-structure terms are clamped to zero before exponentiation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <string>
#include <vector>

#include "mnvc/error.hpp"
#include "mnvc/parallel.hpp"
#include "mnvc/video_io.hpp"

namespace mnvc {

inline constexpr double kPsnrCap = 99.0;
inline constexpr std::array<double, 5> kMsSsimWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

inline void require_same_dims(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height)
    fail(ErrorKind::Shape, "frame dims differ: " + std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
                               std::to_string(b.width) + "x" + std::to_string(b.height));
}

inline double mse(const Image& a, const Image& b) {
  require_same_dims(a, b);
  if (a.rgb.empty()) return 0.0;
  std::uint64_t acc = 0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    const int d = int(a.rgb[i]) - int(b.rgb[i]);
    acc += static_cast<std::uint64_t>(d * d);
  }
  return static_cast<double>(acc) / static_cast<double>(a.rgb.size());
}

inline double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / m));
}

namespace detail {

struct Plane {
  int w = 0, h = 0;
  std::vector<double> v;
  double& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

inline Plane channel_plane(const Image& img, int c) {
  Plane p{img.width, img.height, std::vector<double>(static_cast<std::size_t>(img.width) * img.height)};
  for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] = img.rgb[i * 3 + c];
  return p;
}

inline Plane downsample2(const Plane& p) {
  Plane o{p.w / 2, p.h / 2, {}};
  o.v.resize(static_cast<std::size_t>(o.w) * o.h);
  for (int y = 0; y < o.h; ++y)
    for (int x = 0; x < o.w; ++x)
      o.at(y, x) = 0.25 * (p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) + p.at(2 * y + 1, 2 * x) +
                           p.at(2 * y + 1, 2 * x + 1));
  return o;
}

inline std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double s = 0.0;
  for (int i = 0; i < size; ++i) s += g[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
  for (auto& v : g) v /= s;
  return g;
}

// Valid-mode separable filter.
inline Plane filter_valid(const Plane& p, const std::vector<double>& g) {
  const int k = static_cast<int>(g.size());
  Plane t{p.w - k + 1, p.h, {}};
  t.v.resize(static_cast<std::size_t>(t.w) * t.h);
  for (int y = 0; y < t.h; ++y)
    for (int x = 0; x < t.w; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += g[i] * p.at(y, x + i);
      t.at(y, x) = s;
    }
  Plane o{t.w, p.h - k + 1, {}};
  o.v.resize(static_cast<std::size_t>(o.w) * o.h);
  for (int y = 0; y < o.h; ++y)
    for (int x = 0; x < o.w; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += g[i] * t.at(y + i, x);
      o.at(y, x) = s;
    }
  return o;
}

inline Plane product(const Plane& a, const Plane& b) {
  Plane o{a.w, a.h, std::vector<double>(a.v.size())};
  for (std::size_t i = 0; i < a.v.size(); ++i) o.v[i] = a.v[i] * b.v[i];
  return o;
}

struct SsimTerms {
  double ssim = 0.0;
  double cs = 0.0;
};

inline SsimTerms ssim_terms(const Plane& x, const Plane& y) {
  const int size = std::min({11, x.w, x.h});
  const auto g = gaussian_window(size, 1.5 * size / 11.0);
  const double c1 = (0.01 * 255) * (0.01 * 255), c2 = (0.03 * 255) * (0.03 * 255);
  const Plane mx = filter_valid(x, g), my = filter_valid(y, g);
  const Plane sxx = filter_valid(product(x, x), g), syy = filter_valid(product(y, y), g),
              sxy = filter_valid(product(x, y), g);
  SsimTerms t;
  for (std::size_t i = 0; i < mx.v.size(); ++i) {
    const double ux = mx.v[i], uy = my.v[i];
    const double vx = sxx.v[i] - ux * ux, vy = syy.v[i] - uy * uy, cov = sxy.v[i] - ux * uy;
    const double cs = (2.0 * cov + c2) / (vx + vy + c2);
    const double l = (2.0 * ux * uy + c1) / (ux * ux + uy * uy + c1);
    t.cs += cs;
    t.ssim += l * cs;
  }
  t.cs /= static_cast<double>(mx.v.size());
  t.ssim /= static_cast<double>(mx.v.size());
  return t;
}

}  // namespace detail

inline int ms_ssim_min_dim(int scales) { return 10 << (scales - 1); }

// `scales` < 5 uses the leading exponents as they are.
inline double ms_ssim(const Image& a, const Image& b, int scales = 5) {
  require_same_dims(a, b);
  require(scales >= 1 && scales <= 5, ErrorKind::Domain, "MS-SSIM scales must be in [1, 5]");
  const int min_dim = ms_ssim_min_dim(scales);
  if (a.width < min_dim || a.height < min_dim) {
    std::string msg = "MS-SSIM with " + std::to_string(scales) + " scales needs at least " + std::to_string(min_dim) +
                      "x" + std::to_string(min_dim) + " px, got " + std::to_string(a.width) + "x" +
                      std::to_string(a.height);
    int fit = scales;
    while (fit > 1 && (a.width < ms_ssim_min_dim(fit) || a.height < ms_ssim_min_dim(fit))) --fit;
    if (a.width >= ms_ssim_min_dim(fit) && a.height >= ms_ssim_min_dim(fit))
      msg += "; use " + std::to_string(fit) + " scale(s)";
    fail(ErrorKind::Domain, msg);
  }
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    detail::Plane x = detail::channel_plane(a, c), y = detail::channel_plane(b, c);
    double v = 1.0;
    for (int s = 0; s < scales; ++s) {
      const auto t = detail::ssim_terms(x, y);
      const double w = kMsSsimWeights[s];
      const double term = s + 1 == scales ? t.ssim : t.cs;
      v *= std::pow(std::max(term, 0.0), w);
      if (s + 1 < scales) {
        x = detail::downsample2(x);
        y = detail::downsample2(y);
      }
    }
    total += v;
  }
  return total / 3.0;
}

struct TimingStats {
  double mean_ms = 0.0;
  double p95_ms = 0.0;
};

// p95 by nearest rank.
inline TimingStats timing_stats(std::vector<double> ms) {
  TimingStats t;
  if (ms.empty()) return t;
  double s = 0.0;
  for (double v : ms) s += v;
  t.mean_ms = s / static_cast<double>(ms.size());
  std::sort(ms.begin(), ms.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(ms.size())));
  t.p95_ms = ms[std::max<std::size_t>(rank, 1) - 1];
  return t;
}

inline double bits_per_pixel(std::uint64_t stream_bytes, int display_w, int display_h, std::size_t frames) {
  const double px = static_cast<double>(display_w) * display_h * static_cast<double>(frames);
  require(px > 0, ErrorKind::Domain, "bpp needs a non-empty video");
  return static_cast<double>(stream_bytes) * 8.0 / px;
}

// One TSV row. NaN fields print as NA.
struct MetricsRow {
  double ms_ssim = 0.0;
  double psnr = 0.0;
  double bpp = 0.0;
  std::size_t frames = 0;
  double time_ms = 0.0;

  static std::string tsv_header() { return "MSSSIM\tPSNR\tBPP\tFrames\tTime"; }

  std::string tsv() const {
    auto num = [](double v, const char* fmt) {
      if (std::isnan(v)) return std::string("NA");
      char b[64];
      std::snprintf(b, sizeof b, fmt, v);
      return std::string(b);
    };
    return num(ms_ssim, "%.4f") + "\t" + num(psnr, "%.2f") + "\t" + num(bpp, "%.4f") + "\t" + std::to_string(frames) +
           "\t" + num(time_ms, "%.1f");
  }
};

struct VideoQuality {
  double psnr = 0.0;
  double ms_ssim = 0.0;  // NaN when frames are too small for 5 scales
};

// Frame-averaged PSNR and MS-SSIM, frames scored on concurrent workers.
inline VideoQuality video_quality(const RawVideo& ref, const RawVideo& test, int workers = default_workers()) {
  if (ref.frames.size() != test.frames.size())
    fail(ErrorKind::Shape, "frame counts differ: " + std::to_string(ref.frames.size()) + " vs " +
                               std::to_string(test.frames.size()));
  require(!ref.frames.empty(), ErrorKind::Domain, "no frames to compare");
  const std::size_t n = ref.frames.size();
  for (std::size_t i = 0; i < n; ++i) require_same_dims(ref.frames[i], test.frames[i]);
  const bool msssim_ok = ref.width >= ms_ssim_min_dim(5) && ref.height >= ms_ssim_min_dim(5);
  std::vector<double> p(n), m(n);
  parallel_for(n, workers, [&](std::size_t i) {
    p[i] = psnr(ref.frames[i], test.frames[i]);
    m[i] = msssim_ok ? ms_ssim(ref.frames[i], test.frames[i]) : 0.0;
  });
  VideoQuality q;
  for (std::size_t i = 0; i < n; ++i) {
    q.psnr += p[i];
    q.ms_ssim += m[i];
  }
  q.psnr /= static_cast<double>(n);
  q.ms_ssim = msssim_ok ? q.ms_ssim / static_cast<double>(n) : std::nan("");
  return q;
}

}  // namespace mnvc
