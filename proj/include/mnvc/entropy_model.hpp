#pragma once

// Quantized Gaussian entropy model: the log-scale index n and the static
// integer CDF table attached to each n.
//
// Tables must be identical on sender and receiver, so nothing here calls
// into libm on the table-building path. exp() and Phi() are evaluated with
// fixed series using only IEEE-754 +, -, *, / (build with
// -ffp-contract=off):
//
//   exp(x): x = k*ln2 + r with Cody-Waite split, |r| <= ln2/2, degree-16
//           Taylor polynomial, then ldexp. Relative error < 1e-15.
//   erf(x): erf(x) = 2/sqrt(pi) * exp(-x^2) * sum_n 2^n x^(2n+1) / (2n+1)!!
//           for |x| < 6 (all terms positive, no cancellation), +-1 beyond.
//           Absolute error < 1e-14 over the whole line.
//   Phi(z) = (1 + erf(z / sqrt 2)) / 2.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

#include "mnvc/error.hpp"

namespace mnvc {

inline constexpr int kAlphabetSize = 256;
inline constexpr int kSymbolMin = -128;
inline constexpr int kSymbolMax = 127;
inline constexpr std::uint32_t kProbBits = 16;
inline constexpr std::uint32_t kProbTotal = 1u << kProbBits;
inline constexpr int kNumScaleIndices = 256;

struct ScaleQuantParams {
  double gamma = 32.0;
  int theta = 70;

  bool operator==(const ScaleQuantParams&) const = default;

  void validate() const {
    require(std::isfinite(gamma) && gamma > 0.0, ErrorKind::Config, "gamma must be positive");
  }
};

namespace detail {

inline double det_exp(double x) {
  if (x < -745.0) return 0.0;
  require(x < 709.0, ErrorKind::Domain, "det_exp overflow");
  constexpr double kInvLn2 = 1.4426950408889634;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  const double k = std::floor(x * kInvLn2 + 0.5);
  const double r = (x - k * kLn2Hi) - k * kLn2Lo;
  double p = 1.0;
  for (int i = 16; i >= 1; --i) p = 1.0 + p * r / static_cast<double>(i);
  return std::ldexp(p, static_cast<int>(k));
}

inline double det_erf(double x) {
  const double ax = x < 0 ? -x : x;
  if (ax >= 6.0) return x < 0 ? -1.0 : 1.0;
  constexpr double kTwoOverSqrtPi = 1.1283791670955126;
  const double x2 = ax * ax;
  double term = ax;
  double sum = ax;
  for (int n = 1; n < 400; ++n) {
    term = term * 2.0 * x2 / static_cast<double>(2 * n + 1);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  const double v = kTwoOverSqrtPi * det_exp(-x2) * sum;
  const double clamped = v > 1.0 ? 1.0 : v;
  return x < 0 ? -clamped : clamped;
}

}  // namespace detail

// Standard normal CDF, platform-independent.
inline double gaussian_cdf(double z) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  return 0.5 * (1.0 + detail::det_erf(z * kInvSqrt2));
}

inline int clamp_scale_index(double v) {
  if (v < 0.0) return 0;
  if (v > 255.0) return 255;
  return static_cast<int>(v);
}

// n = clamp(floor(gamma * ln_sigma) + theta, 0, 255), starting from ln(sigma).
inline int quantize_log_scale_from_log(double ln_sigma, const ScaleQuantParams& p) {
  return clamp_scale_index(std::floor(p.gamma * ln_sigma) + p.theta);
}

inline int quantize_log_scale(double sigma, const ScaleQuantParams& p = {}) {
  if (!(sigma > 0.0)) fail(ErrorKind::Domain, "sigma must be positive");
  return quantize_log_scale_from_log(std::log(sigma), p);
}

// Representative scale of bin n: exp((n - theta + 0.5) / gamma).
inline double dequantize_log_scale(int n, const ScaleQuantParams& p = {}) {
  require(n >= 0 && n < kNumScaleIndices, ErrorKind::Domain, "scale index out of [0,255]");
  return detail::det_exp((n - p.theta + 0.5) / p.gamma);
}

// Probability of each symbol -128..127 under a zero-mean Gaussian with unit
// quantization bins; the two end bins absorb the tails.
inline std::array<double, kAlphabetSize> gaussian_bin_probabilities(double sigma) {
  std::array<double, kAlphabetSize> p{};
  for (int b = 0; b < kAlphabetSize; ++b) {
    const int s = b + kSymbolMin;
    const double hi = (s == kSymbolMax) ? 1.0 : gaussian_cdf((s + 0.5) / sigma);
    const double lo = (s == kSymbolMin) ? 0.0 : gaussian_cdf((s - 0.5) / sigma);
    p[b] = hi - lo;
  }
  return p;
}

// Bin counts before the >= 1 floor and the sum correction.
inline std::array<std::int64_t, kAlphabetSize> gaussian_bin_counts(int n, const ScaleQuantParams& p = {}) {
  const auto prob = gaussian_bin_probabilities(dequantize_log_scale(n, p));
  std::array<std::int64_t, kAlphabetSize> counts{};
  for (int b = 0; b < kAlphabetSize; ++b) counts[b] = static_cast<std::int64_t>(std::floor(prob[b] * kProbTotal + 0.5));
  return counts;
}

struct CdfTable {
  int n_index = 0;
  std::array<std::uint32_t, kAlphabetSize + 1> cdf{};  // cdf[0] = 0, cdf[256] = 65536
  int mps = 0;                                         // bin with the largest mass

  std::uint32_t mass(int bin) const { return cdf[bin + 1] - cdf[bin]; }
  std::uint32_t symbol_mass(int symbol) const { return mass(symbol - kSymbolMin); }

  bool operator==(const CdfTable&) const = default;

  void validate() const {
    require(cdf[0] == 0 && cdf[kAlphabetSize] == kProbTotal, ErrorKind::Validation, "cdf must span [0, 65536]");
    for (int b = 0; b < kAlphabetSize; ++b)
      require(cdf[b + 1] > cdf[b], ErrorKind::Validation, "every cdf bin must have mass >= 1");
    require(mps >= 0 && mps < kAlphabetSize, ErrorKind::Validation, "mps out of range");
    for (int b = 0; b < kAlphabetSize; ++b)
      require(mass(b) <= mass(mps), ErrorKind::Validation, "mps is not the largest bin");
  }

  // Builds a table from arbitrary positive masses summing to 65536.
  static CdfTable from_masses(std::span<const std::uint32_t> masses, int n_index = 0) {
    require(masses.size() == kAlphabetSize, ErrorKind::Validation, "need 256 masses");
    CdfTable t;
    t.n_index = n_index;
    std::uint32_t best = 0;
    for (int b = 0; b < kAlphabetSize; ++b) {
      t.cdf[b + 1] = t.cdf[b] + masses[b];
      if (masses[b] > best) {
        best = masses[b];
        t.mps = b;
      }
    }
    t.validate();
    return t;
  }

  double entropy_bits() const {
    double h = 0.0;
    for (int b = 0; b < kAlphabetSize; ++b) {
      double q = static_cast<double>(mass(b)) / kProbTotal;
      h -= q * std::log2(q);
    }
    return h;
  }
};

inline CdfTable build_cdf_table(int n, const ScaleQuantParams& p = {}) {
  auto counts = gaussian_bin_counts(n, p);
  std::int64_t sum = 0;
  int largest = 0;
  for (int b = 0; b < kAlphabetSize; ++b) {
    counts[b] = std::max<std::int64_t>(counts[b], 1);
    sum += counts[b];
    if (counts[b] > counts[largest]) largest = b;
  }
  counts[largest] += static_cast<std::int64_t>(kProbTotal) - sum;
  require(counts[largest] >= 1, ErrorKind::Validation, "largest-bin correction underflowed");
  std::array<std::uint32_t, kAlphabetSize> masses{};
  for (int b = 0; b < kAlphabetSize; ++b) masses[b] = static_cast<std::uint32_t>(counts[b]);
  return CdfTable::from_masses(masses, n);
}

// The 256 tables shared by sender and receiver; derived from
// ScaleQuantParams alone, never transmitted.
class TableSet {
 public:
  explicit TableSet(const ScaleQuantParams& params = {}) : params_(params) {
    params_.validate();
    tables_.reserve(kNumScaleIndices);
    for (int n = 0; n < kNumScaleIndices; ++n) tables_.push_back(build_cdf_table(n, params_));
  }

  // Arbitrary tables (tests, alternative models); must hold 256 entries.
  static TableSet from_tables(std::vector<CdfTable> tables, const ScaleQuantParams& params = {}) {
    require(tables.size() == kNumScaleIndices, ErrorKind::Validation, "a table set holds 256 tables");
    for (const auto& t : tables) t.validate();
    TableSet set(params, std::move(tables));
    return set;
  }

  const CdfTable& operator[](std::size_t n) const { return tables_[n]; }
  const ScaleQuantParams& params() const { return params_; }
  std::size_t size() const { return tables_.size(); }
  std::size_t byte_size() const { return tables_.size() * (kAlphabetSize + 1) * sizeof(std::uint32_t); }

  // Debug dump: per n, 257 little-endian u32 cdf values.
  void dump(std::ostream& os) const {
    for (const auto& t : tables_)
      for (std::uint32_t v : t.cdf) {
        const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                           static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
        os.write(b, 4);
      }
  }

 private:
  TableSet(const ScaleQuantParams& params, std::vector<CdfTable> tables)
      : params_(params), tables_(std::move(tables)) {}

  ScaleQuantParams params_;
  std::vector<CdfTable> tables_;
};

// Process-wide table sets, built once per parameter pair.
inline const TableSet& shared_table_set(const ScaleQuantParams& p) {
  static std::mutex mu;
  static std::map<std::pair<double, int>, std::unique_ptr<const TableSet>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[{p.gamma, p.theta}];
  if (!slot) slot = std::make_unique<const TableSet>(p);
  return *slot;
}

}  // namespace mnvc
