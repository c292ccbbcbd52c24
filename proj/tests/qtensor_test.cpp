#include "mnvc/qtensor.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"

namespace mnvc {
namespace {

using test::float_conv_reference;
using test::random_layer;
using test::random_tensor;

TEST(QuantTensor, RequantizeOfDequantizeIsIdentity) {
  std::mt19937 rng(3);
  auto t = random_tensor(rng, 3, 5, 7, {0.037, -11});
  auto back = QuantTensor::quantize(t.dequantize(), 3, 5, 7, t.params);
  EXPECT_EQ(back, t);
}

TEST(QuantTensor, ValidateCatchesBadShapes) {
  QuantTensor t{2, 2, 2, {}, std::vector<std::int8_t>(7)};
  EXPECT_THROW(t.validate(), Error);
  QuantTensor u = QuantTensor::filled(1, 1, 1, {0.0, 0});
  EXPECT_THROW(u.validate(), Error);
}

TEST(Requant, MatchesRealMultiplier) {
  for (double m : {1.0, 0.5, 0.3, 1e-3, 7.25}) {
    auto r = Requant::from_real(m);
    EXPECT_NEAR(r.real(), m, m * 1e-9) << m;
  }
  // Below 2^-31 the shift saturates at 62 and precision degrades gracefully.
  EXPECT_EQ(Requant::from_real(1e-12).shift, 62);
  EXPECT_NEAR(Requant::from_real(1e-12).real(), 1e-12, std::ldexp(1.0, -62));
  EXPECT_EQ(Requant::from_real(1.0).apply(-7), -7);
  // Round half up: 5 * 0.5 = 2.5 -> 3, -5 * 0.5 = -2.5 -> -2.
  EXPECT_EQ(Requant::from_real(0.5).apply(5), 3);
  EXPECT_EQ(Requant::from_real(0.5).apply(-5), -2);
}

TEST(ConvQ, IdentityKernelReturnsInput) {
  std::mt19937 rng(1);
  auto in = random_tensor(rng, 1, 4, 4, {1.0, 0});
  ConvLayerSpec L;
  L.in_channels = L.out_channels = 1;
  L.input = L.output = {1.0, 0};
  L.weights = {1};
  L.weight_scales = {1.0};
  L.biases = {0};
  L.derive_requant();
  EXPECT_EQ(conv_q(in, L), in);
}

TEST(ConvQ, StrideTwoHalvesWithCeil) {
  std::mt19937 rng(2);
  auto L = random_layer(rng, 2, 3, 3, 2, ConvMode::Forward, Activation::None);
  auto out = conv_q(random_tensor(rng, 2, 8, 8, L.input), L);
  EXPECT_EQ(out.height, 4);
  EXPECT_EQ(out.width, 4);
  auto odd = conv_q(random_tensor(rng, 2, 7, 9, L.input), L);
  EXPECT_EQ(odd.height, 4);
  EXPECT_EQ(odd.width, 5);
}

TEST(ConvQ, ForwardThenTransposedRestoresDims) {
  std::mt19937 rng(5);
  auto down = random_layer(rng, 3, 4, 5, 2, ConvMode::Forward, Activation::Relu);
  auto up = random_layer(rng, 4, 3, 5, 2, ConvMode::Transposed, Activation::None);
  up.input = down.output;
  up.derive_requant();
  auto x = random_tensor(rng, 3, 12, 20, down.input);
  auto y = conv_q(conv_q(x, down), up);
  EXPECT_EQ(y.height, 12);
  EXPECT_EQ(y.width, 20);
}

TEST(ConvQ, MatchesFloatOracleWithinOneStep) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    auto L = random_layer(rng);
    std::uniform_int_distribution<int> dim(1, 11);
    auto in = random_tensor(rng, L.in_channels, dim(rng), dim(rng), L.input);
    auto got = conv_q(in, L);
    auto want = float_conv_reference(in, L);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) ASSERT_LE(std::abs(got.data[i] - want[i]), 1) << "trial " << trial;
  }
}

TEST(ConvQ, UnitScaleIsExactIntegerConvolution) {
  std::mt19937 rng(13);
  for (auto mode : {ConvMode::Forward, ConvMode::Transposed}) {
    auto L = random_layer(rng, 3, 2, 3, 2, mode, Activation::None);
    L.input = L.output = {1.0, 0};
    for (auto& w : L.weights) w = static_cast<std::int8_t>(w % 3);
    std::fill(L.weight_scales.begin(), L.weight_scales.end(), 1.0);
    L.derive_requant();
    auto in = random_tensor(rng, 3, 6, 6, L.input);
    for (auto& v : in.data) v = static_cast<std::int8_t>(v % 4);
    auto got = conv_q(in, L);
    auto want = test::integer_conv_reference(in, L);
    for (std::size_t i = 0; i < want.size(); ++i)
      ASSERT_EQ(got.data[i], std::clamp<std::int64_t>(want[i], -128, 127));
  }
}

TEST(ConvQ, DeterministicAcrossWorkerCounts) {
  std::mt19937 rng(17);
  auto L = random_layer(rng, 6, 9, 5, 2, ConvMode::Transposed, Activation::Relu);
  auto in = random_tensor(rng, 6, 9, 13, L.input);
  auto a = conv_q(in, L, 1);
  EXPECT_EQ(a, conv_q(in, L, 4));
  EXPECT_EQ(a, conv_q(in, L, 1));
}

TEST(ConvQ, ReluIsIdempotent) {
  std::mt19937 rng(19);
  auto L = random_layer(rng, 4, 4, 3, 1, ConvMode::Forward, Activation::Relu);
  auto out = conv_q(random_tensor(rng, 4, 6, 6, L.input), L);
  EXPECT_EQ(relu_q(out), out);
  EXPECT_EQ(relu_q(relu_q(out)), relu_q(out));
  for (auto v : out.data) EXPECT_GE(v, L.output.zero_point);
}

TEST(ConvQ, RejectsMismatchedInput) {
  std::mt19937 rng(23);
  auto L = random_layer(rng, 4, 4, 3, 1, ConvMode::Forward, Activation::None);
  EXPECT_THROW(conv_q(random_tensor(rng, 3, 4, 4, L.input), L), Error);
  QuantParams other{L.input.scale * 2, L.input.zero_point};
  EXPECT_THROW(conv_q(random_tensor(rng, 4, 4, 4, other), L), Error);
}

TEST(ConvQ, AccumulatorGuardRejectsHugeFanIn) {
  ConvLayerSpec L;
  L.in_channels = 4000;
  L.out_channels = 1;
  L.kernel_h = L.kernel_w = 5;
  L.weights.assign(L.weight_count(), 1);
  L.weight_scales = {1.0};
  L.biases = {0};
  L.derive_requant();
  EXPECT_THROW(L.validate(), Error);
}

TEST(ConvQ, TransposedRequiresStrideTwo) {
  ConvLayerSpec L;
  L.in_channels = L.out_channels = 1;
  L.mode = ConvMode::Transposed;
  L.stride = 1;
  EXPECT_THROW(L.validate_shape(), Error);
}

TEST(ConcatQ, ShapesAndDequantizeOracle) {
  std::mt19937 rng(29);
  QuantParams p{0.05, 3};
  auto a = random_tensor(rng, 3, 4, 4, p);
  auto b = random_tensor(rng, 5, 4, 4, p);
  auto c = concat_q(a, b);
  EXPECT_EQ(c.channels, 8);
  auto da = a.dequantize(), db = b.dequantize(), dc = c.dequantize();
  da.insert(da.end(), db.begin(), db.end());
  EXPECT_EQ(dc, da);
  EXPECT_EQ(concat_q(a, QuantTensor::filled(0, 4, 4, p)), a);
}

TEST(ConcatQ, RejectsMismatch) {
  std::mt19937 rng(31);
  QuantParams p{0.05, 3};
  EXPECT_THROW(concat_q(random_tensor(rng, 1, 4, 4, p), random_tensor(rng, 1, 4, 5, p)), Error);
  EXPECT_THROW(concat_q(random_tensor(rng, 1, 4, 4, p), random_tensor(rng, 1, 4, 4, {0.06, 3})), Error);
}

TEST(AddSubQ, IdentitiesHold) {
  std::mt19937 rng(37);
  QuantParams p{0.02, -5};
  auto x = random_tensor(rng, 2, 5, 5, p);
  auto zero = QuantTensor::filled(2, 5, 5, {0.02, 9});
  EXPECT_EQ(add_q(x, zero, p), x);
  auto d = sub_q(x, x, {0.1, 4});
  for (auto v : d.data) EXPECT_EQ(v, 4);
}

TEST(AddSubQ, MatchesFloatOracleWithinOneStep) {
  std::mt19937 rng(41);
  std::uniform_real_distribution<double> sc(0.005, 0.05);
  std::uniform_int_distribution<int> zp(-40, 40);
  for (int trial = 0; trial < 50; ++trial) {
    QuantParams pa{sc(rng), zp(rng)}, pb{sc(rng), zp(rng)}, po{sc(rng) * 2, zp(rng)};
    auto a = random_tensor(rng, 2, 6, 6, pa);
    auto b = random_tensor(rng, 2, 6, 6, pb);
    for (bool subtract : {false, true}) {
      auto got = subtract ? sub_q(a, b, po) : add_q(a, b, po);
      for (std::size_t i = 0; i < a.size(); ++i) {
        double real = a.dequantize(i) + (subtract ? -1 : 1) * b.dequantize(i);
        auto want = std::clamp<std::int64_t>(round_half_up(real / po.scale) + po.zero_point, -128, 127);
        ASSERT_LE(std::abs(got.data[i] - want), 1);
      }
    }
  }
}

TEST(AddSubQ, RejectsShapeMismatch) {
  std::mt19937 rng(43);
  EXPECT_THROW(add_q(random_tensor(rng, 1, 2, 2, {}), random_tensor(rng, 2, 2, 2, {}), {}), Error);
}

TEST(RequantizeQ, MovesToNewGrid) {
  std::mt19937 rng(47);
  auto t = random_tensor(rng, 2, 3, 3, {0.1, 0});
  auto r = requantize_q(t, {0.2, 10});
  for (std::size_t i = 0; i < t.size(); ++i)
    EXPECT_LE(std::abs(r.dequantize(i) - t.dequantize(i)), 0.1 + 1e-12);
}

}  // namespace
}  // namespace mnvc
