// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "gradcheck/gradcheck.hpp"
#include "model/nn.hpp"
#include "tensor/ops.hpp"
#include "tensor/rng.hpp"

using namespace semcc;
using Tf = Tensor<float>;
using Td = Tensor<double>;

namespace {

Td param(Shape s, std::vector<double> v) {
  Td t(std::move(s), std::move(v));
  t.set_requires_grad(true);
  return t;
}

Td random(Shape s, CounterRng& rng, bool grad = true) {
  Td t(std::move(s));
  for (auto& v : t.data()) v = rng.normal();
  t.set_requires_grad(grad);
  return t;
}

}  // namespace

TEST(Linear, IdentityAndPermutation) {
  const Tf x({1, 2}, {1, 2});
  const Tf eye({2, 2}, {1, 0, 0, 1});
  const Tf zero({2}, {0, 0});
  Tf y = linear(x, eye, zero);
  EXPECT_EQ(y[0], 1.0f);
  EXPECT_EQ(y[1], 2.0f);
  const Tf perm({2, 2}, {0, 1, 1, 0});
  const Tf one({2}, {1, 1});
  // x = (1, 0): the swap moves the 1 to the second output, then the bias adds 1.
  y = linear(Tf({1, 2}, {1, 0}), perm, one);
  EXPECT_EQ(y[0], 1.0f);
  EXPECT_EQ(y[1], 2.0f);
}

TEST(Linear, ShapeMismatchNamesBothShapes) {
  try {
    linear(Tf({1, 3}), Tf({2, 2}), Tf());
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[1,3]"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("[2,2]"), std::string::npos) << e.what();
  }
}

TEST(Linear, WeightGradientIsOuterProduct) {
  CounterRng rng(1);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  Td x = random({3, 4}, rng, false), w = random({2, 4}, rng);
  backward(sum(linear(x, w, Td())));
  // d sum / dW[o, i] = sum_rows x[r, i]
  for (int o = 0; o < 2; ++o) {
    for (int i = 0; i < 4; ++i) {
      double s = 0;
      for (int r = 0; r < 3; ++r) s += x[r * 4 + i];
      EXPECT_NEAR(w.grad()[o * 4 + i], s, 1e-12);
    }
  }
}

TEST(Conv2d, IdentityAndCounting) {
  CounterRng rng(2);
  Tf x({2, 3, 3});
  for (auto& v : x.data()) v = static_cast<float>(rng.normal());
  Tf k({2, 2, 1, 1}, {1, 0, 0, 1});
  Tf y = conv2d(x, k, Tf(), 1, 0);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
  Tf ones = Tf::ones({1, 5, 5});
  Tf y9 = conv2d(ones, Tf::ones({1, 1, 3, 3}), Tf(), 1, 1);
  EXPECT_EQ(y9[2 * 5 + 2], 9.0f);
  EXPECT_EQ(y9[0], 4.0f);  // zero padding at the corner
  Tf yr = conv2d(ones, Tf::ones({1, 1, 3, 3}), Tf(), 1, 1, Padding::kReplicate);
  EXPECT_EQ(yr[0], 9.0f);
}

TEST(Conv2d, KernelLargerThanInput) {
  EXPECT_THROW(conv2d(Tf({1, 2, 2}), Tf({1, 1, 3, 3}), Tf(), 1, 0), DimensionError);
}

TEST(Attention, SingleKeyReturnsValue) {
  CounterRng rng(3);
  Td q = random({4, 3}, rng, false), k = random({1, 3}, rng, false), v = random({1, 5}, rng, false);
  Td y = attention(q, k, v);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 5; ++j) EXPECT_NEAR(y[i * 5 + j], v[j], 1e-12);
  }
}

TEST(Attention, OneHotKeysSelectMatchedRow) {
  // Brute-force softmax: with scale s the weight on the matched key is
  // e^{s/sqrt(d)} / (e^{s/sqrt(d)} + (m-1)).
  const int d = 3;
  const double s = 60.0;
  Td q({1, d}, {0, s, 0});
  Td k({3, d}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Td v({3, 2}, {1, 2, 3, 4, 5, 6});
  Td y = attention(q, k, v);
  const double e = std::exp(s / std::sqrt(3.0));
  const double w = e / (e + 2), r = 1 / (e + 2);
  EXPECT_NEAR(y[0], w * 3 + r * (1 + 5), 1e-9);
  EXPECT_NEAR(y[1], w * 4 + r * (2 + 6), 1e-9);
}

TEST(Attention, UniformScoresGiveRowMean) {
  Td q({2, 2}, {0, 0, 0, 0});
  Td k({3, 2}, {1, 2, 3, 4, 5, 6});
  Td v({3, 1}, {1, 2, 6});
  Td y = attention(q, k, v);
  EXPECT_NEAR(y[0], 3.0, 1e-12);
  EXPECT_NEAR(y[1], 3.0, 1e-12);
}

TEST(Attention, EmptyContextIsRejected) {
  // Extents must be positive, so an empty key set cannot be constructed.
  EXPECT_THROW(Td({0, 3}), DimensionError);
}

TEST(Elementwise, SigmoidSoftmaxRanges) {
  EXPECT_EQ(sigmoid(Tf({1}, {0.0f}))[0], 0.5f);
  CounterRng rng(4);
  Td x = random({7, 9}, rng, false);
  for (auto& v : x.data()) v *= 10;
  Td s = softmax(x);
  for (int i = 0; i < 7; ++i) {
    double row = 0;
    for (int j = 0; j < 9; ++j) row += s[i * 9 + j];
    EXPECT_NEAR(row, 1.0, 1e-6);
  }
  Tf big({4}, {-30.0f, -5.0f, 5.0f, 30.0f});
  Tf sg = sigmoid(big);
  for (int i = 0; i < 4; ++i) {
    EXPECT_GT(sg[i], 0.0f);
    EXPECT_LT(sg[i], 1.0f);
  }
}

TEST(Elementwise, ResizeBilinear) {
  CounterRng rng(5);
  Td x = random({2, 4, 4}, rng, false);
  Td same = resize_bilinear(x, 4, 4);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(same[i], x[i]);
  // Half-pixel 2x2 -> 4x4: output corner (0,0) maps to source (-0.25,-0.25),
  // clamped to the corner pixel.
  Td s({1, 2, 2}, {1, 2, 3, 4});
  Td up = resize_bilinear(s, 4, 4);
  EXPECT_NEAR(up[0], 1.0, 1e-12);
  EXPECT_NEAR(up[3], 2.0, 1e-12);
  EXPECT_NEAR(up[12], 3.0, 1e-12);
  EXPECT_NEAR(up[15], 4.0, 1e-12);
  // Interior sample (1,1) -> source (0.25, 0.25).
  EXPECT_NEAR(up[5], 1 * 0.5625 + 2 * 0.1875 + 3 * 0.1875 + 4 * 0.0625, 1e-12);
  EXPECT_THROW(resize_bilinear(s, 0, 4), DimensionError);
}

TEST(Lora, ZeroBIsBitwiseBase) {
  CounterRng rng(6);
  Tf x({5, 8}), w({6, 8}), b({6}), a({4, 8}), bz({6, 4});
  for (auto* t : {&x, &w, &b, &a}) {
    for (auto& v : t->data()) v = static_cast<float>(rng.normal());
  }
  ForwardCtx ctx;
  const Tf base = linear(x, w, b);
  const Tf y = lora_linear(x, w, b, a, bz, 32.0, 0.05, ctx);
  ASSERT_EQ(base.numel(), y.numel());
  EXPECT_EQ(std::memcmp(base.ptr(), y.ptr(), base.numel() * sizeof(float)), 0);
}

TEST(Lora, ScalingIsAlphaOverRank) {
  // r = 16, alpha = 32: delta = 2 * B A x.
  const int r = 16;
  Td x({1, 16}), w({16, 16}), a({r, 16}), b({16, r});
  for (int i = 0; i < 16; ++i) {
    x.ptr()[i] = 1.0;
    a.ptr()[i * 16 + i] = 1.0;
    b.ptr()[i * r + i] = 1.0;
  }
  ForwardCtx ctx;
  Td y = lora_linear(x, w, Td(), a, b, 32.0, 0.0, ctx);
  for (int i = 0; i < 16; ++i) EXPECT_NEAR(y[i], 2.0, 1e-12);
}

TEST(Lora, GradientsReachAdaptersButNotBase) {
  CounterRng rng(7);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  Td x = random({3, 5}, rng, false), w = random({4, 5}, rng, false), a = random({2, 5}, rng),
     b = random({4, 2}, rng);
  ForwardCtx ctx;
  ctx.training = true;
  backward(sum(lora_linear(x, w, Td(), a, b, 4.0, 0.0, ctx)));
  EXPECT_FALSE(w.has_grad());
  EXPECT_TRUE(a.has_grad());
  EXPECT_TRUE(b.has_grad());
}

TEST(Lora, RankAboveExtentIsConfigError) {
  ParameterStore<float> ps(0);
  ProjOptions po;
  po.lora_rank = 9;
  po.lora_alpha = 18;
  EXPECT_THROW(Proj<float>(ps, "p", 8, 4, po), ConfigError);
}

TEST(Backward, SumAndSquare) {
  Tape<double> tape;
  TapeScope<double> scope(tape);
  Td x = param({3}, {1, -2, 3});
  backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
  x.zero_grad();
  backward(sum(mul(x, x)));
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], -4.0);
  EXPECT_EQ(x.grad()[2], 6.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tape<double> tape;
  TapeScope<double> scope(tape);
  Td x = param({2}, {1, 2});
  EXPECT_THROW(backward(scale(x, 2.0)), ContractError);
}

TEST(Backward, AccumulatesAcrossConsumers) {
  // loss = sum(sigmoid(x)) + sum(x * x): x feeds two pathways.
  CounterRng rng(8);
  Td x = random({6}, rng);
  auto loss = [&]() { return add(sum(sigmoid(x)), sum(mul(x, x))); };
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    backward(loss());
  }
  for (int i = 0; i < 6; ++i) {
    const double s = 1 / (1 + std::exp(-x[i]));
    EXPECT_NEAR(x.grad()[i], s * (1 - s) + 2 * x[i], 1e-12);
  }
  CounterRng probe(9);
  x.zero_grad();
  EXPECT_LT(gradient_error<double>(loss, {x}, 1e-6, 0, probe), 1e-8);
}

TEST(Backward, UnreachableTensorsStayWithoutGrad) {
  Tape<double> tape;
  TapeScope<double> scope(tape);
  Td a = param({2}, {1, 2}), b = param({2}, {3, 4});
  Td unused = mul(b, b);
  backward(sum(a));
  EXPECT_FALSE(b.has_grad());
}

TEST(Backward, RandomCompositeMatchesFiniteDifferences) {
  CounterRng rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    Td x = random({4, 5}, rng), w = random({3, 5}, rng), g = random({3}, rng), b = random({3}, rng);
    auto loss = [&]() { return mean(gelu(layer_norm(linear(x, w, Td()), g, b))); };
    EXPECT_LT(gradient_error<double>(loss, {x, w, g, b}, 1e-6, 0, rng), 1e-6);
  }
}

TEST(Dropout, DeterministicPerKey) {
  Tf x = Tf::ones({100});
  Tf a = dropout(x, 0.5, {1, 2}), b = dropout(x, 0.5, {1, 2}), c = dropout(x, 0.5, {1, 3});
  EXPECT_EQ(std::memcmp(a.ptr(), b.ptr(), 100 * sizeof(float)), 0);
  EXPECT_NE(std::memcmp(a.ptr(), c.ptr(), 100 * sizeof(float)), 0);
  for (float v : a.data()) EXPECT_TRUE(v == 0.0f || v == 2.0f);
}

TEST(TensorFile, RoundTripAndHeader) {
  const auto path = std::filesystem::temp_directory_path() / "semcc_tensor_test.bin";
  Tf t({2, 3}, {1, -2, 3.5f, 0, 1e-8f, 7});
  save_tensor(path.string(), t);
  std::ifstream is(path, std::ios::binary);
  char magic[8];
  is.read(magic, 8);
  EXPECT_EQ(std::string(magic, 8), "SEMCCT01");
  std::uint32_t rank = 0, e0 = 0, e1 = 0;
  is.read(reinterpret_cast<char*>(&rank), 4);
  is.read(reinterpret_cast<char*>(&e0), 4);
  is.read(reinterpret_cast<char*>(&e1), 4);
  EXPECT_EQ(rank, 2u);
  EXPECT_EQ(e0, 2u);
  EXPECT_EQ(e1, 3u);
  Tf back = load_tensor<float>(path.string());
  EXPECT_EQ(back.shape(), t.shape());
  EXPECT_EQ(std::memcmp(back.ptr(), t.ptr(), t.numel() * sizeof(float)), 0);
  std::filesystem::remove(path);
}

TEST(Gradcheck, QuickDoublePrecisionSweep) {
  GradcheckOptions opts;
  opts.instances = 3;
  opts.seed = 99;
  for (const auto& r : run_gradcheck<double>(opts)) {
    EXPECT_EQ(r.failures, 0) << r.name << " worst " << r.worst;
  }
}
