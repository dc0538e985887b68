#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "acconet/archive.hpp"
#include "acconet/layers.hpp"
#include "oracles/reference.hpp"
#include "support.hpp"

namespace acconet {
namespace {

using testing_support::central_diff;
using testing_support::Gen;
using testing_support::rel_err;

double dot(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void randomize(nn::Parameter& p, Gen& gen, double std = 0.5) {
  for (auto& v : p.value.values()) v = gen.normal(std);
}

TEST(TensorTest, ShapeErrorNamesTheDimension) {
  Tensor t(2, 3, 8, 8);
  try {
    expect_shape(t, Shape{2, 3, 8, 4}, "probe");
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("width"), std::string::npos) << e.what();
  }
  try {
    expect_shape(t, Shape{2, 4, 8, 8}, "probe");
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("channels"), std::string::npos);
  }
  EXPECT_NO_THROW(expect_shape(t, Shape{2, 3, 8, 8}, "probe"));
}

TEST(TensorTest, ArithmeticIsElementwise) {
  Gen gen(1);
  const Tensor a = gen.normal_tensor({1, 2, 3, 3});
  const Tensor b = gen.normal_tensor({1, 2, 3, 3});
  const Tensor s = a + b;
  const Tensor d = a - b;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_DOUBLE_EQ(s[i], a[i] + b[i]);
    EXPECT_DOUBLE_EQ(d[i], a[i] - b[i]);
  }
  EXPECT_THROW(a + Tensor(1, 2, 3, 4), ShapeError);
}

class ConvOracleTest : public ::testing::TestWithParam<std::tuple<int, int>> {};

TEST_P(ConvOracleTest, MatchesLoopReference) {
  const auto [dilation, size] = GetParam();
  Gen gen(100 + dilation * 10 + size);
  nn::Conv2d conv("probe", nn::ConvSpec{3, 5, 3, dilation});
  randomize(conv.weight, gen);
  randomize(conv.bias, gen);
  const Tensor x = gen.normal_tensor({2, 3, size, size});
  const Tensor y = conv.forward(x);
  const Tensor ref = oracle::conv2d(x, conv);
  ASSERT_EQ(y.shape(), ref.shape());
  EXPECT_EQ(y.shape(), (Shape{2, 5, size, size}));
  EXPECT_LT(max_abs_diff(y, ref), 1e-10);
}

INSTANTIATE_TEST_SUITE_P(Rates, ConvOracleTest,
                         ::testing::Combine(::testing::Values(1, 2, 3, 4, 5),
                                            ::testing::Values(2, 4, 7, 16)));

TEST(ConvTest, LargeInputIsTiledConsistently) {
  // More pixels than one im2col tile holds: results must still be exact.
  Gen gen(7);
  nn::Conv2d conv("big", nn::ConvSpec{2, 3, 3, 2});
  randomize(conv.weight, gen);
  randomize(conv.bias, gen);
  const Tensor x = gen.normal_tensor({1, 2, 260, 260});
  EXPECT_LT(max_abs_diff(conv.forward(x), oracle::conv2d(x, conv)), 1e-10);
}

TEST(ConvTest, BackwardMatchesFiniteDifferences) {
  Gen gen(11);
  nn::Conv2d conv("g", nn::ConvSpec{2, 3, 3, 2});
  randomize(conv.weight, gen);
  randomize(conv.bias, gen);
  Tensor x = gen.normal_tensor({2, 2, 5, 5});
  const Tensor probe = gen.normal_tensor({2, 3, 5, 5});
  auto loss = [&] { return dot(conv.forward(x), probe); };
  conv.weight.zero_grad();
  conv.bias.zero_grad();
  const Tensor dx = conv.backward(x, probe);
  EXPECT_TRUE(conv.weight.touched);
  for (std::size_t i = 0; i < x.size(); i += 3) {
    EXPECT_LT(rel_err(dx[i], central_diff(loss, x[i])), 1e-5) << "x[" << i << "]";
  }
  for (std::size_t i = 0; i < conv.weight.value.size(); ++i) {
    EXPECT_LT(rel_err(conv.weight.grad[i], central_diff(loss, conv.weight.value[i])), 1e-5);
  }
  for (std::size_t i = 0; i < conv.bias.value.size(); ++i) {
    EXPECT_LT(rel_err(conv.bias.grad[i], central_diff(loss, conv.bias.value[i])), 1e-5);
  }
}

TEST(BatchNormTest, TrainingAndEvalMatchReference) {
  Gen gen(21);
  nn::BatchNorm2d bn("bn", 3);
  randomize(bn.gamma, gen);
  randomize(bn.beta, gen);
  const Tensor x = gen.normal_tensor({2, 3, 4, 4}, 2.0);
  const Tensor y = bn.forward(x, true, nullptr);
  EXPECT_LT(max_abs_diff(y, oracle::batch_norm(x, bn, true)), 1e-10);
  // running statistics moved towards the batch statistics
  EXPECT_NE(bn.running_mean.value[0], 0.0);
  const Tensor z = bn.forward(x, false, nullptr);
  EXPECT_LT(max_abs_diff(z, oracle::batch_norm(x, bn, false)), 1e-10);
}

TEST(BatchNormTest, BackwardMatchesFiniteDifferences) {
  Gen gen(22);
  for (bool training : {true, false}) {
    nn::BatchNorm2d bn("bn", 2);
    randomize(bn.gamma, gen);
    randomize(bn.beta, gen);
    bn.running_var.value.fill(1.7);
    Tensor x = gen.normal_tensor({2, 2, 3, 3});
    const Tensor probe = gen.normal_tensor({2, 2, 3, 3});
    auto loss = [&] { return dot(bn.forward(x, training, nullptr), probe); };
    nn::BatchNorm2d::Trace tr;
    bn.forward(x, training, &tr);
    bn.gamma.zero_grad();
    bn.beta.zero_grad();
    const Tensor dx = bn.backward(tr, probe);
    for (std::size_t i = 0; i < x.size(); ++i) {
      EXPECT_LT(rel_err(dx[i], central_diff(loss, x[i])), 1e-5) << training;
    }
    for (int c = 0; c < 2; ++c) {
      EXPECT_LT(rel_err(bn.gamma.grad[c], central_diff(loss, bn.gamma.value[c])), 1e-5);
      EXPECT_LT(rel_err(bn.beta.grad[c], central_diff(loss, bn.beta.value[c])), 1e-5);
    }
  }
}

TEST(PoolTest, MaxPoolMatchesReferenceAndRejectsOddSizes) {
  Gen gen(31);
  const Tensor x = gen.normal_tensor({2, 3, 6, 8});
  EXPECT_LT(max_abs_diff(nn::max_pool2(x, nullptr), oracle::max_pool2(x)), 1e-300);
  EXPECT_THROW(nn::max_pool2(Tensor(1, 1, 5, 4), nullptr), ShapeError);
}

TEST(PoolTest, BackwardRoutesToArgmax) {
  Gen gen(32);
  const Tensor x = gen.normal_tensor({1, 2, 4, 4});
  nn::PoolIndex idx;
  const Tensor y = nn::max_pool2(x, &idx);
  const Tensor dy = gen.normal_tensor(y.shape());
  const Tensor dx = nn::max_pool2_backward(idx, dy);
  EXPECT_NEAR(sum(dx), sum(dy), 1e-12);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(x[idx.argmax[i]], y[i]);
}

TEST(ResizeTest, BilinearMatchesReference) {
  Gen gen(41);
  const Tensor x = gen.normal_tensor({1, 2, 4, 5});
  for (auto [oh, ow] : {std::pair{8, 10}, std::pair{3, 7}, std::pair{16, 16}, std::pair{4, 5}}) {
    EXPECT_LT(max_abs_diff(nn::resize_bilinear(x, oh, ow), oracle::bilinear(x, oh, ow)), 1e-12);
  }
}

TEST(ResizeTest, ConstantFieldStaysConstant) {
  const Tensor x(1, 3, 4, 4, 0.37);
  const Tensor y = nn::resize_bilinear(x, 8, 8);
  for (double v : y.values()) EXPECT_NEAR(v, 0.37, 1e-15);
}

TEST(ResizeTest, BackwardIsTheAdjoint) {
  Gen gen(42);
  const Tensor x = gen.normal_tensor({1, 2, 4, 6});
  const Tensor dy = gen.normal_tensor({1, 2, 9, 5});
  const Tensor y = nn::resize_bilinear(x, 9, 5);
  const Tensor dx = nn::resize_bilinear_backward(dy, x.shape());
  EXPECT_NEAR(dot(y, dy), dot(x, dx), 1e-10);
}

TEST(DeconvTest, MatchesReferenceAndGradients) {
  Gen gen(51);
  nn::Deconv2x2 d("dc", 3, 2);
  randomize(d.weight, gen);
  randomize(d.bias, gen);
  Tensor x = gen.normal_tensor({2, 3, 3, 3});
  const Tensor y = d.forward(x);
  EXPECT_EQ(y.shape(), (Shape{2, 2, 6, 6}));
  EXPECT_LT(max_abs_diff(y, oracle::deconv2x2(x, d)), 1e-12);
  const Tensor probe = gen.normal_tensor(y.shape());
  auto loss = [&] { return dot(d.forward(x), probe); };
  d.weight.zero_grad();
  d.bias.zero_grad();
  const Tensor dx = d.backward(x, probe);
  for (std::size_t i = 0; i < x.size(); ++i)
    EXPECT_LT(rel_err(dx[i], central_diff(loss, x[i])), 1e-5);
  for (std::size_t i = 0; i < d.weight.value.size(); ++i)
    EXPECT_LT(rel_err(d.weight.grad[i], central_diff(loss, d.weight.value[i])), 1e-5);
}

TEST(ActivationTest, SigmoidIsStableAndCentred) {
  const Tensor x(1, 1, 1, 3);
  Tensor in = x;
  in[0] = 0.0;
  in[1] = 800.0;
  in[2] = -800.0;
  const Tensor y = nn::sigmoid(in);
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], 1.0);
  EXPECT_GE(y[2], 0.0);
  EXPECT_TRUE(all_finite(y));
}

TEST(ConcatTest, SplitInvertsConcat) {
  Gen gen(61);
  const Tensor a = gen.normal_tensor({2, 3, 2, 2});
  const Tensor b = gen.normal_tensor({2, 1, 2, 2});
  const Tensor c = nn::concat_channels({&a, &b});
  EXPECT_EQ(c.c(), 4);
  const auto parts = nn::split_channels(c, {3, 1});
  EXPECT_EQ(max_abs_diff(parts[0], a), 0.0);
  EXPECT_EQ(max_abs_diff(parts[1], b), 0.0);
}

TEST(ArchiveTest, RoundTripsBitExactly) {
  testing_support::TempDir dir("archive");
  Gen gen(71);
  io::TensorArchive ar;
  ar.meta["k"] = "v with spaces";
  ar.tensors["a"] = gen.normal_tensor({1, 2, 3, 4});
  ar.tensors["b"] = Tensor(1, 1, 1, 1, -0.0);
  const auto path = dir.path() / "x.bin";
  io::save_archive(path, ar);
  const io::TensorArchive back = io::load_archive(path);
  EXPECT_EQ(back.meta, ar.meta);
  ASSERT_EQ(back.tensors.size(), 2u);
  const Tensor& a = back.tensors.at("a");
  EXPECT_EQ(std::memcmp(a.data(), ar.tensors["a"].data(), a.size() * sizeof(double)), 0);
}

TEST(ArchiveTest, RejectsGarbage) {
  testing_support::TempDir dir("archive_bad");
  const auto path = dir.path() / "bad.bin";
  std::ofstream(path) << "not an archive";
  EXPECT_THROW(io::load_archive(path), io::ArchiveError);
  EXPECT_THROW(io::load_archive(dir.path() / "missing.bin"), io::ArchiveError);
}

}  // namespace
}  // namespace acconet
