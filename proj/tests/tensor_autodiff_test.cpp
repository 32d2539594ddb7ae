// lwisp/tests/tensor_autodiff_test.cpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>
#include <omp.h>

#include <set>

#include "lwisp/gradcheck.hpp"
#include "lwisp/kernels.hpp"
#include "lwisp/losses.hpp"
#include "lwisp/ops.hpp"
#include "test_util.hpp"

namespace lwisp {
namespace {

using testing::bit_equal;
using testing::max_abs_diff;
using testing::naive_conv;
using testing::random_tensor;

Var input(const Tensor& t) { return Var::parameter(t); }

TEST(TensorTest, ShapeInvariants) {
  EXPECT_THROW(Shape({2, 0, 3}), ShapeError);
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<Real>(3)), ShapeError);
  const Tensor t(Shape{2, 3, 4}, 1.5);
  EXPECT_EQ(t.numel(), 24);
  EXPECT_EQ(t.shape().str(), "[2x3x4]");
  EXPECT_THROW(t.reshaped(Shape{5, 5}), ShapeError);
}

TEST(ConvTest, AllOnesOverlapCount) {
  const Var x = Var::constant(Tensor(Shape{1, 1, 3, 3}, 1.0));
  const Var w = Var::constant(Tensor(Shape{1, 1, 3, 3}, 1.0));
  const Var b = Var::constant(Tensor(Shape{1}, 0.0));
  const Tensor y = conv2d(x, w, b, {1, 1, 1}).value();
  const std::vector<Real> expect{4, 6, 4, 6, 9, 6, 4, 6, 4};
  for (int i = 0; i < 9; ++i) EXPECT_EQ(y[i], expect[static_cast<size_t>(i)]);
}

TEST(ConvTest, IdentityKernel) {
  const Tensor xt = random_tensor({2, 1, 5, 4}, 3);
  const Tensor y = conv2d(Var::constant(xt), Var::constant(Tensor(Shape{1, 1, 1, 1}, 1.0)),
                          Var::constant(Tensor(Shape{1}, 0.0)))
                       .value();
  EXPECT_TRUE(bit_equal(y, xt));
}

TEST(ConvTest, DilatedCenterTapIsIdentity) {
  Tensor x(Shape{1, 1, 5, 5});
  for (int i = 0; i < 25; ++i) x[i] = i;
  Tensor w(Shape{1, 1, 3, 3}, 0.0);
  w[4] = 1.0;
  const Tensor y = conv2d(Var::constant(x), Var::constant(w), Var{}, {1, 2, 2}).value();
  EXPECT_TRUE(bit_equal(y, x));
  EXPECT_LT(max_abs_diff(y, naive_conv(x, w, nullptr, 1, 2, 2)), 1e-12);
}

// Every geometry with extents up to 7, against the direct-loop oracle.
TEST(ConvTest, MatchesDirectLoopOracleOnSmallExtents) {
  uint64_t seed = 0;
  int checked = 0;
  for (int64_t h = 1; h <= 7; ++h)
    for (int64_t w = 1; w <= 7; ++w)
      for (int64_t k : {1, 2, 3, 5, 7})
        for (int64_t dil : {1, 2})
          for (int64_t stride : {1, 2})
            for (int64_t pad : {0, 1, 2}) {
              const int64_t extent = (k - 1) * dil + 1;
              if (extent > h + 2 * pad || extent > w + 2 * pad) continue;
              const int64_t ci = 1 + static_cast<int64_t>(seed % 3);
              const int64_t co = 1 + static_cast<int64_t>((seed / 3) % 3);
              const Tensor x = random_tensor({2, ci, h, w}, ++seed);
              const Tensor wt = random_tensor({co, ci, k, k}, ++seed);
              const Tensor bt = random_tensor({co}, ++seed);
              const Tensor y = conv2d(Var::constant(x), Var::constant(wt), Var::constant(bt),
                                      {stride, pad, dil})
                                   .value();
              ASSERT_LT(max_abs_diff(y, naive_conv(x, wt, &bt, stride, pad, dil)), 1e-10)
                  << "h=" << h << " w=" << w << " k=" << k << " dil=" << dil
                  << " stride=" << stride << " pad=" << pad;
              ++checked;
            }
  EXPECT_GT(checked, 1000);
}

TEST(ConvTest, RejectsBadShapesNamingTheDimension) {
  const Var x = Var::constant(Tensor(Shape{1, 3, 4, 4}));
  try {
    conv2d(x, Var::constant(Tensor(Shape{2, 2, 3, 3})), Var{});
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("channels"), std::string::npos);
  }
  try {
    conv2d(x, Var::constant(Tensor(Shape{2, 3, 5, 5})), Var{});
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("height"), std::string::npos);
  }
  EXPECT_THROW(conv2d(x, Var::constant(Tensor(Shape{2, 3, 1, 1})),
                      Var::constant(Tensor(Shape{3}))),
               ShapeError);
}

// The blocked parallel kernels against the serial reference, including the
// two backward passes, with an odd thread count to exercise uneven splits.
TEST(KernelTest, ParallelMatchesReferenceAndIsThreadCountInvariant) {
  const auto g = kernels::ConvGeometry::make(2, 5, 11, 9, 7, 3, 3, 1, 1, 1);
  const Tensor x = random_tensor({2, 5, 11, 9}, 1);
  const Tensor w = random_tensor({7, 5, 3, 3}, 2);
  const Tensor b = random_tensor({7}, 3);
  const Tensor gy = random_tensor({2, 7, g.out_h, g.out_w}, 4);

  auto run = [&](bool reference) {
    Tensor y(Shape{2, 7, g.out_h, g.out_w}), gx(x.shape()), gw(w.shape()), gb(b.shape());
    if (reference) {
      kernels::reference::conv2d_forward(g, x.ptr(), w.ptr(), b.ptr(), y.ptr());
      kernels::reference::conv2d_backward_input(g, w.ptr(), gy.ptr(), gx.ptr());
      kernels::reference::conv2d_backward_weight(g, x.ptr(), gy.ptr(), gw.ptr(), gb.ptr());
    } else {
      kernels::conv2d_forward(g, x.ptr(), w.ptr(), b.ptr(), y.ptr());
      kernels::conv2d_backward_input(g, w.ptr(), gy.ptr(), gx.ptr());
      kernels::conv2d_backward_weight(g, x.ptr(), gy.ptr(), gw.ptr(), gb.ptr());
    }
    return std::vector<Tensor>{y, gx, gw, gb};
  };
  const auto ref = run(true);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto one = run(false);
  omp_set_num_threads(3);
  const auto three = run(false);
  omp_set_num_threads(saved);
  for (size_t i = 0; i < ref.size(); ++i) {
    EXPECT_LT(max_abs_diff(one[i], ref[i]), 1e-10) << "output " << i;
    EXPECT_TRUE(bit_equal(one[i], three[i])) << "output " << i;
  }
}

TEST(KernelTest, GemmMatchesReference) {
  const int64_t m = 9, n = 300, k = 17;
  const Tensor a = random_tensor({m, k}, 5), b = random_tensor({k, n}, 6);
  Tensor c1(Shape{m, n}, 0.5), c2(Shape{m, n}, 0.5);
  kernels::gemm_accumulate(m, n, k, a.ptr(), k, b.ptr(), n, c1.ptr(), n);
  kernels::reference::gemm_accumulate(m, n, k, a.ptr(), k, b.ptr(), n, c2.ptr(), n);
  EXPECT_LT(max_abs_diff(c1, c2), 1e-12);
}

TEST(PoolTest, GlobalAveragePool) {
  const Tensor x(Shape{1, 1, 2, 2}, std::vector<Real>{1, 2, 3, 4});
  EXPECT_EQ(global_avg_pool(Var::constant(x)).value()[0], 2.5);
  EXPECT_NEAR(global_avg_pool(Var::constant(Tensor(Shape{1, 2, 3, 3}, 0.7))).value()[1], 0.7,
              1e-15);

  const Tensor r = random_tensor({1, 3, 7, 5}, 9);
  const Tensor g = global_avg_pool(Var::constant(r)).value();
  ASSERT_EQ(g.shape(), (Shape{1, 3, 1, 1}));
  for (int64_t c = 0; c < 3; ++c) {
    Real acc = 0;
    for (int64_t h = 0; h < 7; ++h)
      for (int64_t w = 0; w < 5; ++w) acc += r.at(0, c, h, w);
    EXPECT_NEAR(g[c], acc / 35.0, 1e-14);
  }
}

TEST(PoolTest, ChannelPool) {
  Tensor x(Shape{1, 2, 2, 2});
  for (int i = 0; i < 4; ++i) {
    x[i] = 1;
    x[4 + i] = 3;
  }
  const Tensor mean = channel_pool(Var::constant(x), ChannelPoolMode::kMean).value();
  const Tensor mx = channel_pool(Var::constant(x), ChannelPoolMode::kMax).value();
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(mean[i], 2.0);
    EXPECT_EQ(mx[i], 3.0);
  }

  const Tensor r = random_tensor({2, 5, 4, 4}, 10);
  const Tensor rm = channel_pool(Var::constant(r), ChannelPoolMode::kMean).value();
  const Tensor rx = channel_pool(Var::constant(r), ChannelPoolMode::kMax).value();
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t h = 0; h < 4; ++h)
      for (int64_t w = 0; w < 4; ++w) {
        Real s = 0, m = -INFINITY;
        for (int64_t c = 0; c < 5; ++c) {
          s += r.at(n, c, h, w);
          m = std::max(m, r.at(n, c, h, w));
        }
        EXPECT_NEAR(rm.at(n, 0, h, w), s / 5, 1e-14);
        EXPECT_EQ(rx.at(n, 0, h, w), m);
      }
}

TEST(PoolTest, ChannelMaxTieGoesToLowestIndex) {
  const Var x = Var::parameter(Tensor(Shape{1, 3, 1, 1}, std::vector<Real>{2, 2, 1}));
  backward(sum(channel_pool(x, ChannelPoolMode::kMax)));
  EXPECT_EQ(x.grad()[0], 1.0);
  EXPECT_EQ(x.grad()[1], 0.0);
}

TEST(ShuffleTest, Definition) {
  const Tensor x(Shape{1, 4, 1, 1}, std::vector<Real>{1, 2, 3, 4});
  const Tensor y = pixel_shuffle(Var::constant(x), 2).value();
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(y[0], 1);
  EXPECT_EQ(y[1], 2);
  EXPECT_EQ(y[2], 3);
  EXPECT_EQ(y[3], 4);
  const Tensor r = random_tensor({2, 3, 2, 2}, 1);
  EXPECT_TRUE(bit_equal(pixel_shuffle(Var::constant(r), 1).value(), r));
}

TEST(ShuffleTest, IndexFormulaAndRoundTrip) {
  const Tensor x = random_tensor({2, 8, 3, 3}, 11);
  const Tensor y = pixel_shuffle(Var::constant(x), 2).value();
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t c = 0; c < 2; ++c)
      for (int64_t h = 0; h < 3; ++h)
        for (int64_t w = 0; w < 3; ++w)
          for (int64_t i = 0; i < 2; ++i)
            for (int64_t j = 0; j < 2; ++j)
              ASSERT_EQ(y.at(n, c, 2 * h + i, 2 * w + j), x.at(n, c * 4 + i * 2 + j, h, w));
  EXPECT_TRUE(bit_equal(pixel_unshuffle(Var::constant(y), 2).value(), x));
  const Tensor z = random_tensor({1, 2, 6, 9}, 12);
  EXPECT_TRUE(bit_equal(pixel_shuffle(pixel_unshuffle(Var::constant(z), 3), 3).value(), z));
  std::multiset<Real> a(x.data().begin(), x.data().end()), b(y.data().begin(), y.data().end());
  EXPECT_EQ(a, b);
}

TEST(ShuffleTest, RejectsIndivisible) {
  EXPECT_THROW(pixel_shuffle(Var::constant(Tensor(Shape{1, 6, 2, 2})), 2), ShapeError);
  EXPECT_THROW(pixel_unshuffle(Var::constant(Tensor(Shape{1, 1, 3, 4})), 2), ShapeError);
}

TEST(ElementwiseTest, BasicSemantics) {
  EXPECT_EQ(sigmoid(Var::constant(Tensor(Shape{1}, 0.0))).value()[0], 0.5);
  const Tensor a = random_tensor({2, 3, 2, 2}, 1), b = random_tensor({2, 5, 2, 2}, 2);
  const Var cat = concat_channels({Var::constant(a), Var::constant(b)});
  EXPECT_EQ(cat.dim(1), 8);
  EXPECT_TRUE(bit_equal(slice_channels(cat, 0, 3).value(), a));
  EXPECT_TRUE(bit_equal(slice_channels(cat, 3, 8).value(), b));
  EXPECT_THROW(concat_channels({Var::constant(a), Var::constant(Tensor(Shape{2, 1, 3, 2}))}),
               ShapeError);
  EXPECT_THROW(add(Var::constant(a), Var::constant(b)), ShapeError);
  EXPECT_THROW(broadcast_to(Var::constant(a), Shape{2, 3, 4, 4}), ShapeError);
}

TEST(BackwardTest, AddGradientIsOne) {
  const Var x = input(random_tensor({2, 3}, 1)), y = input(random_tensor({2, 3}, 2));
  backward(sum(x + y));
  const Tensor gx = x.grad(), gy = y.grad();
  for (Real g : gx.data()) EXPECT_EQ(g, 1.0);
  for (Real g : gy.data()) EXPECT_EQ(g, 1.0);
}

TEST(BackwardTest, SumAndSigmoid) {
  const Var x = input(random_tensor({2, 2, 3}, 1));
  backward(sum(x));
  const Tensor gx = x.grad();
  for (Real g : gx.data()) EXPECT_EQ(g, 1.0);
  const Var z = input(Tensor(Shape{1}, 0.0));
  backward(sum(sigmoid(z)));
  EXPECT_EQ(z.grad()[0], 0.25);
}

TEST(BackwardTest, ContractErrors) {
  const Var x = input(random_tensor({2, 2}, 1));
  EXPECT_THROW(backward(x * 2.0), ShapeError);
  const Var loss = sum(x * x);
  backward(loss);
  EXPECT_THROW(backward(loss), std::logic_error);
  EXPECT_THROW(backward(Var::constant(Tensor(Shape{1}, 1.0))), std::logic_error);
}

TEST(BackwardTest, AccumulatesAcrossGraphsUntilZeroGrad) {
  const Var x = input(Tensor(Shape{2}, 1.0));
  backward(sum(x * 3.0));
  backward(sum(x * 2.0));
  EXPECT_EQ(x.grad()[0], 5.0);
  Var(x).zero_grad();
  EXPECT_FALSE(x.has_grad());
}

TEST(TapeTest, TopologicalAndEachNodeOnce) {
  const Var x = input(random_tensor({1, 2, 4, 4}, 1));
  const Var w = input(random_tensor({2, 2, 3, 3}, 2));
  const Var h = sigmoid(conv2d(x, w, Var{}, {1, 1, 1}));
  const Var loss = mean(h * h + h);
  const Tape tape = Tape::of(loss);
  std::set<uint64_t> seen;
  for (const auto& e : tape.entries()) {
    for (uint64_t in : e.inputs) EXPECT_TRUE(seen.count(in)) << e.op;
    EXPECT_TRUE(seen.insert(e.sequence).second);
  }
  EXPECT_EQ(tape.entries().back().sequence, loss.sequence());
}

TEST(FiniteDiffTest, Oracles) {
  const Tensor x(Shape{2}, std::vector<Real>{1, 2});
  const Tensor g = finite_diff_grad(
      [](const Tensor& t) { return t[0] * t[0] + t[1] * t[1]; }, x, 1e-4);
  EXPECT_NEAR(g[0], 2.0, 1e-8);
  EXPECT_NEAR(g[1], 4.0, 1e-8);

  const Tensor target = random_tensor({3, 4}, 3);
  Tensor p = random_tensor({3, 4}, 4);
  const Tensor mg = finite_diff_grad(
      [&](const Tensor& t) {
        NoGradGuard ng;
        return reconstruction_loss(Var::constant(t), Var::constant(target)).value()[0];
      },
      p, 1e-6);
  for (int64_t i = 0; i < p.numel(); ++i)
    EXPECT_NEAR(mg[i], (p[i] > target[i] ? 1.0 : -1.0) / 12.0, 1e-8);
}

TEST(FiniteDiffTest, ConvSigmoidPoolMatchesBackward) {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    const Var x = input(random_tensor({1, 2, 5, 5}, seed));
    const Var w = input(random_tensor({3, 2, 3, 3}, seed + 100, -1, 1));
    const Var b = input(random_tensor({3}, seed + 200));
    GradCheckOptions o;
    o.tolerance = 1e-5;
    const auto r = check_gradients(
        "conv_sigmoid_gap", {x, w, b},
        [&] { return sum(global_avg_pool(sigmoid(conv2d(x, w, b, {1, 1, 1})))); }, o);
    EXPECT_TRUE(r.passed) << r.max_rel_error;
    EXPECT_EQ(r.checked, x.value().numel() + w.value().numel() + b.value().numel());
  }
}

TEST(FiniteDiffTest, KinkPerturbationsAreRefinedOrSkipped) {
  const Var x = input(Tensor(Shape{4}, std::vector<Real>{0.5, 5e-5, 2e-7, -0.7}));
  const auto r = check_gradients("abs", {x}, [&] { return sum(abs(x)); });
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.checked, 3);
  EXPECT_EQ(r.refined, 1);
  EXPECT_EQ(r.skipped, 1);
}

TEST(SubgradientTest, RightSubgradientAtZero) {
  const Var x = input(Tensor(Shape{2}, 0.0));
  backward(sum(abs(x) + relu(x)));
  EXPECT_EQ(x.grad()[0], 2.0);
}

TEST(PurityTest, ForwardIsBitReproducible) {
  const Tensor xt = random_tensor({2, 3, 9, 9}, 7), wt = random_tensor({4, 3, 3, 3}, 8);
  auto f = [&] {
    return sigmoid(conv2d(Var::constant(xt), Var::constant(wt), Var{}, {2, 1, 1})).value();
  };
  EXPECT_TRUE(bit_equal(f(), f()));
}

TEST(PowTest, Domain) {
  EXPECT_THROW(pow(Var::constant(Tensor(Shape{1}, -1.0)), 0.5), std::domain_error);
  const Var z = input(Tensor(Shape{1}, 0.0));
  backward(sum(pow(z, 0.5)));
  EXPECT_EQ(z.grad()[0], 0.0);
}

}  // namespace
}  // namespace lwisp
