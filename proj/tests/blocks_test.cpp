// lwisp/tests/blocks_test.cpp

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

#include "lwisp/blocks.hpp"
#include "lwisp/gradcheck_suites.hpp"
#include "test_util.hpp"

namespace lwisp {
namespace {

using testing::bit_equal;
using testing::max_abs_diff;
using testing::naive_conv;
using testing::random_tensor;

void zero_all(ParamStore& store) {
  for (const auto& p : store.params()) {
    Var v = p.var;
    v.mutable_value().fill(0.0);
  }
}

void randomize(ParamStore& store, uint64_t seed) {
  for (const auto& p : store.params()) {
    Var v = p.var;
    v.mutable_value() = random_tensor(v.shape(), seed++, -0.5, 0.5);
  }
}

Tensor sigmoid_t(Tensor t) {
  for (Real& v : t.data()) v = 1.0 / (1.0 + std::exp(-v));
  return t;
}

Tensor leaky_t(Tensor t) {
  for (Real& v : t.data()) v = v >= 0 ? v : 0.2 * v;
  return t;
}

// Scripted conv through the direct-loop oracle using a Conv2d's parameters.
Tensor oracle_conv(const Conv2d& c, const Tensor& x) {
  const Tensor b = c.bias.value();
  return naive_conv(x, c.weight.value(), &b, c.opts.stride, c.opts.padding, c.opts.dilation);
}

Tensor oracle_shuffle2(const Tensor& x) {
  const int64_t n = x.dim(0), c = x.dim(1) / 4, h = x.dim(2), w = x.dim(3);
  Tensor y(Shape{n, c, 2 * h, 2 * w});
  for (int64_t a = 0; a < n; ++a)
    for (int64_t k = 0; k < c; ++k)
      for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j)
          for (int64_t di = 0; di < 2; ++di)
            for (int64_t dj = 0; dj < 2; ++dj)
              y.at(a, k, 2 * i + di, 2 * j + dj) = x.at(a, k * 4 + di * 2 + dj, i, j);
  return y;
}

Tensor add_t(Tensor a, const Tensor& b) {
  for (int64_t i = 0; i < a.numel(); ++i) a[i] += b[i];
  return a;
}

FgamConfig fgam_cfg(int64_t c) {
  FgamConfig f;
  f.channels = c;
  f.reduction = 2;
  return f;
}

CcbConfig ccb_cfg() {
  CcbConfig cc;
  cc.encoder_channels = 3;
  cc.decoder_channels = 5;
  cc.context_channels = 4;
  cc.out_channels = 2;
  cc.complement_channels = 3;
  return cc;
}

TEST(FgamTest, ZeroWeightsGiveOneHalf) {
  ParamStore store(1);
  const Fgam f(store, "f", fgam_cfg(4), Resolution::scale(1, 1));
  zero_all(store);
  const Tensor y = f.forward(Var::constant(Tensor(Shape{2, 4, 3, 3}, 0.0))).value();
  ASSERT_EQ(y.shape(), (Shape{2, 8, 3, 3}));
  for (Real v : y.data()) EXPECT_EQ(v, 0.5);
}

TEST(FgamTest, RejectsReductionNotDividingChannels) {
  ParamStore store(1);
  FgamConfig c = fgam_cfg(6);
  c.reduction = 4;
  EXPECT_THROW(Fgam(store, "f", c, Resolution::scale(1, 1)), std::invalid_argument);
}

TEST(FgamTest, MatchesScriptedComposition) {
  ParamStore store(2);
  const Fgam f(store, "f", fgam_cfg(4), Resolution::scale(1, 1));
  randomize(store, 10);
  const Tensor x = random_tensor({2, 4, 6, 5}, 3);
  const Tensor y = f.forward(Var::constant(x)).value();

  Tensor gap(Shape{2, 4, 1, 1});
  Tensor pooled(Shape{2, 2, 6, 5});
  for (int64_t n = 0; n < 2; ++n) {
    for (int64_t c = 0; c < 4; ++c) {
      Real s = 0;
      for (int64_t h = 0; h < 6; ++h)
        for (int64_t w = 0; w < 5; ++w) s += x.at(n, c, h, w);
      gap.at(n, c, 0, 0) = s / 30;
    }
    for (int64_t h = 0; h < 6; ++h)
      for (int64_t w = 0; w < 5; ++w) {
        Real s = 0, m = -INFINITY;
        for (int64_t c = 0; c < 4; ++c) {
          s += x.at(n, c, h, w);
          m = std::max(m, x.at(n, c, h, w));
        }
        pooled.at(n, 0, h, w) = s / 4;
        pooled.at(n, 1, h, w) = m;
      }
  }
  const Tensor ac = sigmoid_t(oracle_conv(f.excite, leaky_t(oracle_conv(f.squeeze, gap))));
  const Tensor as = sigmoid_t(oracle_conv(f.spatial, pooled));
  Real err = 0;
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t c = 0; c < 4; ++c)
      for (int64_t h = 0; h < 6; ++h)
        for (int64_t w = 0; w < 5; ++w) {
          err = std::max(err, std::fabs(y.at(n, c, h, w) - (x.at(n, c, h, w) + ac.at(n, c, 0, 0))));
          err = std::max(err, std::fabs(y.at(n, c + 4, h, w) - (x.at(n, c, h, w) + as.at(n, 0, h, w))));
        }
  EXPECT_LT(err, 1e-12);
}

TEST(FgamTest, StructuralDecomposition) {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    ParamStore store(seed);
    const Fgam f(store, "f", fgam_cfg(6), Resolution::scale(1, 1));
    randomize(store, seed * 100);
    const Tensor x = random_tensor({2, 6, 5, 7}, seed + 1);
    const Tensor y = f.forward(Var::constant(x)).value();
    ASSERT_EQ(y.dim(1), 12);
    for (int64_t n = 0; n < 2; ++n) {
      for (int64_t c = 0; c < 6; ++c) {
        const Real ref = y.at(n, c, 0, 0) - x.at(n, c, 0, 0);
        for (int64_t h = 0; h < 5; ++h)
          for (int64_t w = 0; w < 7; ++w)
            EXPECT_NEAR(y.at(n, c, h, w) - x.at(n, c, h, w), ref, 1e-6);
      }
      for (int64_t h = 0; h < 5; ++h)
        for (int64_t w = 0; w < 7; ++w) {
          const Real ref = y.at(n, 6, h, w) - x.at(n, 0, h, w);
          for (int64_t c = 0; c < 6; ++c)
            EXPECT_NEAR(y.at(n, 6 + c, h, w) - x.at(n, c, h, w), ref, 1e-6);
        }
    }
  }
}

TEST(CcbTest, ZeroedDecoderBranchLeavesEncoderBranch) {
  ParamStore store(3);
  const Ccb b(store, "c", ccb_cfg(), Resolution::scale(1, 1));
  randomize(store, 1);
  for (const Var& v : {b.decoder_branch.adjust.weight, b.decoder_branch.adjust.bias,
                       b.decoder_branch.refine.weight, b.decoder_branch.refine.bias}) {
    Var m = v;
    m.mutable_value().fill(0.0);
  }
  const Var f1 = Var::constant(random_tensor({1, 3, 4, 3}, 5));
  const Var f2 = Var::constant(random_tensor({1, 5, 4, 3}, 6));
  const Tensor y = b.core(f1, f2).value();
  EXPECT_EQ(y.shape(), (Shape{1, 2, 8, 6}));
  EXPECT_TRUE(bit_equal(y, b.encoder_branch(f1).value()));
}

TEST(CcbTest, CoreMatchesScriptedComposition) {
  ParamStore store(4);
  const Ccb b(store, "c", ccb_cfg(), Resolution::scale(1, 1));
  randomize(store, 7);
  const Tensor f1 = random_tensor({2, 3, 3, 4}, 8), f2 = random_tensor({2, 5, 3, 4}, 9);
  const Tensor y = b.core(Var::constant(f1), Var::constant(f2)).value();
  auto branch = [](const SubPixelBranch& s, const Tensor& x) {
    return oracle_conv(s.refine, oracle_shuffle2(oracle_conv(s.adjust, x)));
  };
  const Tensor expect = add_t(branch(b.encoder_branch, f1), branch(b.decoder_branch, f2));
  EXPECT_LT(max_abs_diff(y, expect), 1e-12);
}

TEST(CcbTest, CoreIsLinearWithoutBias) {
  ParamStore store(5);
  const Ccb b(store, "c", ccb_cfg(), Resolution::scale(1, 1));
  randomize(store, 2);
  for (const auto& p : store.params())
    if (p.var.value().rank() == 1) {
      Var v = p.var;
      v.mutable_value().fill(0.0);
    }
  for (const Var& v : {b.decoder_branch.adjust.weight, b.decoder_branch.refine.weight}) {
    Var m = v;
    m.mutable_value().fill(0.0);
  }
  const Tensor f1 = random_tensor({1, 3, 3, 3}, 1);
  Tensor f1s = f1;
  for (Real& v : f1s.data()) v *= 2.5;
  const Var f2 = Var::constant(random_tensor({1, 5, 3, 3}, 2));
  Tensor y = b.core(Var::constant(f1), f2).value();
  for (Real& v : y.data()) v *= 2.5;
  EXPECT_LT(max_abs_diff(b.core(Var::constant(f1s), f2).value(), y), 1e-12);
}

TEST(CcbTest, RejectsBranchExtentMismatch) {
  ParamStore store(6);
  const Ccb b(store, "c", ccb_cfg(), Resolution::scale(1, 1));
  EXPECT_THROW(b.core(Var::constant(Tensor(Shape{1, 3, 4, 4})),
                      Var::constant(Tensor(Shape{1, 5, 4, 2}))),
               ShapeError);
  EXPECT_THROW(b.complement(Var::constant(Tensor(Shape{1, 4, 6, 6})),
                            Var::constant(Tensor(Shape{1, 2, 8, 8}))),
               ShapeError);
}

TEST(ComplementTest, IdenticalDilatedPairGivesOneHalf) {
  ParamStore store(7);
  CcbConfig cc = ccb_cfg();
  const Ccb b(store, "c", cc, Resolution::scale(1, 1));
  randomize(store, 3);
  // A 1x1 kernel equals a 3x3 dilation-2 kernel that is zero off-centre.
  Var d1w = b.local_context.weight, d2w = b.wide_context.weight;
  Tensor& w2 = d2w.mutable_value();
  w2.fill(0.0);
  for (int64_t o = 0; o < w2.dim(0); ++o)
    for (int64_t c = 0; c < w2.dim(1); ++c) w2.at(o, c, 1, 1) = d1w.value().at(o, c, 0, 0);
  Var d2b = b.wide_context.bias;
  d2b.mutable_value() = b.local_context.bias.value();
  const Tensor ctx = random_tensor({1, 4, 6, 6}, 4);
  const Tensor core = random_tensor({1, 2, 6, 6}, 5);
  const Tensor y = b.complement(Var::constant(ctx), Var::constant(core)).value();
  ASSERT_EQ(y.dim(1), 2 + 3);
  for (int64_t c = 2; c < 5; ++c)
    for (int64_t h = 0; h < 6; ++h)
      for (int64_t w = 0; w < 6; ++w) EXPECT_EQ(y.at(0, c, h, w), 0.5);
}

TEST(ComplementTest, MatchesScriptedCompositionAndIsBounded) {
  ParamStore store(8);
  const Ccb b(store, "c", ccb_cfg(), Resolution::scale(1, 1));
  randomize(store, 4);
  const Tensor ctx = random_tensor({2, 4, 6, 8}, 6);
  const Tensor core = random_tensor({2, 2, 6, 8}, 7);
  const Tensor y = b.complement(Var::constant(ctx), Var::constant(core)).value();
  const Tensor d1 = oracle_conv(b.local_context, ctx);
  Tensor diff = oracle_conv(b.wide_context, ctx);
  for (int64_t i = 0; i < diff.numel(); ++i) diff[i] = d1[i] - diff[i];
  const Tensor cl = sigmoid_t(diff);
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t h = 0; h < 6; ++h)
      for (int64_t w = 0; w < 8; ++w) {
        for (int64_t c = 0; c < 2; ++c) EXPECT_EQ(y.at(n, c, h, w), core.at(n, c, h, w));
        for (int64_t c = 0; c < 3; ++c) {
          const Real v = y.at(n, 2 + c, h, w);
          EXPECT_NEAR(v, cl.at(n, c, h, w), 1e-12);
          EXPECT_GT(v, 0.0);
          EXPECT_LT(v, 1.0);
        }
      }
}

TEST(StageTest, DownAndUpExtents) {
  ParamStore store(9);
  std::vector<DownBlock> downs;
  int64_t in = 4;
  for (int i = 0; i < 4; ++i) {
    DownBlockConfig dc;
    dc.in_channels = in;
    dc.out_channels = 4;
    dc.fgam = fgam_cfg(4);
    downs.emplace_back(store, "d" + std::to_string(i), dc, Resolution::scale(1, 1));
    in = downs.back().out_channels();
  }
  std::vector<Var> feats{Var::constant(random_tensor({1, 4, 64, 64}, 1))};
  for (const auto& d : downs) feats.push_back(d.forward(feats.back()).out);
  EXPECT_EQ(feats.back().shape(), (Shape{1, 8, 4, 4}));

  Var h = feats.back();
  for (int k = 0; k < 4; ++k) {
    CcbConfig cc;
    cc.encoder_channels = 8;
    cc.decoder_channels = h.dim(1);
    cc.context_channels = k < 3 ? 8 : 4;
    cc.out_channels = 4;
    cc.complement_channels = 2;
    const UpStage up(store, "u" + std::to_string(k), cc, Activation::kLeakyRelu,
                     Resolution::scale(1, 1));
    const Var same = feats[static_cast<size_t>(4 - k)];
    const Var dbl = feats[static_cast<size_t>(3 - k)];
    const Var next = up.forward(h, same, dbl);
    EXPECT_EQ(next.dim(2), 2 * h.dim(2));
    h = next;
  }
  EXPECT_EQ(h.dim(2), 64);
  EXPECT_EQ(h.dim(3), 64);
  EXPECT_THROW(downs[0].forward(Var::constant(Tensor(Shape{1, 4, 5, 6}))), ShapeError);
}

TEST(BlockGradTest, EveryBlockPassesFiniteDifferences) {
  GradSuiteOptions o;
  for (const auto& name : grad_case_names(GradScope::kBlocks))
    for (uint64_t seed : {1, 2}) {
      const auto r = run_grad_case(GradScope::kBlocks, name, seed, o);
      EXPECT_TRUE(case_passed(r)) << name << " seed " << seed << " err " << r.report.max_rel_error;
    }
}

}  // namespace
}  // namespace lwisp
