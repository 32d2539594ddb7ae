// lwisp/tests/losses_test.cpp

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

#include <cmath>

#include "lwisp/losses.hpp"
#include "test_util.hpp"

namespace lwisp {
namespace {

using testing::random_tensor;

Tensor clamp01(Tensor t) {
  for (Real& v : t.data()) v = std::clamp(v, 0.0, 1.0);
  return t;
}

Tensor plus_noise(const Tensor& t, uint64_t seed, Real amp) {
  Tensor n = random_tensor(t.shape(), seed, -amp, amp);
  for (int64_t i = 0; i < t.numel(); ++i) n[i] = std::clamp(t[i] + n[i], 0.0, 1.0);
  return n;
}

Real scalar(const Var& v) { return v.value()[0]; }

// Plain-loop MS-SSIM over one (n,c) plane: a full 2D Gaussian window in
// valid mode, 2x2 mean downsampling between scales.
using Plane = std::vector<std::vector<Real>>;

Plane plane_of(const Tensor& t, int64_t n, int64_t c) {
  Plane p(static_cast<size_t>(t.dim(2)), std::vector<Real>(static_cast<size_t>(t.dim(3))));
  for (int64_t h = 0; h < t.dim(2); ++h)
    for (int64_t w = 0; w < t.dim(3); ++w) p[h][w] = t.at(n, c, h, w);
  return p;
}

Plane halve(const Plane& p) {
  Plane q(p.size() / 2, std::vector<Real>(p[0].size() / 2));
  for (size_t i = 0; i < q.size(); ++i)
    for (size_t j = 0; j < q[0].size(); ++j)
      q[i][j] = (p[2 * i][2 * j] + p[2 * i + 1][2 * j] + p[2 * i][2 * j + 1] +
                 p[2 * i + 1][2 * j + 1]) / 4;
  return q;
}

Real reference_ms_ssim_plane(Plane x, Plane y, int scales, const std::vector<Real>& weights) {
  const int k = 11;
  std::vector<Real> g(k);
  Real gs = 0;
  for (int i = 0; i < k; ++i) gs += g[i] = std::exp(-(i - 5.0) * (i - 5.0) / (2 * 1.5 * 1.5));
  for (Real& v : g) v /= gs;
  const Real c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  Real wsum = 0;
  for (int s = 0; s < scales; ++s) wsum += weights[s];
  Real score = 1;
  for (int s = 0; s < scales; ++s) {
    const size_t oh = x.size() - k + 1, ow = x[0].size() - k + 1;
    Real cs_acc = 0, lcs_acc = 0;
    for (size_t i = 0; i < oh; ++i)
      for (size_t j = 0; j < ow; ++j) {
        Real mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (int a = 0; a < k; ++a)
          for (int b = 0; b < k; ++b) {
            const Real wt = g[a] * g[b];
            const Real xv = x[i + a][j + b], yv = y[i + a][j + b];
            mx += wt * xv;
            my += wt * yv;
            xx += wt * xv * xv;
            yy += wt * yv * yv;
            xy += wt * xv * yv;
          }
        const Real cs = (2 * (xy - mx * my) + c2) / ((xx - mx * mx) + (yy - my * my) + c2);
        const Real l = (2 * mx * my + c1) / (mx * mx + my * my + c1);
        cs_acc += cs;
        lcs_acc += l * cs;
      }
    const Real n = static_cast<Real>(oh * ow);
    const Real term = s + 1 < scales ? cs_acc / n : lcs_acc / n;
    score *= std::pow(std::max(term, 0.0), weights[s] / wsum);
    x = halve(x);
    y = halve(y);
  }
  return score;
}

Real reference_ms_ssim(const Tensor& a, const Tensor& b, int scales) {
  const std::vector<Real> w{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  Real acc = 0;
  for (int64_t n = 0; n < a.dim(0); ++n)
    for (int64_t c = 0; c < a.dim(1); ++c)
      acc += reference_ms_ssim_plane(plane_of(a, n, c), plane_of(b, n, c), scales, w);
  return acc / static_cast<Real>(a.dim(0) * a.dim(1));
}

TEST(ReconstructionTest, HandComputedExample) {
  const Var a = Var::constant(Tensor(Shape{1, 1, 1, 4}, {0.0, 0.5, 1.0, 0.25}));
  const Var b = Var::constant(Tensor(Shape{1, 1, 1, 4}, {0.5, 0.5, 0.0, 0.5}));
  EXPECT_DOUBLE_EQ(scalar(reconstruction_loss(a, b)), (0.5 + 0 + 1.0 + 0.25) / 4);
}

TEST(ReconstructionTest, MatchesLoop) {
  const Tensor a = random_tensor({2, 3, 5, 4}, 1, 0, 1), b = random_tensor({2, 3, 5, 4}, 2, 0, 1);
  Real acc = 0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += std::fabs(a[i] - b[i]);
  EXPECT_NEAR(scalar(reconstruction_loss(Var::constant(a), Var::constant(b))), acc / a.numel(),
              1e-15);
  EXPECT_THROW(reconstruction_loss(Var::constant(a), Var::constant(Tensor(Shape{2, 3, 5, 5}))),
               ShapeError);
}

TEST(MsSsimTest, IdenticalImagesScoreOne) {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    const Tensor x = random_tensor({2, 3, 64, 64}, seed, 0, 1);
    EXPECT_LE(scalar(structural_loss(Var::constant(x), Var::constant(x))), 1e-6);
    EXPECT_GE(scalar(structural_loss(Var::constant(x), Var::constant(x))), -1e-12);
  }
}

TEST(MsSsimTest, MatchesScalarReference) {
  const Tensor a = clamp01(random_tensor({2, 3, 64, 64}, 3, 0.1, 0.9));
  const Tensor b = plus_noise(a, 4, 0.05);
  MsSsimConfig cfg;
  ASSERT_EQ(cfg.usable_scales(64, 64), 3);
  EXPECT_NEAR(ms_ssim_value(a, b), reference_ms_ssim(a, b, 3), 1e-6);
  EXPECT_NEAR(ms_ssim_value(a, b), ms_ssim_value(b, a), 1e-12);

  const Tensor c = random_tensor({1, 1, 176, 176}, 5, 0, 1);
  const Tensor d = plus_noise(c, 6, 0.1);
  ASSERT_EQ(cfg.usable_scales(176, 176), 5);
  EXPECT_NEAR(ms_ssim_value(c, d), reference_ms_ssim(c, d, 5), 1e-6);
}

TEST(MsSsimTest, BatchOrderDoesNotMatter) {
  const Tensor a = random_tensor({2, 1, 32, 32}, 7, 0, 1), b = plus_noise(a, 8, 0.2);
  auto swap = [](const Tensor& t) {
    Tensor s = t;
    const int64_t half = t.numel() / 2;
    for (int64_t i = 0; i < half; ++i) std::swap(s[i], s[half + i]);
    return s;
  };
  EXPECT_NEAR(ms_ssim_value(a, b), ms_ssim_value(swap(a), swap(b)), 1e-14);
}

TEST(MsSsimTest, ScaleReductionRules) {
  MsSsimConfig cfg;
  EXPECT_EQ(cfg.usable_scales(22, 22), 2);
  EXPECT_EQ(cfg.usable_scales(24, 100), 2);
  EXPECT_EQ(cfg.usable_scales(21, 21), 1);
  EXPECT_EQ(cfg.usable_scales(176, 200), 5);
  EXPECT_THROW(cfg.usable_scales(10, 64), ShapeError);
  const auto w = cfg.effective_weights(5);
  EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-15);
  const auto w2 = cfg.effective_weights(2);
  EXPECT_NEAR(w2[0] / w2[1], 0.0448 / 0.2856, 1e-14);
}

TEST(MsSsimTest, NonNegativeAndBounded) {
  for (uint64_t seed = 0; seed < 6; ++seed) {
    const Tensor a = random_tensor({1, 3, 32, 32}, seed, 0, 1);
    const Tensor b = random_tensor({1, 3, 32, 32}, seed + 50, 0, 1);
    const Real l = scalar(structural_loss(Var::constant(a), Var::constant(b)));
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, 1.0);
  }
}

TEST(DistillationTest, ZeroOnIdenticalTapsAndSumsPairs) {
  const Tensor t1 = random_tensor({1, 4, 4, 4}, 1), t2 = random_tensor({1, 2, 8, 8}, 2);
  EXPECT_EQ(scalar(distillation_loss({Var::constant(t1), Var::constant(t2)},
                                     {Var::constant(t1), Var::constant(t2)})),
            0.0);
  Tensor u1 = t1, u2 = t2;
  for (Real& v : u1.data()) v += 0.5;  // MSE 0.25
  for (Real& v : u2.data()) v -= 1.0;  // MSE 1.0
  EXPECT_NEAR(scalar(distillation_loss({Var::constant(u1), Var::constant(u2)},
                                       {Var::constant(t1), Var::constant(t2)})),
              1.25, 1e-14);
  EXPECT_THROW(distillation_loss({Var::constant(t1)}, {Var::constant(t2)}), ShapeError);
  EXPECT_THROW(distillation_loss({Var::constant(t1)}, {}), ShapeError);
}

TEST(DistillationTest, TeacherSideReceivesNoGradient) {
  const Var s = Var::parameter(random_tensor({1, 2, 4, 4}, 3));
  const Var t = Var::parameter(random_tensor({1, 2, 4, 4}, 4));
  backward(distillation_loss({s}, {t}));
  EXPECT_TRUE(s.has_grad());
  if (t.has_grad()) {
    const Tensor g = t.grad();
    for (Real v : g.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(OverallLossTest, ZeroWeightsGiveExactlyMae) {
  const Var p = Var::constant(random_tensor({1, 3, 32, 32}, 1, 0, 1));
  const Var g = Var::constant(random_tensor({1, 3, 32, 32}, 2, 0, 1));
  LossWeights w;
  w.alpha = 0;
  w.beta = 0;
  const LossTerms t = overall_loss(p, g, {}, {}, w);
  EXPECT_EQ(scalar(t.total), scalar(reconstruction_loss(p, g)));
  EXPECT_FALSE(t.structural.defined());
  EXPECT_FALSE(t.distillation.defined());
}

TEST(OverallLossTest, WeightedSumOfTerms) {
  const Var p = Var::constant(random_tensor({1, 3, 32, 32}, 3, 0, 1));
  const Var g = Var::constant(random_tensor({1, 3, 32, 32}, 4, 0, 1));
  const Var s = Var::constant(random_tensor({1, 2, 4, 4}, 5));
  const Var t = Var::constant(random_tensor({1, 2, 4, 4}, 6));
  LossWeights w;
  w.alpha = 0.4;
  w.beta = 2.0;
  const LossTerms lt = overall_loss(p, g, {s}, {t}, w);
  const Real expect = scalar(reconstruction_loss(p, g)) + 0.4 * scalar(structural_loss(p, g)) +
                      2.0 * scalar(distillation_loss({s}, {t}));
  EXPECT_NEAR(scalar(lt.total), expect, 1e-14);
  w.alpha = -1;
  EXPECT_THROW(overall_loss(p, g, {}, {}, w), std::invalid_argument);
}

TEST(TeacherLossTest, MseWhenGammaZero) {
  const Tensor a = random_tensor({1, 3, 32, 32}, 7, 0, 1), b = random_tensor({1, 3, 32, 32}, 8, 0, 1);
  EXPECT_NEAR(scalar(teacher_loss(Var::constant(a), Var::constant(b), 0.0)), mse(a, b), 1e-15);
  const Real with = scalar(teacher_loss(Var::constant(a), Var::constant(b), 0.4));
  EXPECT_NEAR(with, mse(a, b) + 0.4 * (1 - ms_ssim_value(a, b)), 1e-14);
  EXPECT_THROW(teacher_loss(Var::constant(a), Var::constant(b), -0.1), std::invalid_argument);
}

TEST(PsnrTest, KnownValues) {
  const Tensor a(Shape{1, 1, 2, 2}, 0.5);
  Tensor b = a;
  EXPECT_TRUE(std::isinf(psnr(a, b)));
  for (Real& v : b.data()) v += 0.1;  // MSE 0.01
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
  const Tensor c = random_tensor({1, 3, 4, 4}, 1, 0, 1), d = random_tensor({1, 3, 4, 4}, 2, 0, 1);
  Real acc = 0;
  for (int64_t i = 0; i < c.numel(); ++i) acc += (c[i] - d[i]) * (c[i] - d[i]);
  EXPECT_NEAR(psnr(c, d), 10 * std::log10(1.0 / (acc / c.numel())), 1e-12);
}

}  // namespace
}  // namespace lwisp
