// lwisp/losses.cpp

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

#include "lwisp/losses.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace lwisp {

namespace {

void require_same(const Var& a, const Var& b, const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
}

void warn_scale_reduction(int requested, int used, int64_t h, int64_t w) {
  static std::atomic<bool> warned{false};
  if (warned.exchange(true)) return;
  std::cerr << "warning: MS-SSIM reduced from " << requested << " to " << used
            << " scales for " << h << "x" << w << " images\n";
}

// Separable valid-mode Gaussian filter over every (n, c) plane.
Var gaussian_filter(const Var& x, const Var& row, const Var& col) {
  const Shape s = x.shape();
  const Var planes = reshape(x, Shape{s[0] * s[1], 1, s[2], s[3]});
  const Var f = conv2d(conv2d(planes, row, Var{}), col, Var{});
  return reshape(f, Shape{s[0], s[1], f.dim(2), f.dim(3)});
}

}  // namespace

void LossWeights::validate() const {
  if (!(alpha >= 0) || !(beta >= 0) || !(gamma >= 0))
    throw std::invalid_argument("loss weights alpha, beta, gamma must be >= 0");
}

void MsSsimConfig::validate() const {
  if (scales < 1) throw std::invalid_argument("MS-SSIM needs at least one scale");
  if (static_cast<int>(weights.size()) < scales)
    throw std::invalid_argument("MS-SSIM: fewer weights than scales");
  for (int i = 0; i < scales; ++i)
    if (!(weights[static_cast<size_t>(i)] > 0))
      throw std::invalid_argument("MS-SSIM weights must be positive");
  if (window < 1 || window % 2 == 0) throw std::invalid_argument("MS-SSIM window must be odd");
  if (!(sigma > 0) || !(dynamic_range > 0))
    throw std::invalid_argument("MS-SSIM sigma and dynamic range must be positive");
}

int MsSsimConfig::usable_scales(int64_t h, int64_t w) const {
  const int64_t m = std::min(h, w);
  if (m < window)
    throw ShapeError("MS-SSIM: image extent " + std::to_string(h) + "x" + std::to_string(w) +
                     " is smaller than the " + std::to_string(window) + "-tap window");
  int s = 1;
  while (s < scales && m >= static_cast<int64_t>(window) << s) ++s;
  return s;
}

std::vector<Real> MsSsimConfig::effective_weights(int count) const {
  std::vector<Real> w(weights.begin(), weights.begin() + count);
  const Real total = std::accumulate(w.begin(), w.end(), Real{0});
  for (Real& v : w) v /= total;
  return w;
}

std::vector<Real> MsSsimConfig::gaussian() const {
  std::vector<Real> g(static_cast<size_t>(window));
  const int half = window / 2;
  Real total = 0;
  for (int i = 0; i < window; ++i) {
    const Real d = i - half;
    g[static_cast<size_t>(i)] = std::exp(-d * d / (2 * sigma * sigma));
    total += g[static_cast<size_t>(i)];
  }
  for (Real& v : g) v /= total;
  return g;
}

Var reconstruction_loss(const Var& pred, const Var& target) {
  require_same(pred, target, "reconstruction loss");
  return mean(abs(pred - target));
}

Var ms_ssim(const Var& pred, const Var& target, const MsSsimConfig& cfg) {
  require_same(pred, target, "MS-SSIM");
  require_rank(pred.value(), 4, "MS-SSIM input");
  cfg.validate();
  const int used = cfg.usable_scales(pred.dim(2), pred.dim(3));
  if (used < cfg.scales) warn_scale_reduction(cfg.scales, used, pred.dim(2), pred.dim(3));
  const std::vector<Real> weights = cfg.effective_weights(used);

  const std::vector<Real> taps = cfg.gaussian();
  const int64_t k = cfg.window;
  const Var row = Var::constant(Tensor(Shape{1, 1, 1, k}, taps));
  const Var col = Var::constant(Tensor(Shape{1, 1, k, 1}, taps));
  const Real c1 = std::pow(cfg.k1 * cfg.dynamic_range, 2);
  const Real c2 = std::pow(cfg.k2 * cfg.dynamic_range, 2);

  Var x = pred, y = target, score;
  for (int s = 0; s < used; ++s) {
    const Var mx = gaussian_filter(x, row, col);
    const Var my = gaussian_filter(y, row, col);
    const Var mxx = square(mx), myy = square(my), mxy = mx * my;
    const Var sxx = gaussian_filter(square(x), row, col) - mxx;
    const Var syy = gaussian_filter(square(y), row, col) - myy;
    const Var sxy = gaussian_filter(x * y, row, col) - mxy;
    const Var cs_map = (2.0 * sxy + c2) / (sxx + syy + c2);
    Var term;
    if (s + 1 < used) {
      term = global_avg_pool(cs_map);
    } else {
      const Var l_map = (2.0 * mxy + c1) / (mxx + myy + c1);
      term = global_avg_pool(l_map * cs_map);
    }
    const Var weighted = pow(relu(term), weights[static_cast<size_t>(s)]);
    score = score.defined() ? score * weighted : weighted;
    if (s + 1 < used) {
      x = avg_pool2x2(x);
      y = avg_pool2x2(y);
    }
  }
  return mean(score);
}

Var structural_loss(const Var& pred, const Var& target, const MsSsimConfig& cfg) {
  return (-1.0 * ms_ssim(pred, target, cfg)) + 1.0;
}

Var distillation_loss(const std::vector<Var>& student_taps, const std::vector<Var>& teacher_taps) {
  if (student_taps.size() != teacher_taps.size())
    throw ShapeError("distillation: " + std::to_string(student_taps.size()) +
                     " student taps vs " + std::to_string(teacher_taps.size()) + " teacher taps");
  if (student_taps.empty()) throw std::invalid_argument("distillation: empty tap list");
  Var total;
  for (size_t i = 0; i < student_taps.size(); ++i) {
    if (student_taps[i].shape() != teacher_taps[i].shape())
      throw ShapeError("distillation: tap pair " + std::to_string(i) + " has shapes " +
                       student_taps[i].shape().str() + " vs " + teacher_taps[i].shape().str());
    const Var term = mean(square(student_taps[i] - detach(teacher_taps[i])));
    total = total.defined() ? total + term : term;
  }
  return total;
}

LossTerms overall_loss(const Var& pred, const Var& target, const std::vector<Var>& student_taps,
                       const std::vector<Var>& teacher_taps, const LossWeights& w,
                       const MsSsimConfig& cfg) {
  w.validate();
  LossTerms t;
  t.reconstruction = reconstruction_loss(pred, target);
  t.total = t.reconstruction;
  if (w.alpha != 0) {
    t.structural = structural_loss(pred, target, cfg);
    t.total = t.total + w.alpha * t.structural;
  }
  if (w.beta != 0) {
    t.distillation = distillation_loss(student_taps, teacher_taps);
    t.total = t.total + w.beta * t.distillation;
  }
  return t;
}

Var teacher_loss(const Var& g_out, const Var& j, Real gamma, const MsSsimConfig& cfg) {
  require_same(g_out, j, "teacher loss");
  if (!(gamma >= 0)) throw std::invalid_argument("gamma must be >= 0");
  const Var l2 = mean(square(g_out - j));
  if (gamma == 0) return l2;
  return l2 + gamma * structural_loss(g_out, j, cfg);
}

Real mse(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw ShapeError("mse: shape mismatch " + pred.shape().str() + " vs " + target.shape().str());
  Real acc = 0;
  for (int64_t i = 0; i < pred.numel(); ++i) {
    const Real d = pred[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<Real>(pred.numel());
}

Real psnr(const Tensor& pred, const Tensor& target, Real peak) {
  const Real m = mse(pred, target);
  if (m == 0) return std::numeric_limits<Real>::infinity();
  return 10.0 * std::log10(peak * peak / m);
}

Real ms_ssim_value(const Tensor& pred, const Tensor& target, const MsSsimConfig& cfg) {
  NoGradGuard no_grad;
  return ms_ssim(Var::constant(pred), Var::constant(target), cfg).value()[0];
}

}  // namespace lwisp
