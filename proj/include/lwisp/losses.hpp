// lwisp/losses.hpp

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

// Training objectives and image-quality metrics.

#ifndef LWISP_LOSSES_HPP_
#define LWISP_LOSSES_HPP_

#include <cstdint>
#include <vector>

#include "lwisp/ops.hpp"

namespace lwisp {

struct LossWeights {
  Real alpha = 0.4;  // structural term
  Real beta = 1.0;   // distillation term
  Real gamma = 0.4;  // teacher structural term
  void validate() const;
};

struct MsSsimConfig {
  int scales = 5;
  std::vector<Real> weights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  int window = 11;
  Real sigma = 1.5;
  Real k1 = 0.01;
  Real k2 = 0.03;
  Real dynamic_range = 1.0;

  void validate() const;
  // Scales actually usable for an image of the given extents: the largest s
  // with min(h, w) >= window * 2^(s-1), capped at `scales`. Throws if even a
  // single scale does not fit.
  int usable_scales(int64_t h, int64_t w) const;
  // Per-scale exponents for `count` scales: the leading weights, rescaled to
  // sum to one.
  std::vector<Real> effective_weights(int count) const;
  // Normalised 1-D Gaussian taps.
  std::vector<Real> gaussian() const;
};

// mean |pred - target|
Var reconstruction_loss(const Var& pred, const Var& target);

// Differentiable MS-SSIM, averaged over batch and channels.
Var ms_ssim(const Var& pred, const Var& target, const MsSsimConfig& cfg = {});
// 1 - MS-SSIM
Var structural_loss(const Var& pred, const Var& target, const MsSsimConfig& cfg = {});

// Sum over pairs of the per-pair mean squared difference. Teacher taps are
// detached.
Var distillation_loss(const std::vector<Var>& student_taps, const std::vector<Var>& teacher_taps);

struct LossTerms {
  Var total;
  Var reconstruction;
  Var structural;    // undefined when alpha == 0
  Var distillation;  // undefined when beta == 0

  static Real value_of(const Var& v) { return v.defined() ? v.value()[0] : 0.0; }
};

// L_r + alpha * L_s + beta * L_d. Terms with zero weight are not evaluated.
LossTerms overall_loss(const Var& pred, const Var& target, const std::vector<Var>& student_taps,
                       const std::vector<Var>& teacher_taps, const LossWeights& w,
                       const MsSsimConfig& cfg = {});

// mean (g_out - j)^2 + gamma * L_s
Var teacher_loss(const Var& g_out, const Var& j, Real gamma, const MsSsimConfig& cfg = {});

Real mse(const Tensor& pred, const Tensor& target);
// 10 log10(peak^2 / MSE); +infinity for identical inputs.
Real psnr(const Tensor& pred, const Tensor& target, Real peak = 1.0);
Real ms_ssim_value(const Tensor& pred, const Tensor& target, const MsSsimConfig& cfg = {});

}  // namespace lwisp

#endif  // LWISP_LOSSES_HPP_
