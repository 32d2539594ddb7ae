// lwisp/gradcheck.hpp

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

#ifndef LWISP_GRADCHECK_HPP_
#define LWISP_GRADCHECK_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lwisp/autodiff.hpp"

namespace lwisp {

// Central differences: (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every i.
Tensor finite_diff_grad(const std::function<Real(const Tensor&)>& f, const Tensor& x,
                        Real eps = 1e-4);

struct GradCheckOptions {
  Real eps = 1e-4;
  Real tolerance = 1e-4;
  // Relative error is |a - n| / max(|a|, |n|, floor).
  Real floor = 1e-3;
  // Coordinates whose +-eps probe crosses a non-smooth point are retried with
  // these smaller steps before being skipped.
  std::vector<Real> retry_eps{1e-5, 1e-6};
  // Check at most this many randomly chosen coordinates per leaf; <= 0 means all.
  int64_t max_coords_per_leaf = 0;
  uint64_t seed = 0;
};

struct GradCheckReport {
  std::string name;
  Real max_rel_error = 0.0;
  int64_t checked = 0;
  // Coordinates checked with a retry step instead of eps.
  int64_t refined = 0;
  // Coordinates whose probes crossed a non-smooth point at every step size.
  int64_t skipped = 0;
  bool passed = true;
};

Real relative_error(Real analytic, Real numeric, Real floor);

// Compares backward() against central differences for every leaf. `fn` must
// build a one-element Var from the leaves and be deterministic.
GradCheckReport check_gradients(const std::string& name, const std::vector<Var>& leaves,
                                const std::function<Var()>& fn,
                                const GradCheckOptions& opts = {});

}  // namespace lwisp

#endif  // LWISP_GRADCHECK_HPP_
