// lwisp/gradcheck.cpp

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

#include "lwisp/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

namespace lwisp {

namespace {

struct TraceScope {
  BranchTrace saved;
  TraceScope() : saved(branch_trace()) {
    branch_trace() = BranchTrace{};
    branch_trace().active = true;
  }
  ~TraceScope() { branch_trace() = saved; }
};

struct Probe {
  Real value;
  uint64_t branches;
};

Probe evaluate(const std::function<Var()>& fn) {
  NoGradGuard no_grad;
  branch_trace().hash = BranchTrace{}.hash;
  const Var out = fn();
  if (out.value().numel() != 1) throw ShapeError("gradient check needs a scalar function");
  return {out.value()[0], branch_trace().hash};
}

}  // namespace

Tensor finite_diff_grad(const std::function<Real(const Tensor&)>& f, const Tensor& x, Real eps) {
  Tensor grad(x.shape());
  Tensor probe = x;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const Real orig = probe[i];
    probe[i] = orig + eps;
    const Real up = f(probe);
    probe[i] = orig - eps;
    const Real down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

Real relative_error(Real analytic, Real numeric, Real floor) {
  const Real denom = std::max({std::fabs(analytic), std::fabs(numeric), floor});
  return std::fabs(analytic - numeric) / denom;
}

GradCheckReport check_gradients(const std::string& name, const std::vector<Var>& leaves,
                                const std::function<Var()>& fn, const GradCheckOptions& opts) {
  GradCheckReport report;
  report.name = name;
  TraceScope trace;

  std::vector<Var> params = leaves;
  for (Var& v : params) v.zero_grad();
  branch_trace().hash = BranchTrace{}.hash;
  const Var loss = fn();
  const uint64_t base_branches = branch_trace().hash;
  backward(loss);

  std::mt19937_64 rng(opts.seed);
  for (Var& leaf : params) {
    const Tensor analytic = leaf.grad();
    Tensor& value = leaf.mutable_value();
    std::vector<int64_t> coords(static_cast<size_t>(value.numel()));
    std::iota(coords.begin(), coords.end(), 0);
    if (opts.max_coords_per_leaf > 0 &&
        static_cast<int64_t>(coords.size()) > opts.max_coords_per_leaf) {
      // Partial Fisher-Yates: the first k entries become a uniform sample.
      for (size_t i = 0; i < static_cast<size_t>(opts.max_coords_per_leaf); ++i) {
        const size_t j = i + static_cast<size_t>(rng() % (coords.size() - i));
        std::swap(coords[i], coords[j]);
      }
      coords.resize(static_cast<size_t>(opts.max_coords_per_leaf));
    }
    for (int64_t i : coords) {
      const Real orig = value[i];
      std::optional<Real> numeric;
      std::vector<Real> steps{opts.eps};
      steps.insert(steps.end(), opts.retry_eps.begin(), opts.retry_eps.end());
      for (size_t k = 0; k < steps.size() && !numeric; ++k) {
        value[i] = orig + steps[k];
        const Probe up = evaluate(fn);
        value[i] = orig - steps[k];
        const Probe down = evaluate(fn);
        value[i] = orig;
        if (up.branches != base_branches || down.branches != base_branches) continue;
        numeric = (up.value - down.value) / (2.0 * steps[k]);
        if (k > 0) ++report.refined;
      }
      if (!numeric) {
        ++report.skipped;
        continue;
      }
      const Real err = relative_error(analytic[i], *numeric, opts.floor);
      if (!std::isfinite(err)) report.passed = false;
      report.max_rel_error = std::max(report.max_rel_error, err);
      ++report.checked;
    }
  }
  for (Var& v : params) v.zero_grad();
  report.passed = report.passed && report.max_rel_error < opts.tolerance;
  return report;
}

}  // namespace lwisp
