// lwisp/gradcheck_suites.hpp

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

// Named gradient-check cases, grouped by scope:
//   ops     every differentiable primitive and every loss
//   blocks  FGAM, CCB core, contextual complement, down block, up stage
//   model   tiny student with all loss terms, and tiny teacher with its loss

#ifndef LWISP_GRADCHECK_SUITES_HPP_
#define LWISP_GRADCHECK_SUITES_HPP_

#include <iosfwd>
#include <string>
#include <vector>

#include "lwisp/gradcheck.hpp"

namespace lwisp {

enum class GradScope { kOps, kBlocks, kModel };
GradScope parse_grad_scope(const std::string& s);
std::string to_string(GradScope s);

struct GradSuiteOptions {
  int seeds = 20;
  uint64_t first_seed = 1;
  GradCheckOptions check;
  // Coordinates sampled per parameter tensor in the model scope; <= 0 checks all.
  int64_t model_coords_per_leaf = 4;
};

struct GradCaseResult {
  std::string name;
  uint64_t seed = 0;
  GradCheckReport report;
};

std::vector<std::string> grad_case_names(GradScope scope);
GradCaseResult run_grad_case(GradScope scope, const std::string& name, uint64_t seed,
                             const GradSuiteOptions& opts);
// Every case of the scope for every seed. Rows are also streamed to `log`.
std::vector<GradCaseResult> run_grad_suite(GradScope scope, const GradSuiteOptions& opts,
                                           std::ostream* log = nullptr);
// A case passes when it checked at least one coordinate and stayed in tolerance.
bool case_passed(const GradCaseResult& r);

}  // namespace lwisp

#endif  // LWISP_GRADCHECK_SUITES_HPP_
