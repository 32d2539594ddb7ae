// lwisp/autodiff.hpp

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

// Reverse-mode automatic differentiation.
//
// A Var is a handle to a graph node holding a forward value. Ops record their
// inputs and a backward closure only when some input requires a gradient and
// recording is enabled, so inference graphs are freed as soon as the handles
// go out of scope. backward() linearises the reachable graph into a Tape in
// reverse creation order and runs each closure exactly once.

#ifndef LWISP_AUTODIFF_HPP_
#define LWISP_AUTODIFF_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lwisp/tensor.hpp"

namespace lwisp {

namespace detail {
struct Node;
}

class BackwardContext;
using BackwardFn = std::function<void(BackwardContext&)>;

class Var {
 public:
  Var() = default;

  static Var constant(Tensor value);
  // Leaf that accumulates gradients across backward passes until zero_grad().
  static Var parameter(Tensor value);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  int64_t dim(int i) const { return value().dim(i); }
  bool requires_grad() const;
  bool is_leaf() const;

  // Gradient accumulated by backward(). Zero tensor of the value's shape if
  // nothing has flowed into this node.
  Tensor grad() const;
  bool has_grad() const;
  void zero_grad();

  // In-place access for optimizers. Only legal on leaves.
  Tensor& mutable_value();
  Tensor& mutable_grad();

  const std::string& op_name() const;
  uint64_t sequence() const;

 private:
  friend Var make_op(const char* name, Tensor value, std::vector<Var> inputs, BackwardFn fn);
  friend class Tape;
  friend void backward(const Var& loss);
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

class BackwardContext {
 public:
  const Tensor& grad_output() const { return *grad_out_; }
  const Tensor& output() const { return *output_; }
  const Tensor& input(size_t k) const;
  size_t num_inputs() const { return inputs_->size(); }
  // Gradient buffer for input k, zero-initialised on first use, or nullptr
  // when that input does not need a gradient.
  Tensor* grad_input(size_t k);

 private:
  friend void backward(const Var& loss);
  const Tensor* grad_out_ = nullptr;
  const Tensor* output_ = nullptr;
  const std::vector<std::shared_ptr<detail::Node>>* inputs_ = nullptr;
};

// Records an op node. The closure runs during backward() with this node's
// gradient available in the context.
Var make_op(const char* name, Tensor value, std::vector<Var> inputs, BackwardFn fn);

/// Reverse topological record of the graph reachable from a scalar.
class Tape {
 public:
  struct Entry {
    uint64_t sequence;
    std::string op;
    std::vector<uint64_t> inputs;
  };

  static Tape of(const Var& root);
  // Entries in recording order; inputs always precede their consumers.
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
  std::vector<std::shared_ptr<detail::Node>> nodes_;
  friend void backward(const Var& loss);
};

// Accumulates d(loss)/d(leaf) into every reachable parameter. loss must hold
// exactly one element. A graph can be back-propagated once; a second call on
// the same graph throws std::logic_error.
void backward(const Var& loss);

/// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Fingerprint of branch decisions taken by non-smooth ops (relu side, abs
/// sign, argmax). Gradient checks compare fingerprints of perturbed
/// evaluations to detect a kink crossed within the finite-difference step.
struct BranchTrace {
  bool active = false;
  uint64_t hash = 1469598103934665603ULL;
  void mix(uint64_t v) {
    hash ^= v + 0x9e3779b97f4a7c15ULL + (hash << 6) + (hash >> 2);
  }
};
BranchTrace& branch_trace();

/// Running total of convolution multiply-accumulates on this thread.
int64_t& conv_mac_counter();

}  // namespace lwisp

#endif  // LWISP_AUTODIFF_HPP_
