// lwisp/autodiff.cpp

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

#include "lwisp/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <stdexcept>
#include <unordered_set>

namespace lwisp {

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;  // empty until something accumulates into it
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
  uint64_t sequence = 0;
};

}  // namespace detail

namespace {

std::atomic<uint64_t> g_sequence{0};
thread_local bool t_grad_enabled = true;
thread_local BranchTrace t_branch_trace;
thread_local int64_t t_conv_macs = 0;

std::shared_ptr<detail::Node> new_node(Tensor value) {
  auto n = std::make_shared<detail::Node>();
  n->value = std::move(value);
  n->sequence = g_sequence.fetch_add(1, std::memory_order_relaxed);
  return n;
}

void require_defined(const std::shared_ptr<detail::Node>& n) {
  if (!n) throw std::logic_error("use of an undefined Var");
}

}  // namespace

Var Var::constant(Tensor value) { return Var(new_node(std::move(value))); }

Var Var::parameter(Tensor value) {
  auto n = new_node(std::move(value));
  n->requires_grad = true;
  return Var(std::move(n));
}

const Tensor& Var::value() const {
  require_defined(node_);
  return node_->value;
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }
bool Var::is_leaf() const { return node_ && node_->leaf; }

Tensor Var::grad() const {
  require_defined(node_);
  if (node_->grad.empty()) return Tensor(node_->value.shape(), 0.0);
  return node_->grad;
}

bool Var::has_grad() const { return node_ && !node_->grad.empty(); }

void Var::zero_grad() {
  require_defined(node_);
  node_->grad = Tensor();
}

Tensor& Var::mutable_value() {
  require_defined(node_);
  if (!node_->leaf) throw std::logic_error("mutable_value() on a non-leaf Var");
  return node_->value;
}

Tensor& Var::mutable_grad() {
  require_defined(node_);
  if (node_->grad.empty()) node_->grad = Tensor(node_->value.shape(), 0.0);
  return node_->grad;
}

const std::string& Var::op_name() const {
  require_defined(node_);
  return node_->op;
}

uint64_t Var::sequence() const {
  require_defined(node_);
  return node_->sequence;
}

const Tensor& BackwardContext::input(size_t k) const { return (*inputs_)[k]->value; }

Tensor* BackwardContext::grad_input(size_t k) {
  detail::Node& in = *(*inputs_)[k];
  if (!in.requires_grad) return nullptr;
  if (in.grad.empty()) in.grad = Tensor(in.value.shape(), 0.0);
  return &in.grad;
}

Var make_op(const char* name, Tensor value, std::vector<Var> inputs, BackwardFn fn) {
  auto node = new_node(std::move(value));
  node->op = name;
  node->leaf = false;
  bool any = false;
  for (const Var& v : inputs) {
    require_defined(v.node_);
    any = any || v.node_->requires_grad;
  }
  if (any && t_grad_enabled) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (Var& v : inputs) node->inputs.push_back(std::move(v.node_));
    node->backward = std::move(fn);
  }
  return Var(std::move(node));
}

Tape Tape::of(const Var& root) {
  require_defined(root.node_);
  Tape tape;
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::shared_ptr<detail::Node>> stack{root.node_};
  while (!stack.empty()) {
    auto n = std::move(stack.back());
    stack.pop_back();
    if (!n->requires_grad || !seen.insert(n.get()).second) continue;
    for (const auto& in : n->inputs) stack.push_back(in);
    tape.nodes_.push_back(std::move(n));
  }
  std::sort(tape.nodes_.begin(), tape.nodes_.end(),
            [](const auto& a, const auto& b) { return a->sequence < b->sequence; });
  tape.entries_.reserve(tape.nodes_.size());
  for (const auto& n : tape.nodes_) {
    Entry e{n->sequence, n->op, {}};
    for (const auto& in : n->inputs) e.inputs.push_back(in->sequence);
    tape.entries_.push_back(std::move(e));
  }
  return tape;
}

void backward(const Var& loss) {
  require_defined(loss.node_);
  if (loss.node_->value.numel() != 1)
    throw ShapeError("backward() needs a scalar loss, got shape " +
                     loss.node_->value.shape().str());
  if (!loss.node_->requires_grad)
    throw std::logic_error("backward(): loss does not depend on any parameter");
  if (loss.node_->consumed)
    throw std::logic_error("backward() called twice on the same graph");

  Tape tape = Tape::of(loss);
  auto& root = *loss.node_;
  if (root.grad.empty()) root.grad = Tensor(root.value.shape(), 0.0);
  root.grad[0] += 1.0;

  for (auto it = tape.nodes_.rbegin(); it != tape.nodes_.rend(); ++it) {
    detail::Node& n = **it;
    if (n.leaf) continue;
    n.consumed = true;
    if (n.grad.empty()) continue;
    BackwardContext ctx;
    ctx.grad_out_ = &n.grad;
    ctx.output_ = &n.value;
    ctx.inputs_ = &n.inputs;
    n.backward(ctx);
    n.grad = Tensor();
  }
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

BranchTrace& branch_trace() { return t_branch_trace; }

int64_t& conv_mac_counter() { return t_conv_macs; }

}  // namespace lwisp
