// lwisp/ops.hpp

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

// Differentiable tensor ops. Activations are NCHW. Non-smooth points take the
// right-subgradient (relu'(0) = 1, abs'(0) = 1) and channel max ties resolve
// to the lowest channel index.

#ifndef LWISP_OPS_HPP_
#define LWISP_OPS_HPP_

#include <cstdint>
#include <string_view>
#include <vector>

#include "lwisp/autodiff.hpp"

namespace lwisp {

struct Conv2dOptions {
  int64_t stride = 1;
  int64_t padding = 0;
  int64_t dilation = 1;
};

// Cross-correlation; x [N,Cin,H,W], w [Cout,Cin,kh,kw], b [Cout] or undefined.
Var conv2d(const Var& x, const Var& w, const Var& b, Conv2dOptions opts = {});

Var global_avg_pool(const Var& x);  // [N,C,1,1]

enum class ChannelPoolMode { kMean, kMax };
Var channel_pool(const Var& x, ChannelPoolMode mode);  // [N,1,H,W]

Var pixel_shuffle(const Var& x, int64_t r);
Var pixel_unshuffle(const Var& x, int64_t r);

// 2x2 average pooling with stride 2; odd trailing rows/columns are dropped.
Var avg_pool2x2(const Var& x);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, Real s);
Var add_scalar(const Var& a, Real s);

// Numpy-style broadcast of size-1 extents to `shape` (same rank).
Var broadcast_to(const Var& x, const Shape& shape);

Var concat_channels(const std::vector<Var>& xs);
Var slice_channels(const Var& x, int64_t begin, int64_t end);
Var reshape(const Var& x, const Shape& shape);

Var sigmoid(const Var& x);
Var relu(const Var& x);
Var leaky_relu(const Var& x, Real slope);
Var abs(const Var& x);
Var square(const Var& x);
// x^p, defined for x > 0 (and x >= 0 when p >= 1).
Var pow(const Var& x, Real p);

Var sum(const Var& x);   // shape [1]
Var mean(const Var& x);  // shape [1]

// Value-only copy; gradients never flow through it.
Var detach(const Var& x);

enum class Activation { kRelu, kLeakyRelu };
Activation parse_activation(std::string_view s);
std::string_view to_string(Activation a);
Var activate(const Var& x, Activation a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator*(const Var& a, Real s) { return scale(a, s); }
inline Var operator*(Real s, const Var& a) { return scale(a, s); }
inline Var operator+(const Var& a, Real s) { return add_scalar(a, s); }

}  // namespace lwisp

#endif  // LWISP_OPS_HPP_
