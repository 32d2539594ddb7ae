// lwisp/ops.cpp

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

#include "lwisp/ops.hpp"

#include <cmath>
#include <string>

#include "lwisp/kernels.hpp"

namespace lwisp {

namespace {

constexpr Real kLeakySlope = 0.2;

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
}

// Records one branch decision per element while a gradient check is tracing.
template <typename Pred>
void trace_branches(const Tensor& x, Pred pred) {
  BranchTrace& bt = branch_trace();
  if (!bt.active) return;
  for (int64_t i = 0; i < x.numel(); ++i) bt.mix(pred(x[i]) ? 1 : 2);
}

template <typename F>
Tensor map(const Tensor& x, F f) {
  Tensor y(x.shape());
  const Real* xp = x.ptr();
  Real* yp = y.ptr();
  const int64_t n = x.numel();
#pragma omp parallel for simd schedule(static) if (n > (1 << 16))
  for (int64_t i = 0; i < n; ++i) yp[i] = f(xp[i]);
  return y;
}

Real stable_sigmoid(Real v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const Real e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, Conv2dOptions opts) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank(xv, 4, "conv2d input");
  require_rank(wv, 4, "conv2d weight");
  if (wv.dim(1) != xv.dim(1))
    throw ShapeError("conv2d: input channels " + std::to_string(xv.dim(1)) +
                     " do not match weight in_channels " + std::to_string(wv.dim(1)));
  const bool has_bias = b.defined();
  if (has_bias && b.value().numel() != wv.dim(0))
    throw ShapeError("conv2d: bias length " + std::to_string(b.value().numel()) +
                     " does not match out_channels " + std::to_string(wv.dim(0)));
  const auto g = kernels::ConvGeometry::make(xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3),
                                             wv.dim(0), wv.dim(2), wv.dim(3), opts.stride,
                                             opts.padding, opts.dilation);
  Tensor y(Shape{g.batch, g.out_channels, g.out_h, g.out_w});
  kernels::conv2d_forward(g, xv.ptr(), wv.ptr(), has_bias ? b.value().ptr() : nullptr, y.ptr());
  conv_mac_counter() += g.macs();

  std::vector<Var> inputs{x, w};
  if (has_bias) inputs.push_back(b);
  return make_op("conv2d", std::move(y), std::move(inputs), [g, has_bias](BackwardContext& ctx) {
    const Tensor& gy = ctx.grad_output();
    if (Tensor* gx = ctx.grad_input(0))
      kernels::conv2d_backward_input(g, ctx.input(1).ptr(), gy.ptr(), gx->ptr());
    if (Tensor* gw = ctx.grad_input(1))
      kernels::conv2d_backward_weight(g, ctx.input(0).ptr(), gy.ptr(), gw->ptr(), nullptr);
    if (!has_bias) return;
    if (Tensor* gb = ctx.grad_input(2)) {
      const int64_t pixels = g.out_pixels();
      for (int64_t n = 0; n < g.batch; ++n)
        for (int64_t co = 0; co < g.out_channels; ++co) {
          const Real* row = gy.ptr() + (n * g.out_channels + co) * pixels;
          Real s = 0.0;
          for (int64_t p = 0; p < pixels; ++p) s += row[p];
          (*gb)[co] += s;
        }
    }
  });
}

Var global_avg_pool(const Var& x) {
  const Tensor& xv = x.value();
  require_rank(xv, 4, "global_avg_pool");
  const int64_t nc = xv.dim(0) * xv.dim(1);
  const int64_t hw = xv.dim(2) * xv.dim(3);
  Tensor y(Shape{xv.dim(0), xv.dim(1), 1, 1});
  for (int64_t i = 0; i < nc; ++i) {
    Real s = 0.0;
    for (int64_t p = 0; p < hw; ++p) s += xv[i * hw + p];
    y[i] = s / static_cast<Real>(hw);
  }
  return make_op("global_avg_pool", std::move(y), {x}, [nc, hw](BackwardContext& ctx) {
    Tensor* gx = ctx.grad_input(0);
    if (!gx) return;
    const Tensor& gy = ctx.grad_output();
    for (int64_t i = 0; i < nc; ++i) {
      const Real g = gy[i] / static_cast<Real>(hw);
      for (int64_t p = 0; p < hw; ++p) (*gx)[i * hw + p] += g;
    }
  });
}

Var channel_pool(const Var& x, ChannelPoolMode mode) {
  const Tensor& xv = x.value();
  require_rank(xv, 4, "channel_pool");
  const int64_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  Tensor y(Shape{n, 1, xv.dim(2), xv.dim(3)});
  if (mode == ChannelPoolMode::kMean) {
    for (int64_t b = 0; b < n; ++b)
      for (int64_t p = 0; p < hw; ++p) {
        Real s = 0.0;
        for (int64_t k = 0; k < c; ++k) s += xv[(b * c + k) * hw + p];
        y[b * hw + p] = s / static_cast<Real>(c);
      }
    return make_op("channel_mean", std::move(y), {x}, [n, c, hw](BackwardContext& ctx) {
      Tensor* gx = ctx.grad_input(0);
      if (!gx) return;
      const Tensor& gy = ctx.grad_output();
      for (int64_t b = 0; b < n; ++b)
        for (int64_t k = 0; k < c; ++k)
          for (int64_t p = 0; p < hw; ++p)
            (*gx)[(b * c + k) * hw + p] += gy[b * hw + p] / static_cast<Real>(c);
    });
  }
  std::vector<int64_t> argmax(static_cast<size_t>(n * hw));
  BranchTrace& bt = branch_trace();
  for (int64_t b = 0; b < n; ++b)
    for (int64_t p = 0; p < hw; ++p) {
      int64_t best = 0;
      Real v = xv[(b * c) * hw + p];
      for (int64_t k = 1; k < c; ++k) {
        const Real cand = xv[(b * c + k) * hw + p];
        if (cand > v) {
          v = cand;
          best = k;
        }
      }
      y[b * hw + p] = v;
      argmax[static_cast<size_t>(b * hw + p)] = best;
      if (bt.active) bt.mix(static_cast<uint64_t>(best) + 7);
    }
  return make_op("channel_max", std::move(y), {x},
                 [n, c, hw, argmax = std::move(argmax)](BackwardContext& ctx) {
                   Tensor* gx = ctx.grad_input(0);
                   if (!gx) return;
                   const Tensor& gy = ctx.grad_output();
                   for (int64_t b = 0; b < n; ++b)
                     for (int64_t p = 0; p < hw; ++p) {
                       const int64_t k = argmax[static_cast<size_t>(b * hw + p)];
                       (*gx)[(b * c + k) * hw + p] += gy[b * hw + p];
                     }
                 });
}

Var pixel_shuffle(const Var& x, int64_t r) {
  const Tensor& xv = x.value();
  require_rank(xv, 4, "pixel_shuffle");
  if (r < 1) throw ShapeError("pixel_shuffle: factor must be >= 1");
  if (xv.dim(1) % (r * r) != 0)
    throw ShapeError("pixel_shuffle: channel count " + std::to_string(xv.dim(1)) +
                     " is not divisible by r^2 = " + std::to_string(r * r));
  const int64_t n = xv.dim(0), c_out = xv.dim(1) / (r * r), h = xv.dim(2), w = xv.dim(3);
  Tensor y(Shape{n, c_out, h * r, w * r});
  kernels::pixel_shuffle(n, c_out, h, w, r, xv.ptr(), y.ptr());
  return make_op("pixel_shuffle", std::move(y), {x}, [n, c_out, h, w, r](BackwardContext& ctx) {
    Tensor* gx = ctx.grad_input(0);
    if (!gx) return;
    Tensor tmp(gx->shape());
    kernels::pixel_unshuffle(n, c_out, h, w, r, ctx.grad_output().ptr(), tmp.ptr());
    for (int64_t i = 0; i < tmp.numel(); ++i) (*gx)[i] += tmp[i];
  });
}

Var pixel_unshuffle(const Var& x, int64_t r) {
  const Tensor& xv = x.value();
  require_rank(xv, 4, "pixel_unshuffle");
  if (r < 1) throw ShapeError("pixel_unshuffle: factor must be >= 1");
  if (xv.dim(2) % r != 0 || xv.dim(3) % r != 0)
    throw ShapeError("pixel_unshuffle: spatial extents " + std::to_string(xv.dim(2)) + "x" +
                     std::to_string(xv.dim(3)) + " are not divisible by " + std::to_string(r));
  const int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2) / r, w = xv.dim(3) / r;
  Tensor y(Shape{n, c * r * r, h, w});
  kernels::pixel_unshuffle(n, c, h, w, r, xv.ptr(), y.ptr());
  return make_op("pixel_unshuffle", std::move(y), {x}, [n, c, h, w, r](BackwardContext& ctx) {
    Tensor* gx = ctx.grad_input(0);
    if (!gx) return;
    Tensor tmp(gx->shape());
    kernels::pixel_shuffle(n, c, h, w, r, ctx.grad_output().ptr(), tmp.ptr());
    for (int64_t i = 0; i < tmp.numel(); ++i) (*gx)[i] += tmp[i];
  });
}

Var avg_pool2x2(const Var& x) {
  const Tensor& xv = x.value();
  require_rank(xv, 4, "avg_pool2x2");
  if (xv.dim(2) < 2 || xv.dim(3) < 2)
    throw ShapeError("avg_pool2x2: spatial extents " + xv.shape().str() + " are below 2");
  const int64_t nc = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const int64_t oh = h / 2, ow = w / 2;
  Tensor y(Shape{xv.dim(0), xv.dim(1), oh, ow});
  for (int64_t i = 0; i < nc; ++i)
    for (int64_t r = 0; r < oh; ++r)
      for (int64_t c = 0; c < ow; ++c) {
        const Real* p = xv.ptr() + (i * h + 2 * r) * w + 2 * c;
        y[(i * oh + r) * ow + c] = 0.25 * (p[0] + p[1] + p[w] + p[w + 1]);
      }
  return make_op("avg_pool2x2", std::move(y), {x}, [nc, h, w, oh, ow](BackwardContext& ctx) {
    Tensor* gx = ctx.grad_input(0);
    if (!gx) return;
    const Tensor& gy = ctx.grad_output();
    for (int64_t i = 0; i < nc; ++i)
      for (int64_t r = 0; r < oh; ++r)
        for (int64_t c = 0; c < ow; ++c) {
          const Real g = 0.25 * gy[(i * oh + r) * ow + c];
          Real* p = gx->ptr() + (i * h + 2 * r) * w + 2 * c;
          p[0] += g;
          p[1] += g;
          p[w] += g;
          p[w + 1] += g;
        }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  for (int64_t i = 0; i < y.numel(); ++i) y[i] += b.value()[i];
  return make_op("add", std::move(y), {a, b}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    for (size_t k = 0; k < 2; ++k)
      if (Tensor* gi = ctx.grad_input(k))
        for (int64_t i = 0; i < g.numel(); ++i) (*gi)[i] += g[i];
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor y = a.value();
  for (int64_t i = 0; i < y.numel(); ++i) y[i] -= b.value()[i];
  return make_op("sub", std::move(y), {a, b}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    if (Tensor* ga = ctx.grad_input(0))
      for (int64_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i];
    if (Tensor* gb = ctx.grad_input(1))
      for (int64_t i = 0; i < g.numel(); ++i) (*gb)[i] -= g[i];
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor y = a.value();
  for (int64_t i = 0; i < y.numel(); ++i) y[i] *= b.value()[i];
  return make_op("mul", std::move(y), {a, b}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    const Tensor& av = ctx.input(0);
    const Tensor& bv = ctx.input(1);
    if (Tensor* ga = ctx.grad_input(0))
      for (int64_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * bv[i];
    if (Tensor* gb = ctx.grad_input(1))
      for (int64_t i = 0; i < g.numel(); ++i) (*gb)[i] += g[i] * av[i];
  });
}

Var div(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "div");
  Tensor y = a.value();
  for (int64_t i = 0; i < y.numel(); ++i) y[i] /= b.value()[i];
  return make_op("div", std::move(y), {a, b}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    const Tensor& bv = ctx.input(1);
    const Tensor& yv = ctx.output();
    if (Tensor* ga = ctx.grad_input(0))
      for (int64_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] / bv[i];
    if (Tensor* gb = ctx.grad_input(1))
      for (int64_t i = 0; i < g.numel(); ++i) (*gb)[i] -= g[i] * yv[i] / bv[i];
  });
}

Var scale(const Var& a, Real s) {
  Tensor y = map(a.value(), [s](Real v) { return v * s; });
  return make_op("scale", std::move(y), {a}, [s](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    if (Tensor* ga = ctx.grad_input(0))
      for (int64_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * s;
  });
}

Var add_scalar(const Var& a, Real s) {
  Tensor y = map(a.value(), [s](Real v) { return v + s; });
  return make_op("add_scalar", std::move(y), {a}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    if (Tensor* ga = ctx.grad_input(0))
      for (int64_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i];
  });
}

Var broadcast_to(const Var& x, const Shape& shape) {
  const Tensor& xv = x.value();
  if (xv.rank() != shape.rank())
    throw ShapeError("broadcast_to: rank mismatch " + xv.shape().str() + " -> " + shape.str());
  const int rank = shape.rank();
  std::vector<int64_t> src_stride(static_cast<size_t>(rank), 0);
  int64_t stride = 1;
  for (int d = rank - 1; d >= 0; --d) {
    if (xv.dim(d) != shape[d] && xv.dim(d) != 1)
      throw ShapeError("broadcast_to: dimension " + std::to_string(d) + " of " + xv.shape().str() +
                       " cannot broadcast to " + shape.str());
    src_stride[static_cast<size_t>(d)] = xv.dim(d) == 1 ? 0 : stride;
    stride *= xv.dim(d);
  }
  // Source offset for every output element, in output order.
  std::vector<int64_t> index(static_cast<size_t>(shape.numel()));
  std::vector<int64_t> counter(static_cast<size_t>(rank), 0);
  int64_t offset = 0;
  for (size_t i = 0; i < index.size(); ++i) {
    index[i] = offset;
    for (int d = rank - 1; d >= 0; --d) {
      const auto du = static_cast<size_t>(d);
      ++counter[du];
      offset += src_stride[du];
      if (counter[du] < shape[d]) break;
      offset -= src_stride[du] * counter[du];
      counter[du] = 0;
    }
  }
  Tensor y(shape);
  for (size_t i = 0; i < index.size(); ++i) y[static_cast<int64_t>(i)] = xv[index[i]];
  return make_op("broadcast_to", std::move(y), {x}, [index = std::move(index)](BackwardContext& ctx) {
    Tensor* gx = ctx.grad_input(0);
    if (!gx) return;
    const Tensor& g = ctx.grad_output();
    for (size_t i = 0; i < index.size(); ++i) (*gx)[index[i]] += g[static_cast<int64_t>(i)];
  });
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  const Tensor& first = xs.front().value();
  require_rank(first, 4, "concat_channels");
  int64_t total = 0;
  std::vector<int64_t> widths;
  for (const Var& v : xs) {
    const Tensor& t = v.value();
    require_rank(t, 4, "concat_channels");
    if (t.dim(0) != first.dim(0) || t.dim(2) != first.dim(2) || t.dim(3) != first.dim(3))
      throw ShapeError("concat_channels: " + t.shape().str() + " does not match N,H,W of " +
                       first.shape().str());
    widths.push_back(t.dim(1));
    total += t.dim(1);
  }
  const int64_t n = first.dim(0), hw = first.dim(2) * first.dim(3);
  Tensor y(Shape{n, total, first.dim(2), first.dim(3)});
  for (int64_t b = 0; b < n; ++b) {
    int64_t c0 = 0;
    for (size_t k = 0; k < xs.size(); ++k) {
      const Real* src = xs[k].value().ptr() + b * widths[k] * hw;
      std::copy(src, src + widths[k] * hw, y.ptr() + (b * total + c0) * hw);
      c0 += widths[k];
    }
  }
  return make_op("concat_channels", std::move(y), xs,
                 [n, hw, total, widths](BackwardContext& ctx) {
                   const Tensor& g = ctx.grad_output();
                   int64_t c0 = 0;
                   for (size_t k = 0; k < widths.size(); ++k) {
                     if (Tensor* gi = ctx.grad_input(k))
                       for (int64_t b = 0; b < n; ++b) {
                         const Real* src = g.ptr() + (b * total + c0) * hw;
                         Real* dst = gi->ptr() + b * widths[k] * hw;
                         for (int64_t i = 0; i < widths[k] * hw; ++i) dst[i] += src[i];
                       }
                     c0 += widths[k];
                   }
                 });
}

Var slice_channels(const Var& x, int64_t begin, int64_t end) {
  const Tensor& xv = x.value();
  require_rank(xv, 4, "slice_channels");
  if (begin < 0 || end > xv.dim(1) || begin >= end)
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") invalid for " + xv.shape().str());
  const int64_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3), k = end - begin;
  Tensor y(Shape{n, k, xv.dim(2), xv.dim(3)});
  for (int64_t b = 0; b < n; ++b) {
    const Real* src = xv.ptr() + (b * c + begin) * hw;
    std::copy(src, src + k * hw, y.ptr() + b * k * hw);
  }
  return make_op("slice_channels", std::move(y), {x}, [n, c, hw, k, begin](BackwardContext& ctx) {
    Tensor* gx = ctx.grad_input(0);
    if (!gx) return;
    const Tensor& g = ctx.grad_output();
    for (int64_t b = 0; b < n; ++b)
      for (int64_t i = 0; i < k * hw; ++i) (*gx)[(b * c + begin) * hw + i] += g[b * k * hw + i];
  });
}

Var reshape(const Var& x, const Shape& shape) {
  Tensor y = x.value().reshaped(shape);
  return make_op("reshape", std::move(y), {x}, [](BackwardContext& ctx) {
    Tensor* gx = ctx.grad_input(0);
    if (!gx) return;
    const Tensor& g = ctx.grad_output();
    for (int64_t i = 0; i < g.numel(); ++i) (*gx)[i] += g[i];
  });
}

Var sigmoid(const Var& x) {
  Tensor y = map(x.value(), stable_sigmoid);
  return make_op("sigmoid", std::move(y), {x}, [](BackwardContext& ctx) {
    Tensor* gx = ctx.grad_input(0);
    if (!gx) return;
    const Tensor& g = ctx.grad_output();
    const Tensor& y = ctx.output();
    for (int64_t i = 0; i < g.numel(); ++i) (*gx)[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var relu(const Var& x) { return leaky_relu(x, 0.0); }

Var leaky_relu(const Var& x, Real slope) {
  trace_branches(x.value(), [](Real v) { return v >= 0; });
  Tensor y = map(x.value(), [slope](Real v) { return v >= 0 ? v : slope * v; });
  return make_op(slope == 0.0 ? "relu" : "leaky_relu", std::move(y), {x},
                 [slope](BackwardContext& ctx) {
                   Tensor* gx = ctx.grad_input(0);
                   if (!gx) return;
                   const Tensor& g = ctx.grad_output();
                   const Tensor& xv = ctx.input(0);
                   for (int64_t i = 0; i < g.numel(); ++i)
                     (*gx)[i] += xv[i] >= 0 ? g[i] : slope * g[i];
                 });
}

Var abs(const Var& x) {
  trace_branches(x.value(), [](Real v) { return v >= 0; });
  Tensor y = map(x.value(), [](Real v) { return std::fabs(v); });
  return make_op("abs", std::move(y), {x}, [](BackwardContext& ctx) {
    Tensor* gx = ctx.grad_input(0);
    if (!gx) return;
    const Tensor& g = ctx.grad_output();
    const Tensor& xv = ctx.input(0);
    for (int64_t i = 0; i < g.numel(); ++i) (*gx)[i] += xv[i] >= 0 ? g[i] : -g[i];
  });
}

Var square(const Var& x) {
  Tensor y = map(x.value(), [](Real v) { return v * v; });
  return make_op("square", std::move(y), {x}, [](BackwardContext& ctx) {
    Tensor* gx = ctx.grad_input(0);
    if (!gx) return;
    const Tensor& g = ctx.grad_output();
    const Tensor& xv = ctx.input(0);
    for (int64_t i = 0; i < g.numel(); ++i) (*gx)[i] += 2.0 * xv[i] * g[i];
  });
}

Var pow(const Var& x, Real p) {
  const Tensor& xv = x.value();
  for (int64_t i = 0; i < xv.numel(); ++i)
    if (xv[i] < 0 || (xv[i] == 0 && p < 0))
      throw std::domain_error("pow: base " + std::to_string(xv[i]) + " outside the domain");
  Tensor y = map(xv, [p](Real v) { return std::pow(v, p); });
  return make_op("pow", std::move(y), {x}, [p](BackwardContext& ctx) {
    Tensor* gx = ctx.grad_input(0);
    if (!gx) return;
    const Tensor& g = ctx.grad_output();
    const Tensor& xv = ctx.input(0);
    // The derivative at a zero base is taken as 0 when p < 1.
    for (int64_t i = 0; i < g.numel(); ++i)
      if (xv[i] > 0 || p >= 1) (*gx)[i] += g[i] * p * std::pow(xv[i], p - 1.0);
  });
}

Var sum(const Var& x) {
  Real s = 0.0;
  const Tensor& xv = x.value();
  for (int64_t i = 0; i < xv.numel(); ++i) s += xv[i];
  return make_op("sum", Tensor(Shape{1}, s), {x}, [](BackwardContext& ctx) {
    Tensor* gx = ctx.grad_input(0);
    if (!gx) return;
    const Real g = ctx.grad_output()[0];
    for (int64_t i = 0; i < gx->numel(); ++i) (*gx)[i] += g;
  });
}

Var mean(const Var& x) {
  const Tensor& xv = x.value();
  Real s = 0.0;
  for (int64_t i = 0; i < xv.numel(); ++i) s += xv[i];
  const auto n = static_cast<Real>(xv.numel());
  return make_op("mean", Tensor(Shape{1}, s / n), {x}, [n](BackwardContext& ctx) {
    Tensor* gx = ctx.grad_input(0);
    if (!gx) return;
    const Real g = ctx.grad_output()[0] / n;
    for (int64_t i = 0; i < gx->numel(); ++i) (*gx)[i] += g;
  });
}

Var detach(const Var& x) { return Var::constant(x.value()); }

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "leaky_relu") return Activation::kLeakyRelu;
  throw std::invalid_argument("unknown activation '" + std::string(s) +
                              "' (expected relu or leaky_relu)");
}

std::string_view to_string(Activation a) {
  return a == Activation::kRelu ? "relu" : "leaky_relu";
}

Var activate(const Var& x, Activation a) {
  return a == Activation::kRelu ? relu(x) : leaky_relu(x, kLeakySlope);
}

}  // namespace lwisp
