// lwisp/kernels.hpp

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

// Raw compute kernels over contiguous NCHW buffers.
//
// Every parallel kernel assigns each output element to exactly one thread and
// sums its contributions in a fixed order, so results are bit-identical for
// any OMP_NUM_THREADS. The serial versions in kernels::reference are direct
// loops kept for tests and benchmarks.

#ifndef LWISP_KERNELS_HPP_
#define LWISP_KERNELS_HPP_

#include <cstdint>

#include "lwisp/tensor.hpp"

namespace lwisp::kernels {

struct ConvGeometry {
  int64_t batch = 1;
  int64_t in_channels = 1, in_h = 1, in_w = 1;
  int64_t out_channels = 1, kernel_h = 1, kernel_w = 1;
  int64_t stride = 1, padding = 0, dilation = 1;
  int64_t out_h = 1, out_w = 1;

  // Validates and derives the output extents. Throws ShapeError naming the
  // offending dimension.
  static ConvGeometry make(int64_t batch, int64_t in_channels, int64_t in_h, int64_t in_w,
                           int64_t out_channels, int64_t kernel_h, int64_t kernel_w,
                           int64_t stride, int64_t padding, int64_t dilation);

  int64_t patch_size() const { return in_channels * kernel_h * kernel_w; }
  int64_t out_pixels() const { return out_h * out_w; }
  int64_t macs() const { return batch * out_channels * out_pixels() * patch_size(); }
};

// C[m x n] += A[m x k] * B[k x n]; row-major with leading dimensions.
void gemm_accumulate(int64_t m, int64_t n, int64_t k, const Real* a, int64_t lda,
                     const Real* b, int64_t ldb, Real* c, int64_t ldc);

// y = conv(x, w) + b. b may be null.
void conv2d_forward(const ConvGeometry& g, const Real* x, const Real* w, const Real* b, Real* y);
// gx += d/dx. gx must be zero-initialised by the caller if a fresh result is wanted.
void conv2d_backward_input(const ConvGeometry& g, const Real* w, const Real* gy, Real* gx);
// gw += d/dw, gb += d/db. gb may be null.
void conv2d_backward_weight(const ConvGeometry& g, const Real* x, const Real* gy, Real* gw,
                            Real* gb);

// out[n, c, r*h+i, r*w+j] = in[n, c*r*r + i*r + j, h, w]
void pixel_shuffle(int64_t n, int64_t c_out, int64_t h, int64_t w, int64_t r, const Real* in,
                   Real* out);
// Exact inverse of pixel_shuffle.
void pixel_unshuffle(int64_t n, int64_t c_out, int64_t h, int64_t w, int64_t r, const Real* in,
                     Real* out);

namespace reference {

void gemm_accumulate(int64_t m, int64_t n, int64_t k, const Real* a, int64_t lda,
                     const Real* b, int64_t ldb, Real* c, int64_t ldc);
void conv2d_forward(const ConvGeometry& g, const Real* x, const Real* w, const Real* b, Real* y);
void conv2d_backward_input(const ConvGeometry& g, const Real* w, const Real* gy, Real* gx);
void conv2d_backward_weight(const ConvGeometry& g, const Real* x, const Real* gy, Real* gw,
                            Real* gb);

}  // namespace reference

int max_threads();

}  // namespace lwisp::kernels

#endif  // LWISP_KERNELS_HPP_
