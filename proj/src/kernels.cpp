// lwisp/kernels.cpp

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

#include "lwisp/kernels.hpp"

#include <algorithm>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lwisp::kernels {

namespace {

// Work below this many multiply-adds is not worth a parallel region.
constexpr int64_t kParallelThreshold = int64_t{1} << 15;
constexpr int64_t kColBlock = 256;
// Upper bound on im2col tile size, in elements.
constexpr int64_t kTileElems = int64_t{1} << 18;

std::string dim_error(const char* name, int64_t value, const std::string& why) {
  return "conv2d: " + std::string(name) + " = " + std::to_string(value) + ": " + why;
}

int64_t tile_pixels(const ConvGeometry& g) {
  const int64_t t = kTileElems / std::max<int64_t>(1, g.patch_size());
  return std::clamp<int64_t>(t, 32, g.out_pixels());
}

// col[kk * tile + t] for output pixels [p0, p0 + tile)
void im2col_tile(const ConvGeometry& g, const Real* x, int64_t p0, int64_t tile, Real* col) {
  const int64_t kk_total = g.patch_size();
#pragma omp parallel for schedule(static) if (kk_total * tile > kParallelThreshold)
  for (int64_t kk = 0; kk < kk_total; ++kk) {
    const int64_t kx = kk % g.kernel_w;
    const int64_t ky = (kk / g.kernel_w) % g.kernel_h;
    const int64_t ci = kk / (g.kernel_w * g.kernel_h);
    const Real* plane = x + ci * g.in_h * g.in_w;
    Real* dst = col + kk * tile;
    int64_t oy = p0 / g.out_w;
    int64_t ox = p0 % g.out_w;
    for (int64_t t = 0; t < tile; ++t) {
      const int64_t iy = oy * g.stride - g.padding + ky * g.dilation;
      const int64_t ix = ox * g.stride - g.padding + kx * g.dilation;
      dst[t] = (iy >= 0 && iy < g.in_h && ix >= 0 && ix < g.in_w) ? plane[iy * g.in_w + ix] : 0.0;
      if (++ox == g.out_w) {
        ox = 0;
        ++oy;
      }
    }
  }
}

// colT[t * K + kk], the transpose of im2col_tile.
void im2col_tile_transposed(const ConvGeometry& g, const Real* x, int64_t p0, int64_t tile,
                            Real* colt) {
  const int64_t kk_total = g.patch_size();
#pragma omp parallel for schedule(static) if (kk_total * tile > kParallelThreshold)
  for (int64_t t = 0; t < tile; ++t) {
    const int64_t p = p0 + t;
    const int64_t oy = p / g.out_w;
    const int64_t ox = p % g.out_w;
    Real* dst = colt + t * kk_total;
    int64_t kk = 0;
    for (int64_t ci = 0; ci < g.in_channels; ++ci) {
      const Real* plane = x + ci * g.in_h * g.in_w;
      for (int64_t ky = 0; ky < g.kernel_h; ++ky) {
        const int64_t iy = oy * g.stride - g.padding + ky * g.dilation;
        for (int64_t kx = 0; kx < g.kernel_w; ++kx, ++kk) {
          const int64_t ix = ox * g.stride - g.padding + kx * g.dilation;
          dst[kk] = (iy >= 0 && iy < g.in_h && ix >= 0 && ix < g.in_w) ? plane[iy * g.in_w + ix]
                                                                         : 0.0;
        }
      }
    }
  }
}

// gx += scatter(col). Each input channel plane is owned by one thread.
void col2im_tile_add(const ConvGeometry& g, const Real* col, int64_t p0, int64_t tile, Real* gx) {
  const int64_t taps = g.kernel_h * g.kernel_w;
#pragma omp parallel for schedule(static) if (g.patch_size() * tile > kParallelThreshold)
  for (int64_t ci = 0; ci < g.in_channels; ++ci) {
    Real* plane = gx + ci * g.in_h * g.in_w;
    for (int64_t tap = 0; tap < taps; ++tap) {
      const int64_t ky = tap / g.kernel_w;
      const int64_t kx = tap % g.kernel_w;
      const Real* src = col + (ci * taps + tap) * tile;
      int64_t oy = p0 / g.out_w;
      int64_t ox = p0 % g.out_w;
      for (int64_t t = 0; t < tile; ++t) {
        const int64_t iy = oy * g.stride - g.padding + ky * g.dilation;
        const int64_t ix = ox * g.stride - g.padding + kx * g.dilation;
        if (iy >= 0 && iy < g.in_h && ix >= 0 && ix < g.in_w) plane[iy * g.in_w + ix] += src[t];
        if (++ox == g.out_w) {
          ox = 0;
          ++oy;
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.padding == 0;
}

std::vector<Real> transpose(const Real* w, int64_t rows, int64_t cols) {
  std::vector<Real> t(static_cast<size_t>(rows * cols));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) t[static_cast<size_t>(c * rows + r)] = w[r * cols + c];
  return t;
}

}  // namespace

ConvGeometry ConvGeometry::make(int64_t batch, int64_t in_channels, int64_t in_h, int64_t in_w,
                                int64_t out_channels, int64_t kernel_h, int64_t kernel_w,
                                int64_t stride, int64_t padding, int64_t dilation) {
  if (kernel_h < 1) throw ShapeError(dim_error("kernel height", kernel_h, "must be >= 1"));
  if (kernel_w < 1) throw ShapeError(dim_error("kernel width", kernel_w, "must be >= 1"));
  if (stride < 1) throw ShapeError(dim_error("stride", stride, "must be >= 1"));
  if (dilation < 1) throw ShapeError(dim_error("dilation", dilation, "must be >= 1"));
  if (padding < 0) throw ShapeError(dim_error("padding", padding, "must be >= 0"));
  const int64_t ext_h = (kernel_h - 1) * dilation + 1;
  const int64_t ext_w = (kernel_w - 1) * dilation + 1;
  if (ext_h > in_h + 2 * padding)
    throw ShapeError(dim_error("input height", in_h,
                               "smaller than effective kernel extent " + std::to_string(ext_h)));
  if (ext_w > in_w + 2 * padding)
    throw ShapeError(dim_error("input width", in_w,
                               "smaller than effective kernel extent " + std::to_string(ext_w)));
  ConvGeometry g;
  g.batch = batch;
  g.in_channels = in_channels;
  g.in_h = in_h;
  g.in_w = in_w;
  g.out_channels = out_channels;
  g.kernel_h = kernel_h;
  g.kernel_w = kernel_w;
  g.stride = stride;
  g.padding = padding;
  g.dilation = dilation;
  g.out_h = (in_h + 2 * padding - ext_h) / stride + 1;
  g.out_w = (in_w + 2 * padding - ext_w) / stride + 1;
  return g;
}

void gemm_accumulate(int64_t m, int64_t n, int64_t k, const Real* a, int64_t lda, const Real* b,
                     int64_t ldb, Real* c, int64_t ldc) {
  const int64_t row_groups = (m + 3) / 4;
#pragma omp parallel for schedule(static) if (m * n * k > kParallelThreshold)
  for (int64_t rg = 0; rg < row_groups; ++rg) {
    const int64_t i0 = rg * 4;
    const int64_t rows = std::min<int64_t>(4, m - i0);
    for (int64_t j0 = 0; j0 < n; j0 += kColBlock) {
      const int64_t jn = std::min(kColBlock, n - j0);
      if (rows == 4) {
        Real* __restrict c0 = c + (i0 + 0) * ldc + j0;
        Real* __restrict c1 = c + (i0 + 1) * ldc + j0;
        Real* __restrict c2 = c + (i0 + 2) * ldc + j0;
        Real* __restrict c3 = c + (i0 + 3) * ldc + j0;
        for (int64_t p = 0; p < k; ++p) {
          const Real a0 = a[(i0 + 0) * lda + p];
          const Real a1 = a[(i0 + 1) * lda + p];
          const Real a2 = a[(i0 + 2) * lda + p];
          const Real a3 = a[(i0 + 3) * lda + p];
          const Real* __restrict bp = b + p * ldb + j0;
          for (int64_t j = 0; j < jn; ++j) {
            const Real bj = bp[j];
            c0[j] += a0 * bj;
            c1[j] += a1 * bj;
            c2[j] += a2 * bj;
            c3[j] += a3 * bj;
          }
        }
      } else {
        for (int64_t i = i0; i < i0 + rows; ++i) {
          Real* __restrict ci = c + i * ldc + j0;
          for (int64_t p = 0; p < k; ++p) {
            const Real ai = a[i * lda + p];
            const Real* __restrict bp = b + p * ldb + j0;
            for (int64_t j = 0; j < jn; ++j) ci[j] += ai * bp[j];
          }
        }
      }
    }
  }
}

void conv2d_forward(const ConvGeometry& g, const Real* x, const Real* w, const Real* b, Real* y) {
  const int64_t pixels = g.out_pixels();
  const int64_t kk = g.patch_size();
  const int64_t in_plane = g.in_channels * g.in_h * g.in_w;
  const int64_t out_plane = g.out_channels * pixels;
  const int64_t tile = tile_pixels(g);
  std::vector<Real> col;
  if (!is_pointwise(g)) col.resize(static_cast<size_t>(kk * tile));

  for (int64_t n = 0; n < g.batch; ++n) {
    Real* yn = y + n * out_plane;
    for (int64_t co = 0; co < g.out_channels; ++co)
      std::fill(yn + co * pixels, yn + (co + 1) * pixels, b ? b[co] : 0.0);
    if (is_pointwise(g)) {
      gemm_accumulate(g.out_channels, pixels, kk, w, kk, x + n * in_plane, pixels, yn, pixels);
      continue;
    }
    for (int64_t p0 = 0; p0 < pixels; p0 += tile) {
      const int64_t t = std::min(tile, pixels - p0);
      im2col_tile(g, x + n * in_plane, p0, t, col.data());
      gemm_accumulate(g.out_channels, t, kk, w, kk, col.data(), t, yn + p0, pixels);
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, const Real* w, const Real* gy, Real* gx) {
  const int64_t pixels = g.out_pixels();
  const int64_t kk = g.patch_size();
  const int64_t in_plane = g.in_channels * g.in_h * g.in_w;
  const int64_t out_plane = g.out_channels * pixels;
  const int64_t tile = tile_pixels(g);
  const std::vector<Real> wt = transpose(w, g.out_channels, kk);
  std::vector<Real> gcol;
  if (!is_pointwise(g)) gcol.resize(static_cast<size_t>(kk * tile));

  for (int64_t n = 0; n < g.batch; ++n) {
    if (is_pointwise(g)) {
      gemm_accumulate(kk, pixels, g.out_channels, wt.data(), g.out_channels, gy + n * out_plane,
                      pixels, gx + n * in_plane, pixels);
      continue;
    }
    for (int64_t p0 = 0; p0 < pixels; p0 += tile) {
      const int64_t t = std::min(tile, pixels - p0);
      std::fill(gcol.begin(), gcol.begin() + kk * t, 0.0);
      gemm_accumulate(kk, t, g.out_channels, wt.data(), g.out_channels, gy + n * out_plane + p0,
                      pixels, gcol.data(), t);
      col2im_tile_add(g, gcol.data(), p0, t, gx + n * in_plane);
    }
  }
}

void conv2d_backward_weight(const ConvGeometry& g, const Real* x, const Real* gy, Real* gw,
                            Real* gb) {
  const int64_t pixels = g.out_pixels();
  const int64_t kk = g.patch_size();
  const int64_t in_plane = g.in_channels * g.in_h * g.in_w;
  const int64_t out_plane = g.out_channels * pixels;
  const int64_t tile = tile_pixels(g);
  std::vector<Real> colt(static_cast<size_t>(kk * tile));

  for (int64_t n = 0; n < g.batch; ++n) {
    const Real* gyn = gy + n * out_plane;
    if (gb) {
#pragma omp parallel for schedule(static) if (out_plane > kParallelThreshold)
      for (int64_t co = 0; co < g.out_channels; ++co) {
        Real s = 0.0;
        const Real* row = gyn + co * pixels;
        for (int64_t p = 0; p < pixels; ++p) s += row[p];
        gb[co] += s;
      }
    }
    for (int64_t p0 = 0; p0 < pixels; p0 += tile) {
      const int64_t t = std::min(tile, pixels - p0);
      im2col_tile_transposed(g, x + n * in_plane, p0, t, colt.data());
      gemm_accumulate(g.out_channels, kk, t, gyn + p0, pixels, colt.data(), kk, gw, kk);
    }
  }
}

void pixel_shuffle(int64_t n, int64_t c_out, int64_t h, int64_t w, int64_t r, const Real* in,
                   Real* out) {
  const int64_t oh = h * r;
  const int64_t ow = w * r;
#pragma omp parallel for collapse(2) schedule(static) if (n * c_out * oh * ow > kParallelThreshold)
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t c = 0; c < c_out; ++c) {
      for (int64_t y = 0; y < oh; ++y) {
        const int64_t i = y % r;
        const int64_t sy = y / r;
        Real* dst = out + ((b * c_out + c) * oh + y) * ow;
        for (int64_t x = 0; x < ow; ++x) {
          const int64_t j = x % r;
          const int64_t src_c = c * r * r + i * r + j;
          dst[x] = in[((b * c_out * r * r + src_c) * h + sy) * w + x / r];
        }
      }
    }
  }
}

void pixel_unshuffle(int64_t n, int64_t c_out, int64_t h, int64_t w, int64_t r, const Real* in,
                     Real* out) {
  const int64_t oh = h * r;
  const int64_t ow = w * r;
#pragma omp parallel for collapse(2) schedule(static) if (n * c_out * oh * ow > kParallelThreshold)
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t c = 0; c < c_out; ++c) {
      for (int64_t y = 0; y < oh; ++y) {
        const int64_t i = y % r;
        const int64_t sy = y / r;
        const Real* src = in + ((b * c_out + c) * oh + y) * ow;
        for (int64_t x = 0; x < ow; ++x) {
          const int64_t j = x % r;
          const int64_t dst_c = c * r * r + i * r + j;
          out[((b * c_out * r * r + dst_c) * h + sy) * w + x / r] = src[x];
        }
      }
    }
  }
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace reference {

void gemm_accumulate(int64_t m, int64_t n, int64_t k, const Real* a, int64_t lda, const Real* b,
                     int64_t ldb, Real* c, int64_t ldc) {
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j)
      for (int64_t p = 0; p < k; ++p) c[i * ldc + j] += a[i * lda + p] * b[p * ldb + j];
}

void conv2d_forward(const ConvGeometry& g, const Real* x, const Real* w, const Real* b, Real* y) {
  for (int64_t n = 0; n < g.batch; ++n)
    for (int64_t co = 0; co < g.out_channels; ++co)
      for (int64_t oy = 0; oy < g.out_h; ++oy)
        for (int64_t ox = 0; ox < g.out_w; ++ox) {
          Real s = b ? b[co] : 0.0;
          for (int64_t ci = 0; ci < g.in_channels; ++ci)
            for (int64_t ky = 0; ky < g.kernel_h; ++ky)
              for (int64_t kx = 0; kx < g.kernel_w; ++kx) {
                const int64_t iy = oy * g.stride - g.padding + ky * g.dilation;
                const int64_t ix = ox * g.stride - g.padding + kx * g.dilation;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                s += w[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] *
                     x[((n * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix];
              }
          y[((n * g.out_channels + co) * g.out_h + oy) * g.out_w + ox] = s;
        }
}

void conv2d_backward_input(const ConvGeometry& g, const Real* w, const Real* gy, Real* gx) {
  for (int64_t n = 0; n < g.batch; ++n)
    for (int64_t co = 0; co < g.out_channels; ++co)
      for (int64_t oy = 0; oy < g.out_h; ++oy)
        for (int64_t ox = 0; ox < g.out_w; ++ox) {
          const Real go = gy[((n * g.out_channels + co) * g.out_h + oy) * g.out_w + ox];
          for (int64_t ci = 0; ci < g.in_channels; ++ci)
            for (int64_t ky = 0; ky < g.kernel_h; ++ky)
              for (int64_t kx = 0; kx < g.kernel_w; ++kx) {
                const int64_t iy = oy * g.stride - g.padding + ky * g.dilation;
                const int64_t ix = ox * g.stride - g.padding + kx * g.dilation;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                gx[((n * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix] +=
                    w[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] * go;
              }
        }
}

void conv2d_backward_weight(const ConvGeometry& g, const Real* x, const Real* gy, Real* gw,
                            Real* gb) {
  for (int64_t n = 0; n < g.batch; ++n)
    for (int64_t co = 0; co < g.out_channels; ++co)
      for (int64_t oy = 0; oy < g.out_h; ++oy)
        for (int64_t ox = 0; ox < g.out_w; ++ox) {
          const Real go = gy[((n * g.out_channels + co) * g.out_h + oy) * g.out_w + ox];
          if (gb) gb[co] += go;
          for (int64_t ci = 0; ci < g.in_channels; ++ci)
            for (int64_t ky = 0; ky < g.kernel_h; ++ky)
              for (int64_t kx = 0; kx < g.kernel_w; ++kx) {
                const int64_t iy = oy * g.stride - g.padding + ky * g.dilation;
                const int64_t ix = ox * g.stride - g.padding + kx * g.dilation;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                gw[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] +=
                    x[((n * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix] * go;
              }
        }
}

}  // namespace reference

}  // namespace lwisp::kernels
