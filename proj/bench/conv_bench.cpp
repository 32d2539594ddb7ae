// lwisp/bench/conv_bench.cpp

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

// Parallel conv kernels against the serial reference loops.
// Arguments: channels, spatial extent, kernel size.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "lwisp/kernels.hpp"

namespace {

using lwisp::Real;
namespace k = lwisp::kernels;

struct Problem {
  k::ConvGeometry g;
  std::vector<Real> x, w, b, y;

  explicit Problem(const benchmark::State& s) {
    const int64_t c = s.range(0), e = s.range(1), ks = s.range(2);
    g = k::ConvGeometry::make(1, c, e, e, c, ks, ks, 1, ks / 2, 1);
    std::mt19937_64 rng(0);
    std::uniform_real_distribution<Real> u(-1, 1);
    x.resize(static_cast<size_t>(c * e * e));
    w.resize(static_cast<size_t>(c * g.patch_size()));
    b.resize(static_cast<size_t>(c));
    y.resize(static_cast<size_t>(c * g.out_pixels()));
    for (auto* v : {&x, &w, &b})
      for (Real& r : *v) r = u(rng);
  }

  void report(benchmark::State& s) const {
    s.counters["MAC/s"] = benchmark::Counter(static_cast<double>(g.macs()) * s.iterations(),
                                             benchmark::Counter::kIsRate);
  }
};

void BM_ConvForward(benchmark::State& s) {
  Problem p(s);
  for (auto _ : s) {
    k::conv2d_forward(p.g, p.x.data(), p.w.data(), p.b.data(), p.y.data());
    benchmark::DoNotOptimize(p.y.data());
  }
  p.report(s);
}

void BM_ConvForwardReference(benchmark::State& s) {
  Problem p(s);
  for (auto _ : s) {
    k::reference::conv2d_forward(p.g, p.x.data(), p.w.data(), p.b.data(), p.y.data());
    benchmark::DoNotOptimize(p.y.data());
  }
  p.report(s);
}

void BM_ConvBackwardWeight(benchmark::State& s) {
  Problem p(s);
  std::vector<Real> gw(p.w.size()), gb(p.b.size());
  for (auto _ : s) {
    k::conv2d_backward_weight(p.g, p.x.data(), p.y.data(), gw.data(), gb.data());
    benchmark::DoNotOptimize(gw.data());
  }
  p.report(s);
}

void BM_ConvBackwardWeightReference(benchmark::State& s) {
  Problem p(s);
  std::vector<Real> gw(p.w.size()), gb(p.b.size());
  for (auto _ : s) {
    k::reference::conv2d_backward_weight(p.g, p.x.data(), p.y.data(), gw.data(), gb.data());
    benchmark::DoNotOptimize(gw.data());
  }
  p.report(s);
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({16, 64, 3})->Args({32, 32, 3})->Args({64, 16, 3})->Args({16, 64, 7});
}

BENCHMARK(BM_ConvForward)->Apply(shapes);
BENCHMARK(BM_ConvForwardReference)->Apply(shapes);
BENCHMARK(BM_ConvBackwardWeight)->Apply(shapes);
BENCHMARK(BM_ConvBackwardWeightReference)->Apply(shapes);

}  // namespace

BENCHMARK_MAIN();
