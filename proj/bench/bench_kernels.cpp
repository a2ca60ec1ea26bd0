// Parallel vs serial-reference convolution kernels on the layer shapes the
// desk-scale generator actually runs.
#include <benchmark/benchmark.h>

#include <vector>

#include "nodulegan/kernels.hpp"
#include "nodulegan/rng.hpp"

namespace {

ngan::ConvProblem ladder_problem(int batch, int in_ch, int out_ch, int extent) {
  ngan::ConvProblem p;
  p.batch = batch;
  p.in_ch = in_ch;
  p.out_ch = out_ch;
  p.in = {extent, extent, extent};
  p.geom = ngan::ConvGeometry::cubic(4, 2, 1);
  for (int a = 0; a < 3; ++a) p.out[a] = p.geom.conv_out(a, extent);
  return p;
}

struct Buffers {
  std::vector<double> x, w, b, y;
  explicit Buffers(const ngan::ConvProblem& p)
      : x(p.batch * p.in_ch * p.in_voxels()),
        w(p.out_ch * p.in_ch * p.kernel_volume()),
        b(p.out_ch),
        y(p.batch * p.out_ch * p.out_voxels()) {
    ngan::RngStream rng(1);
    for (auto* v : {&x, &w, &b, &y})
      for (double& e : *v) e = rng.uniform(-1, 1);
  }
};

ngan::ConvProblem from_state(const benchmark::State& s) {
  return ladder_problem(static_cast<int>(s.range(0)), static_cast<int>(s.range(1)),
                        static_cast<int>(s.range(2)), static_cast<int>(s.range(3)));
}

void set_flops(benchmark::State& s, const ngan::ConvProblem& p) {
  const double macs = double(p.batch) * p.out_ch * p.out_voxels() * p.in_ch * p.kernel_volume();
  s.counters["MAC/s"] = benchmark::Counter(macs, benchmark::Counter::kIsIterationInvariantRate);
}

void BM_ForwardParallel(benchmark::State& s) {
  const auto p = from_state(s);
  Buffers buf(p);
  for (auto _ : s) ngan::kernels::conv_forward(p, buf.x, buf.w, buf.b, buf.y);
  set_flops(s, p);
}

void BM_ForwardReference(benchmark::State& s) {
  const auto p = from_state(s);
  Buffers buf(p);
  for (auto _ : s) ngan::kernels::reference::conv_forward(p, buf.x, buf.w, buf.b, buf.y);
  set_flops(s, p);
}

void BM_BackwardInputParallel(benchmark::State& s) {
  const auto p = from_state(s);
  Buffers buf(p);
  for (auto _ : s) ngan::kernels::conv_backward_input(p, buf.y, buf.w, buf.x);
  set_flops(s, p);
}

void BM_BackwardInputReference(benchmark::State& s) {
  const auto p = from_state(s);
  Buffers buf(p);
  for (auto _ : s) ngan::kernels::reference::conv_backward_input(p, buf.y, buf.w, buf.x);
  set_flops(s, p);
}

void BM_BackwardWeightParallel(benchmark::State& s) {
  const auto p = from_state(s);
  Buffers buf(p);
  for (auto _ : s) ngan::kernels::conv_backward_weight(p, buf.x, buf.y, buf.w);
  set_flops(s, p);
}

void BM_BackwardWeightReference(benchmark::State& s) {
  const auto p = from_state(s);
  Buffers buf(p);
  for (auto _ : s) ngan::kernels::reference::conv_backward_weight(p, buf.x, buf.y, buf.w);
  set_flops(s, p);
}

// {batch, in_ch, out_ch, extent}: first two encoder levels at 32^3
#define LADDER Args({8, 1, 8, 32})->Args({8, 8, 16, 16})->Unit(benchmark::kMillisecond)

BENCHMARK(BM_ForwardParallel)->LADDER;
BENCHMARK(BM_ForwardReference)->LADDER;
BENCHMARK(BM_BackwardInputParallel)->LADDER;
BENCHMARK(BM_BackwardInputReference)->LADDER;
BENCHMARK(BM_BackwardWeightParallel)->LADDER;
BENCHMARK(BM_BackwardWeightReference)->LADDER;

}  // namespace

BENCHMARK_MAIN();
