#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "cah/kernels.hpp"

using namespace cah::kernels;

namespace {

std::vector<float> noise(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> d(0, 1);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// 64x64 maps, the tiny variant's working size
Conv2dGeometry conv_geometry(const benchmark::State& state) {
  Conv2dGeometry g;
  g.batch = 1;
  g.in_channels = static_cast<std::size_t>(state.range(0));
  g.out_channels = static_cast<std::size_t>(state.range(0));
  g.in_h = g.in_w = 64;
  g.kernel_h = g.kernel_w = 3;
  g.padding = 1;
  return g;
}

template <bool Reference>
void BM_ConvForward(benchmark::State& state) {
  const auto g = conv_geometry(state);
  const auto in = noise(g.input_size(), 1), w = noise(g.weight_size(), 2), b = noise(g.out_channels, 3);
  std::vector<float> out(g.output_size());
  for (auto _ : state) {
    if constexpr (Reference)
      conv2d_forward_reference<float>(g, in, w, b, out);
    else
      conv2d_forward<float>(g, in, w, b, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * g.output_size() * g.in_channels * 9));
}

template <bool Reference>
void BM_ConvBackward(benchmark::State& state) {
  const auto g = conv_geometry(state);
  const auto in = noise(g.input_size(), 1), w = noise(g.weight_size(), 2), go = noise(g.output_size(), 3);
  std::vector<float> gi(g.input_size()), gw(g.weight_size()), gb(g.out_channels);
  for (auto _ : state) {
    if constexpr (Reference) {
      conv2d_backward_input_reference<float>(g, go, w, gi);
      conv2d_backward_params_reference<float>(g, in, go, gw, gb);
    } else {
      conv2d_backward_input<float>(g, go, w, gi);
      conv2d_backward_params<float>(g, in, go, gw, gb);
    }
    benchmark::DoNotOptimize(gi.data());
    benchmark::DoNotOptimize(gw.data());
  }
}

// mild rotation plus shift, output -> input
constexpr double kSampleFrom[9] = {0.98, -0.05, 2.5, 0.04, 1.01, -1.5, 1e-4, -2e-4, 1.0};

template <bool Reference>
void BM_Warp(benchmark::State& state) {
  WarpGeometry g;
  g.planes = static_cast<std::size_t>(state.range(0));
  g.height = g.width = 128;
  const auto in = noise(g.planes * g.height * g.width, 4);
  std::vector<float> out(in.size()), valid(g.height * g.width);
  for (auto _ : state) {
    if constexpr (Reference)
      warp_bilinear_reference<float>(g, in, kSampleFrom, out, valid);
    else
      warp_bilinear<float>(g, in, kSampleFrom, out, valid);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Reference>
void BM_WarpBackward(benchmark::State& state) {
  WarpGeometry g;
  g.planes = static_cast<std::size_t>(state.range(0));
  g.height = g.width = 128;
  const auto in = noise(g.planes * g.height * g.width, 4), go = noise(in.size(), 5);
  std::vector<float> gi(in.size());
  double gm[9];
  for (auto _ : state) {
    if constexpr (Reference)
      warp_bilinear_backward_reference<float>(g, in, kSampleFrom, go, gi, gm);
    else
      warp_bilinear_backward<float>(g, in, kSampleFrom, go, gi, gm);
    benchmark::DoNotOptimize(gi.data());
  }
}

}  // namespace

BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/serial_reference")->Arg(8)->Arg(32);
BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/openmp")->Arg(8)->Arg(32);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/serial_reference")->Arg(8)->Arg(32);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/openmp")->Arg(8)->Arg(32);
BENCHMARK(BM_Warp<true>)->Name("warp/serial_reference")->Arg(1)->Arg(8);
BENCHMARK(BM_Warp<false>)->Name("warp/openmp")->Arg(1)->Arg(8);
BENCHMARK(BM_WarpBackward<true>)->Name("warp_backward/serial_reference")->Arg(1)->Arg(8);
BENCHMARK(BM_WarpBackward<false>)->Name("warp_backward/openmp")->Arg(1)->Arg(8);

BENCHMARK_MAIN();
