// Serial reference vs OpenMP convolution at the teacher's widest layers.
// Set OMP_NUM_THREADS to compare thread counts.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "stagematte/nn/kernels.hpp"

using namespace stagematte::nn;

namespace {

struct Problem {
    ConvShape shape;
    Tensor<float> in, out, grad_out, grad_in;
    std::vector<float> weight, bias, grad_w, grad_b;

    Problem(int cin, int cout, int size, int stride) : shape{cin, cout, 3, stride}
    {
        std::mt19937_64 rng(5);
        std::normal_distribution<float> n(0.f, 0.1f);
        in = Tensor<float>(cin, size, size);
        for (auto& v : in.data) v = n(rng);
        const int o = shape.out_extent(size);
        out = Tensor<float>(cout, o, o);
        grad_out = Tensor<float>(cout, o, o);
        for (auto& v : grad_out.data) v = n(rng);
        grad_in = Tensor<float>(cin, size, size);
        weight.resize(shape.weight_count());
        for (auto& v : weight) v = n(rng);
        bias.assign(cout, 0.f);
        grad_w.assign(weight.size(), 0.f);
        grad_b.assign(cout, 0.f);
    }
};

// args: in channels, out channels, spatial size, stride
void shapes(benchmark::internal::Benchmark* b)
{
    b->Args({3, 16, 64, 2})->Args({64, 64, 8, 1})->Args({96, 32, 16, 1})->Args({24, 16, 64, 1});
}

template <bool Parallel>
void BM_Forward(benchmark::State& state)
{
    Problem p(state.range(0), state.range(1), state.range(2), state.range(3));
    for (auto _ : state) {
        if constexpr (Parallel)
            kernels::conv2d_forward<float>(p.in, p.weight, p.bias, p.shape, p.out);
        else
            reference::conv2d_forward<float>(p.in, p.weight, p.bias, p.shape, p.out);
        benchmark::DoNotOptimize(p.out.data.data());
    }
}

template <bool Parallel>
void BM_Backward(benchmark::State& state)
{
    Problem p(state.range(0), state.range(1), state.range(2), state.range(3));
    for (auto _ : state) {
        if constexpr (Parallel) {
            kernels::conv2d_backward_input<float>(p.grad_out, p.weight, p.shape, p.grad_in);
            kernels::conv2d_backward_params<float>(p.grad_out, p.in, p.shape, p.grad_w, p.grad_b);
        } else {
            reference::conv2d_backward_input<float>(p.grad_out, p.weight, p.shape, p.grad_in);
            reference::conv2d_backward_params<float>(p.grad_out, p.in, p.shape, p.grad_w, p.grad_b);
        }
        benchmark::DoNotOptimize(p.grad_in.data.data());
    }
}

}  // namespace

BENCHMARK(BM_Forward<false>)->Name("conv_forward/serial")->Apply(shapes);
BENCHMARK(BM_Forward<true>)->Name("conv_forward/openmp")->Apply(shapes);
BENCHMARK(BM_Backward<false>)->Name("conv_backward/serial")->Apply(shapes);
BENCHMARK(BM_Backward<true>)->Name("conv_backward/openmp")->Apply(shapes);
BENCHMARK_MAIN();
