#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "lfc/kernels.hpp"
#include "lfc/tensor_nn.hpp"

namespace {

namespace ks = lfc::kernels::serial;
namespace kp = lfc::kernels::parallel;

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Arguments: batch, in, out.
struct Layer {
  std::size_t batch, in, out;
  std::vector<double> x, w, bias, dy, y, dx, dw, db;

  explicit Layer(const benchmark::State& st)
      : batch(static_cast<std::size_t>(st.range(0))),
        in(static_cast<std::size_t>(st.range(1))),
        out(static_cast<std::size_t>(st.range(2))),
        x(random_vec(batch * in, 1)),
        w(random_vec(in * out, 2)),
        bias(random_vec(out, 3)),
        dy(random_vec(batch * out, 4)),
        y(batch * out),
        dx(batch * in),
        dw(in * out),
        db(out) {}

  void count(benchmark::State& st) const {
    st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(batch * in * out));
  }
};

void layer_args(benchmark::internal::Benchmark* b) {
  b->Args({1, 40, 2048});
  b->Args({256, 52, 2048});
  b->Args({256, 2048, 1024});
  b->Args({128, 128, 64});
}

template <auto Kernel>
void forward(benchmark::State& st) {
  Layer l(st);
  for (auto _ : st) {
    Kernel(l.x, l.batch, l.in, l.w, l.bias, l.out, l.y);
    benchmark::DoNotOptimize(l.y.data());
  }
  l.count(st);
}

template <auto Kernel>
void backward_input(benchmark::State& st) {
  Layer l(st);
  for (auto _ : st) {
    Kernel(l.dy, l.batch, l.in, l.w, l.out, l.dx);
    benchmark::DoNotOptimize(l.dx.data());
  }
  l.count(st);
}

template <auto Kernel>
void backward_params(benchmark::State& st) {
  Layer l(st);
  for (auto _ : st) {
    Kernel(l.x, l.dy, l.batch, l.in, l.out, l.dw, l.db);
    benchmark::DoNotOptimize(l.dw.data());
  }
  l.count(st);
}

BENCHMARK(forward<ks::affine_forward>)->Name("serial/affine_forward")->Apply(layer_args);
BENCHMARK(forward<kp::affine_forward>)->Name("parallel/affine_forward")->Apply(layer_args);
BENCHMARK(backward_input<ks::affine_backward_input>)
    ->Name("serial/affine_backward_input")
    ->Apply(layer_args);
BENCHMARK(backward_input<kp::affine_backward_input>)
    ->Name("parallel/affine_backward_input")
    ->Apply(layer_args);
BENCHMARK(backward_params<ks::affine_backward_params>)
    ->Name("serial/affine_backward_params")
    ->Apply(layer_args);
BENCHMARK(backward_params<kp::affine_backward_params>)
    ->Name("parallel/affine_backward_params")
    ->Apply(layer_args);

// One decision of a full-size policy on the five-area observation.
void policy_forward(benchmark::State& st) {
  lfc::Rng rng(1);
  lfc::Mlp net({40, 2048, 1024, 512, 24});
  net.init_uniform(rng);
  const auto obs = random_vec(40, 5);
  for (auto _ : st) benchmark::DoNotOptimize(net.forward(obs));
}
BENCHMARK(policy_forward)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
