#include <benchmark/benchmark.h>

#include <random>

#include "baet/autodiff/graph.hpp"

namespace {

using baet::ad::Graph;
using baet::ad::Tensor;

Tensor random(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Tensor t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = n(rng);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  const Tensor a = random(30, d, rng), b = random(d, d, rng);
  for (auto _ : state) {
    Graph g;
    benchmark::DoNotOptimize(g.value(g.matmul(g.constant(a), g.constant(b))).data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(30 * d * d));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(128);

void BM_AttentionForwardBackward(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  const Tensor x = random(30, d, rng);
  baet::ad::Mask mask(30, 1);
  for (std::size_t i = 20; i < 30; ++i) mask[i] = 0;
  for (auto _ : state) {
    Graph g;
    const auto v = g.variable(x);
    g.backward(g.sum(g.attention(v, v, v, mask)));
    benchmark::DoNotOptimize(g.grad(v).data());
  }
}
BENCHMARK(BM_AttentionForwardBackward)->Arg(16)->Arg(128);

}  // namespace
