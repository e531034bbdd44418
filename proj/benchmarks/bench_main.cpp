#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "geoslomo/evaluation.hpp"
#include "geoslomo/networks.hpp"
#include "geoslomo/random.hpp"
#include "geoslomo/warpcore.hpp"

using namespace geoslomo;

namespace {

Grid noise_grid(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Grid g(n, n);
  for (auto& v : g.values()) v = static_cast<float>(250.0 + 40.0 * rng.unit());
  return g;
}

void BM_BackwardWarp(benchmark::State& state) {
  const auto n = state.range(0);
  torch::manual_seed(0);
  const auto image = torch::randn({4, 1, n, n});
  const auto flow = torch::randn({4, 2, n, n}) * 3;
  for (auto _ : state) benchmark::DoNotOptimize(backward_warp(image, flow));
  state.SetItemsProcessed(state.iterations() * 4 * n * n);
}
BENCHMARK(BM_BackwardWarp)->Arg(64)->Arg(256);

void BM_BackwardWarpGrad(benchmark::State& state) {
  const auto n = state.range(0);
  torch::manual_seed(0);
  const auto image = torch::randn({4, 1, n, n}).requires_grad_(true);
  const auto flow = (torch::randn({4, 2, n, n}) * 3).requires_grad_(true);
  for (auto _ : state) backward_warp(image, flow).sum().backward();
}
BENCHMARK(BM_BackwardWarpGrad)->Arg(64);

void BM_Ssim(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Grid a = noise_grid(n, 1), b = noise_grid(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b, 150.0));
}
BENCHMARK(BM_Ssim)->Arg(64)->Arg(256);

void BM_Psnr(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Grid a = noise_grid(n, 1), b = noise_grid(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(psnr(a, b, 150.0));
}
BENCHMARK(BM_Psnr)->Arg(256);

void BM_NetworkForward(benchmark::State& state) {
  const auto n = state.range(0);
  const double width = static_cast<double>(state.range(1)) / 100.0;
  SlomoNet net(ModelSpec::make(Variant::task, 13, ChannelPlan::scaled(width)), 1);
  torch::NoGradGuard no_grad;
  const auto i0 = torch::randn({1, 1, n, n});
  const auto i1 = torch::randn({1, 1, n, n});
  for (auto _ : state) benchmark::DoNotOptimize(net->forward(i0, i1, time_tensor(0.5)).prediction);
}
BENCHMARK(BM_NetworkForward)->Args({64, 25})->Args({256, 25})->Args({256, 100})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
