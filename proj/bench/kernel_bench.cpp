// Parallel kernels against their serial references. Run with OMP_NUM_THREADS set to compare
// scaling; on one core the gap is the vectorization and loop-order work alone.

#include <benchmark/benchmark.h>

#include <vector>

#include "affgrasp/dataset.hpp"
#include "affgrasp/grasp.hpp"
#include "affgrasp/nets/kernels.hpp"
#include "affgrasp/rng.hpp"

using namespace affgrasp;
using nets::Tensor;

namespace {

Tensor<float> random_tensor(int n, int c, int r, std::uint64_t seed) {
  Tensor<float> t(n, c, r, r, r);
  Rng rng(seed);
  for (auto& v : t.data) v = static_cast<float>(uniform01(rng) * 2 - 1);
  return t;
}

std::vector<float> random_vector(std::size_t n, std::uint64_t seed) {
  std::vector<float> v(n);
  Rng rng(seed);
  for (auto& x : v) x = static_cast<float>(uniform01(rng) - 0.5) * 0.2f;
  return v;
}

// args: channels in, channels out, resolution
struct ConvCase {
  Tensor<float> x, dy;
  std::vector<float> w, b;
  int cout;
  explicit ConvCase(const benchmark::State& s)
      : x(random_tensor(2, static_cast<int>(s.range(0)), static_cast<int>(s.range(2)), 1)),
        dy(random_tensor(2, static_cast<int>(s.range(1)), static_cast<int>(s.range(2)), 2)),
        w(random_vector(static_cast<std::size_t>(s.range(0) * s.range(1) * 27), 3)),
        b(random_vector(static_cast<std::size_t>(s.range(1)), 4)),
        cout(static_cast<int>(s.range(1))) {}
};

void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({1, 16, 32})->Args({16, 16, 32})->Args({32, 64, 16})->Unit(benchmark::kMillisecond);
}

void BM_conv_forward(benchmark::State& s) {
  ConvCase c(s);
  for (auto _ : s) benchmark::DoNotOptimize(nets::kernels::conv3d_forward<float>(c.x, c.w, c.b, c.cout, 3));
}
void BM_conv_forward_ref(benchmark::State& s) {
  ConvCase c(s);
  for (auto _ : s) benchmark::DoNotOptimize(nets::reference::conv3d_forward<float>(c.x, c.w, c.b, c.cout, 3));
}
void BM_conv_backward(benchmark::State& s) {
  ConvCase c(s);
  for (auto _ : s) benchmark::DoNotOptimize(nets::kernels::conv3d_backward<float>(c.x, c.w, c.dy, 3));
}
void BM_conv_backward_ref(benchmark::State& s) {
  ConvCase c(s);
  for (auto _ : s) benchmark::DoNotOptimize(nets::reference::conv3d_backward<float>(c.x, c.w, c.dy, 3));
}
BENCHMARK(BM_conv_forward)->Apply(conv_args);
BENCHMARK(BM_conv_forward_ref)->Apply(conv_args);
BENCHMARK(BM_conv_backward)->Apply(conv_args);
BENCHMARK(BM_conv_backward_ref)->Apply(conv_args);

// The kernel also records the argmax the backward pass needs; the reference only takes the max.
void BM_maxpool(benchmark::State& s) {
  const auto x = random_tensor(2, 32, 32, 5);
  std::vector<std::uint32_t> argmax;
  for (auto _ : s) benchmark::DoNotOptimize(nets::kernels::maxpool3d_forward<float>(x, argmax));
}
void BM_maxpool_ref(benchmark::State& s) {
  const auto x = random_tensor(2, 32, 32, 5);
  for (auto _ : s) benchmark::DoNotOptimize(nets::reference::maxpool3d_forward<float>(x));
}
void BM_upsample(benchmark::State& s) {
  const auto x = random_tensor(2, 32, 16, 6);
  for (auto _ : s) benchmark::DoNotOptimize(nets::kernels::upsample3d_forward<float>(x));
}
void BM_upsample_ref(benchmark::State& s) {
  const auto x = random_tensor(2, 32, 16, 6);
  for (auto _ : s) benchmark::DoNotOptimize(nets::reference::upsample3d_forward<float>(x));
}
BENCHMARK(BM_maxpool)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_maxpool_ref)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_upsample)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_upsample_ref)->Unit(benchmark::kMicrosecond);

// Path scoring on a 5000-point object, all candidates of one grasp point.
struct ScoreCase {
  data::LabeledSample sample = data::generate_synthetic(data::Category::Mug, 3, 5000);
  std::vector<grasp::ApproachPath> paths;
  geom::Vec3 axis = geom::Vec3::UnitZ();
  ScoreCase() {
    grasp::PlannerConfig pc;
    paths = grasp::generate_candidates(sample.cloud.points.front(), sample.cloud.points, pc);
  }
};

void BM_score_paths(benchmark::State& s) {
  ScoreCase c;
  const grasp::PackedPoints packed(c.sample.cloud.points);
  for (auto _ : s) {
    grasp::score_paths(c.paths, packed, c.axis, 0.01);
    benchmark::ClobberMemory();
  }
  s.SetItemsProcessed(s.iterations() * static_cast<std::int64_t>(c.paths.size()));
}
void BM_score_paths_ref(benchmark::State& s) {
  ScoreCase c;
  for (auto _ : s) {
    grasp::reference::score_paths(c.paths, c.sample.cloud.points, c.axis, 0.01);
    benchmark::ClobberMemory();
  }
  s.SetItemsProcessed(s.iterations() * static_cast<std::int64_t>(c.paths.size()));
}
BENCHMARK(BM_score_paths)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_score_paths_ref)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
