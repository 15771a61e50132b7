#include <benchmark/benchmark.h>

#include <random>

#include "pal/pa_tensor.hpp"

namespace {

pal::Tensor random_matrix(int64_t r, int64_t c, uint32_t seed) {
  std::mt19937 g(seed);
  pal::Tensor t({r, c});
  for (int64_t i = 0; i < t.size(); ++i) {
    uint32_t field = 120 + g() % 16;
    t[i] = pal::bits_to_float(((g() & 1u) << 31) | (field << 23) |
                              (g() & pal::kMantMask));
  }
  return t;
}

void BM_matmul(benchmark::State& state, pal::MatmulOptions opt) {
  int64_t n = state.range(0);
  pal::Tensor a = random_matrix(n, n, 1);
  pal::Tensor b = random_matrix(n, n, 2);
  for (auto _ : state) {
    pal::Tensor c = pal::matmul(a, b, opt);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}

void BM_matmul_standard(benchmark::State& state) {
  BM_matmul(state, pal::MatmulOptions::standard());
}
void BM_matmul_pam(benchmark::State& state) {
  BM_matmul(state, pal::MatmulOptions::pam());
}
void BM_matmul_pam_q4(benchmark::State& state) {
  pal::PaFormat fmt;
  fmt.mantissa_bits = 4;
  BM_matmul(state, pal::MatmulOptions::pam_quantized(fmt));
}

BENCHMARK(BM_matmul_standard)->Arg(32)->Arg(128);
BENCHMARK(BM_matmul_pam)->Arg(32)->Arg(128);
BENCHMARK(BM_matmul_pam_q4)->Arg(32)->Arg(128);

}  // namespace

int main(int argc, char** argv) {
  ::benchmark::Initialize(&argc, argv);
  if (::benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  ::benchmark::RunSpecifiedBenchmarks();
  ::benchmark::Shutdown();
  return 0;
}
