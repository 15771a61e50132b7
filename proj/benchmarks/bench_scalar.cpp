#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "pal/pa_scalar.hpp"

namespace {

std::vector<float> random_normals(size_t n, uint32_t seed) {
  std::mt19937 g(seed);
  std::vector<float> v(n);
  for (auto& x : v) {
    uint32_t field = 100 + g() % 56;
    x = pal::bits_to_float(((g() & 1u) << 31) | (field << 23) | (g() & pal::kMantMask));
  }
  return v;
}

void BM_native_mul(benchmark::State& state) {
  auto a = random_normals(4096, 1), b = random_normals(4096, 2);
  for (auto _ : state) {
    float acc = 0.0f;
    for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    benchmark::DoNotOptimize(acc);
  }
}
BENCHMARK(BM_native_mul);

void BM_pam_parts(benchmark::State& state) {
  auto a = random_normals(4096, 1), b = random_normals(4096, 2);
  for (auto _ : state) {
    float acc = 0.0f;
    for (size_t i = 0; i < a.size(); ++i) acc += pal::pam(a[i], b[i]);
    benchmark::DoNotOptimize(acc);
  }
}
BENCHMARK(BM_pam_parts);

void BM_pam_int_add(benchmark::State& state) {
  auto a = random_normals(4096, 1), b = random_normals(4096, 2);
  for (auto _ : state) {
    float acc = 0.0f;
    for (size_t i = 0; i < a.size(); ++i) acc += pal::pam_int_add(a[i], b[i]);
    benchmark::DoNotOptimize(acc);
  }
}
BENCHMARK(BM_pam_int_add);

void BM_pad(benchmark::State& state) {
  auto a = random_normals(4096, 1), b = random_normals(4096, 2);
  for (auto _ : state) {
    float acc = 0.0f;
    for (size_t i = 0; i < a.size(); ++i) acc += pal::pad(a[i], b[i]);
    benchmark::DoNotOptimize(acc);
  }
}
BENCHMARK(BM_pad);

void BM_paexp2(benchmark::State& state) {
  std::mt19937 g(3);
  std::vector<float> xs(4096);
  for (auto& x : xs) x = float(g() % 200) * 0.25f - 25.0f;
  for (auto _ : state) {
    float acc = 0.0f;
    for (float x : xs) acc += pal::paexp2(x);
    benchmark::DoNotOptimize(acc);
  }
}
BENCHMARK(BM_paexp2);

void BM_palog2(benchmark::State& state) {
  auto xs = random_normals(4096, 4);
  for (auto& x : xs) x = std::fabs(x);
  for (auto _ : state) {
    float acc = 0.0f;
    for (float x : xs) acc += pal::palog2(x);
    benchmark::DoNotOptimize(acc);
  }
}
BENCHMARK(BM_palog2);

void BM_quantize(benchmark::State& state) {
  auto xs = random_normals(4096, 5);
  pal::PaFormat fmt;
  fmt.mantissa_bits = int(state.range(0));
  for (auto _ : state) {
    float acc = 0.0f;
    for (float x : xs) acc += pal::quantize_mantissa(x, fmt);
    benchmark::DoNotOptimize(acc);
  }
}
BENCHMARK(BM_quantize)->Arg(7)->Arg(3);

}  // namespace
