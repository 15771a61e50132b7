#include "palh/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

#include "pal/ops_audit.hpp"
#include "pal/pa_autodiff.hpp"
#include "pal/pa_scalar.hpp"

namespace palh {

using namespace pal;

namespace {

float default_pam(float a, float b) { return pam(a, b); }

std::string fmt(const char* pattern, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

// xorshift128+: cheap deterministic stream for the billion-pair sweeps.
struct FastRng {
  uint64_t s0, s1;
  explicit FastRng(uint64_t seed) {
    s0 = seed * 0x9E3779B97F4A7C15ull + 1;
    s1 = (seed ^ 0xDEADBEEFCAFEF00Dull) * 0xBF58476D1CE4E5B9ull + 3;
    for (int i = 0; i < 8; ++i) next();
  }
  uint64_t next() {
    uint64_t x = s0, y = s1;
    s0 = y;
    x ^= x << 23;
    s1 = x ^ y ^ (x >> 17) ^ (y >> 26);
    return s1 + y;
  }
};

SuiteResult int_add_equivalence(const VerifyOptions& opt, VerifyOptions::PamFn fn) {
  SuiteResult r{"int_add_equivalence", true, ""};
  int64_t pairs = 0, mismatches = 0;
  if (opt.exhaustive_bf16) {
    // All positive normals on the 7-bit-mantissa grid: 254 exponents x 128
    // mantissas = 32512 values, ~1.06e9 ordered pairs.
    std::vector<float> grid;
    grid.reserve(254 * 128);
    for (uint32_t e = 1; e <= 254; ++e)
      for (uint32_t m = 0; m < 128; ++m)
        grid.push_back(bits_to_float((e << 23) | (m << 16)));
    for (float a : grid)
      for (float b : grid) {
        if (float_bits(fn(a, b)) != float_bits(pam_int_add(a, b))) ++mismatches;
      }
    pairs += int64_t(grid.size()) * int64_t(grid.size());
  }
  FastRng rng(opt.seed);
  for (int64_t i = 0; i < opt.random_pairs; ++i) {
    uint64_t w = rng.next();
    float a = bits_to_float(uint32_t(w));
    float b = bits_to_float(uint32_t(w >> 32));
    if (float_bits(fn(a, b)) != float_bits(pam_int_add(a, b))) ++mismatches;
    ++pairs;
  }
  r.pass = mismatches == 0;
  r.detail = fmt("pairs=%lld mismatches=%lld", (long long)pairs, (long long)mismatches);
  return r;
}

SuiteResult error_bound_scan(VerifyOptions::PamFn fn) {
  SuiteResult r{"error_bound", true, ""};
  const int n = 1 << 12;
  double min_rel = 0.0, max_rel = -1.0;
  uint32_t min_i = 0, min_j = 0;
  int64_t zero_mantissa_violations = 0, bound_violations = 0;
  for (int i = 0; i < n; ++i) {
    float x1 = bits_to_float((127u << 23) | (uint32_t(i) << 11));
    for (int j = 0; j < n; ++j) {
      float x2 = bits_to_float((127u << 23) | (uint32_t(j) << 11));
      double exact = double(x1) * double(x2);
      double rel = (double(fn(x1, x2)) - exact) / exact;
      if (rel > 0.0 || rel < -1.0 / 9.0 - 1e-15) ++bound_violations;
      if ((i == 0 || j == 0) && rel != 0.0) ++zero_mantissa_violations;
      if (rel < min_rel) {
        min_rel = rel;
        min_i = uint32_t(i);
        min_j = uint32_t(j);
      }
      if (rel > max_rel) max_rel = rel;
    }
  }
  bool min_at_half = min_i == (1u << 11) && min_j == (1u << 11);
  double target = -1.0 / 9.0;
  bool min_is_ninth = std::abs(min_rel - target) <=
                      std::abs(std::nextafter(target, 0.0) - target);
  r.pass = bound_violations == 0 && zero_mantissa_violations == 0 && min_at_half &&
           min_is_ninth;
  r.detail = fmt("min_rel=%.9g at mantissa pair (%.6g,%.6g) max_rel=%.3g "
                 "bound_violations=%lld zero_mantissa_violations=%lld",
                 min_rel, double(min_i) / double(n), double(min_j) / double(n),
                 max_rel, (long long)bound_violations,
                 (long long)zero_mantissa_violations);
  return r;
}

SuiteResult inverse_roundtrip(const VerifyOptions& opt) {
  SuiteResult r{"inverse_roundtrip", true, ""};
  FastRng rng(opt.seed ^ 0x1234567);
  int64_t inverse_checked = 0, inverse_failures = 0;
  for (int64_t i = 0; i < opt.inverse_cases; ++i) {
    uint64_t w = rng.next();
    uint32_t ua = uint32_t(w), ub = uint32_t(w >> 32);
    if (!is_normal_bits(ua) || !is_normal_bits(ub)) continue;
    float a = bits_to_float(ua), b = bits_to_float(ub);
    PaFlags f1, f2;
    float y = pam(a, b, PaFormat{}, &f1);
    float back = pad(y, b, PaFormat{}, &f2);
    if (f1.clamped || f1.flushed || f2.clamped || f2.flushed) continue;
    ++inverse_checked;
    if (float_bits(back) != float_bits(a)) ++inverse_failures;
  }
  int64_t rt_failures = 0;
  for (int64_t i = 0; i < opt.roundtrip_cases; ++i) {
    uint64_t w = rng.next();
    uint32_t field = 126 + uint32_t(w % 3);  // [0.5, 4)
    float x = bits_to_float((field << 23) | (uint32_t(w >> 32) & kMantMask));
    if (float_bits(paexp2(palog2(x))) != float_bits(x)) ++rt_failures;
  }
  r.pass = inverse_failures == 0 && rt_failures == 0;
  r.detail = fmt("inverse_checked=%lld inverse_failures=%lld roundtrip_cases=%lld "
                 "roundtrip_failures=%lld",
                 (long long)inverse_checked, (long long)inverse_failures,
                 (long long)opt.roundtrip_cases, (long long)rt_failures);
  return r;
}

SuiteResult gradient_checks(const VerifyOptions& opt) {
  SuiteResult r{"gradient_checks", true, ""};
  std::mt19937 g(uint32_t(opt.seed + 99));
  auto rand_field = [&](uint32_t lo, uint32_t hi, bool signed_) {
    uint32_t field = lo + g() % (hi - lo + 1);
    uint32_t sign = signed_ ? (g() & 1u) << 31 : 0u;
    return bits_to_float(sign | (field << 23) | (g() & kMantMask));
  };
  int64_t checked = 0, failures = 0, skipped = 0;
  const float h = 0x1.0p-10f;
  // Until every primitive has grad_points non-breakpoint checks.
  int64_t per_primitive[5] = {0, 0, 0, 0, 0};
  for (int64_t iter = 0; iter < int64_t(opt.grad_points) * 3; ++iter) {
    bool done = true;
    for (int64_t c : per_primitive) done = done && c >= opt.grad_points;
    if (done) break;
    float b = rand_field(120, 134, true);
    float x = rand_field(120, 134, false);
    std::function<pal::ad::Var(pal::ad::Tape&, pal::ad::Var)> fns[5] = {
        [&](pal::ad::Tape& t, pal::ad::Var v) { return t.pam(v, t.constant_scalar(b)); },
        [&](pal::ad::Tape& t, pal::ad::Var v) { return t.pam(t.constant_scalar(b), v); },
        [&](pal::ad::Tape& t, pal::ad::Var v) { return t.pad(v, t.constant_scalar(b)); },
        [&](pal::ad::Tape& t, pal::ad::Var v) { return t.paexp2(v); },
        [&](pal::ad::Tape& t, pal::ad::Var v) { return t.palog2(v); }};
    for (int k = 0; k < 5; ++k) {
      if (per_primitive[k] >= opt.grad_points) continue;
      pal::ad::GradCheckReport rep = pal::ad::grad_check(fns[k], x, h);
      if (rep.breakpoint_flag) {
        ++skipped;
        continue;
      }
      ++checked;
      ++per_primitive[k];
      if (rep.rel_err > 0x1.0p-10) ++failures;
    }
  }
  int64_t min_per_primitive = per_primitive[0];
  for (int64_t c : per_primitive) min_per_primitive = std::min(min_per_primitive, c);
  // Zero-mantissa agreement between modes for the pam/pad rules.
  int64_t agree_failures = 0;
  for (int i = 0; i < 20000; ++i) {
    float a = ((g() & 1) ? 1.0f : -1.0f) * pow2(int(g() % 16) - 8);
    float b = ((g() & 1) ? 1.0f : -1.0f) * pow2(int(g() % 16) - 8);
    float seed = pow2(int(g() % 8) - 4);
    auto grad_of = [&](bool exact, int which) {
      pal::ad::Tape t;
      pal::ad::Var in = t.input(pal::Tensor::scalar(a));
      pal::ad::Var out = which == 0   ? t.pam(in, t.constant_scalar(b))
                         : which == 1 ? t.pad(in, t.constant_scalar(b))
                                      : t.pad(t.constant_scalar(b), in);
      auto gr = t.backward(out, pal::Tensor::scalar(seed),
                           pal::ad::DerivativeModes::all(
                               exact ? pal::ad::DerivativeMode::Exact
                                     : pal::ad::DerivativeMode::Approximate));
      return float_bits(gr.wrt(in)[0]);
    };
    for (int which = 0; which < 3; ++which)
      if (grad_of(true, which) != grad_of(false, which)) ++agree_failures;
  }
  r.pass = failures == 0 && agree_failures == 0 &&
           min_per_primitive >= opt.grad_points;
  r.detail = fmt("fd_checked=%lld fd_failures=%lld min_per_primitive=%lld "
                 "breakpoints_skipped=%lld zero_mantissa_mode_disagreements=%lld",
                 (long long)checked, (long long)failures,
                 (long long)min_per_primitive, (long long)skipped,
                 (long long)agree_failures);
  return r;
}

SuiteResult sign_rule(const VerifyOptions& opt, VerifyOptions::PamFn fn) {
  SuiteResult r{"sign_rule", true, ""};
  FastRng rng(opt.seed ^ 0xABCDEF);
  int64_t violations = 0;
  for (int64_t i = 0; i < 2000000; ++i) {
    uint64_t w = rng.next();
    uint32_t ua = uint32_t(w), ub = uint32_t(w >> 32);
    if (!is_normal_bits(ua) || !is_normal_bits(ub)) continue;
    float a = bits_to_float(ua), b = bits_to_float(ub);
    float y = fn(a, b);
    if (y == 0.0f || !std::isfinite(y)) continue;
    if (std::signbit(y) != (std::signbit(a) != std::signbit(b))) ++violations;
  }
  r.pass = violations == 0;
  r.detail = fmt("violations=%lld", (long long)violations);
  return r;
}

SuiteResult commutativity_and_pow2(const VerifyOptions& opt,
                                   VerifyOptions::PamFn fn) {
  SuiteResult r{"commutativity_pow2_exactness", true, ""};
  FastRng rng(opt.seed ^ 0x77777);
  int64_t comm_violations = 0, exact_violations = 0;
  for (int64_t i = 0; i < 2000000; ++i) {
    uint64_t w = rng.next();
    float a = bits_to_float(uint32_t(w));
    float b = bits_to_float(uint32_t(w >> 32));
    if (float_bits(fn(a, b)) != float_bits(fn(b, a))) ++comm_violations;
  }
  std::mt19937 g(uint32_t(opt.seed + 5));
  for (int i = 0; i < 500000; ++i) {
    uint32_t field = 60 + g() % 130;
    float a = bits_to_float(((g() & 1u) << 31) | (field << 23) | (g() & kMantMask));
    float b = ((g() & 1) ? 1.0f : -1.0f) * pow2(int(g() % 40) - 20);
    PaFlags fl;
    float y = pam(a, b, PaFormat{}, &fl);
    if (fl.clamped || fl.flushed) continue;
    if (float_bits(fn(a, b)) != float_bits(y) || double(y) != double(a) * double(b))
      ++exact_violations;
  }
  r.pass = comm_violations == 0 && exact_violations == 0;
  r.detail = fmt("commutativity_violations=%lld pow2_exactness_violations=%lld",
                 (long long)comm_violations, (long long)exact_violations);
  return r;
}

SuiteResult instrumentation_audit(const VerifyOptions& opt) {
  SuiteResult r{"instrumentation_audit", true, ""};
  audit::set_enabled(true);
  audit::reset();
  std::mt19937 g(uint32_t(opt.seed + 7));
  float sink = 0.0f;
  for (int i = 0; i < 50000; ++i) {
    uint32_t field = 120 + g() % 10;
    float a = bits_to_float((field << 23) | (g() & kMantMask));
    float b = bits_to_float((field << 23) | (g() & kMantMask));
    sink += pam(a, b) + pad(a, b) + paexp2(palog2(a)) + pasqrt(b) + paexp(palog(a));
  }
  // A PA forward/backward pass through the tape primitives.
  pal::ad::Tape t;
  pal::Tensor a({8, 8}), b({8, 8});
  for (int64_t i = 0; i < 64; ++i) {
    a[i] = bits_to_float(((120 + g() % 10) << 23) | (g() & kMantMask));
    b[i] = bits_to_float(((120 + g() % 10) << 23) | (g() & kMantMask));
  }
  auto va = t.input(a);
  auto vb = t.input(b);
  auto y = t.sum_all(t.paexp2(t.palog2(t.relu(t.matmul(va, vb, MatmulOptions::pam())))));
  t.backward(y, pal::Tensor::scalar(1.0f),
             pal::ad::DerivativeModes::all(pal::ad::DerivativeMode::Exact));
  t.backward(y, pal::Tensor::scalar(1.0f),
             pal::ad::DerivativeModes::all(pal::ad::DerivativeMode::Approximate));
  audit::Totals totals = audit::snapshot();
  r.pass = totals.steady.total() == 0 && std::isfinite(sink);
  r.detail = fmt("steady_mul=%llu steady_div=%llu steady_sqrt=%llu",
                 (unsigned long long)totals.steady.mul,
                 (unsigned long long)totals.steady.div,
                 (unsigned long long)totals.steady.sqrt);
  return r;
}

}  // namespace

std::vector<SuiteResult> run_verify_suites(const VerifyOptions& opt) {
  VerifyOptions::PamFn fn = opt.pam_impl ? opt.pam_impl : default_pam;
  std::vector<SuiteResult> results;
  results.push_back(int_add_equivalence(opt, fn));
  results.push_back(error_bound_scan(fn));
  results.push_back(inverse_roundtrip(opt));
  results.push_back(gradient_checks(opt));
  results.push_back(sign_rule(opt, fn));
  results.push_back(commutativity_and_pow2(opt, fn));
  results.push_back(instrumentation_audit(opt));
  return results;
}

std::string format_verify_report(const std::vector<SuiteResult>& results) {
  std::ostringstream os;
  for (const SuiteResult& r : results)
    os << "suite=" << r.name << " status=" << (r.pass ? "pass" : "FAIL") << " "
       << r.detail << "\n";
  os << "overall=" << (all_passed(results) ? "pass" : "FAIL") << "\n";
  return os.str();
}

bool all_passed(const std::vector<SuiteResult>& results) {
  for (const SuiteResult& r : results)
    if (!r.pass) return false;
  return true;
}

}  // namespace palh
