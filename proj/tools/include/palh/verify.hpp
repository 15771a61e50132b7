#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace palh {

struct SuiteResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct VerifyOptions {
  bool exhaustive_bf16 = true;       // all positive-normal bfloat16-grid pairs
  int64_t random_pairs = 100000000;  // random binary32 pairs for equivalence
  int64_t inverse_cases = 10000000;
  int64_t roundtrip_cases = 10000000;
  int grad_points = 10000;
  uint64_t seed = 1;

  // Implementation under test; defaults to the library pam. The hook exists
  // so a deliberately broken implementation can be shown to fail.
  using PamFn = float (*)(float, float);
  PamFn pam_impl = nullptr;
};

std::vector<SuiteResult> run_verify_suites(const VerifyOptions& opt);
std::string format_verify_report(const std::vector<SuiteResult>& results);
bool all_passed(const std::vector<SuiteResult>& results);

}  // namespace palh
