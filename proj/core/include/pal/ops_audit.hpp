#pragma once

#include <cmath>
#include <cstdint>

namespace pal::audit {

// Instrumented native arithmetic. Every float multiply, divide and square
// root in the codebase that is *not* a piecewise affine replacement goes
// through these wrappers, so a counter snapshot proves which code paths
// executed native operations. Counters are per-thread and merged on demand.
//
// Ops are attributed to the current phase: `kSetup` covers declared
// setup-time work (parameter init, data generation, schedule and metric
// computation), `kSteady` covers everything else, in particular the
// forward/backward/optimizer arithmetic of a training step.

enum class Phase : uint8_t { kSteady = 0, kSetup = 1 };

struct Counts {
  uint64_t mul = 0;
  uint64_t div = 0;
  uint64_t sqrt = 0;
  uint64_t total() const noexcept { return mul + div + sqrt; }
};

struct Totals {
  Counts steady;
  Counts setup;
};

void set_enabled(bool on) noexcept;
bool enabled() noexcept;
void reset() noexcept;
Totals snapshot() noexcept;  // merged across all threads that ever counted

Phase current_phase() noexcept;
void set_phase(Phase p) noexcept;

class PhaseScope {
 public:
  explicit PhaseScope(Phase p) noexcept : prev_(current_phase()) { set_phase(p); }
  ~PhaseScope() { set_phase(prev_); }
  PhaseScope(const PhaseScope&) = delete;
  PhaseScope& operator=(const PhaseScope&) = delete;

 private:
  Phase prev_;
};

namespace detail {
struct ThreadCounts {
  Counts by_phase[2];
};
ThreadCounts& thread_counts() noexcept;
}  // namespace detail

inline void count_mul() noexcept {
  if (enabled()) ++detail::thread_counts().by_phase[int(current_phase())].mul;
}
inline void count_div() noexcept {
  if (enabled()) ++detail::thread_counts().by_phase[int(current_phase())].div;
}
inline void count_sqrt() noexcept {
  if (enabled()) ++detail::thread_counts().by_phase[int(current_phase())].sqrt;
}

inline float mul(float a, float b) noexcept {
  count_mul();
  return a * b;
}
inline float div(float a, float b) noexcept {
  count_div();
  return a / b;
}
inline float sqrt(float a) noexcept {
  count_sqrt();
  return std::sqrt(a);
}

}  // namespace pal::audit
