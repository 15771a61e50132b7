#include "pal/ops_audit.hpp"

#include <atomic>
#include <mutex>
#include <vector>

namespace pal::audit {

namespace {
std::atomic<bool> g_enabled{true};

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}
std::vector<detail::ThreadCounts*>& registry() {
  static std::vector<detail::ThreadCounts*> r;
  return r;
}

thread_local Phase t_phase = Phase::kSteady;
}  // namespace

namespace detail {
ThreadCounts& thread_counts() noexcept {
  thread_local ThreadCounts* slot = [] {
    auto* c = new ThreadCounts();  // lives until process exit; merged via registry
    std::lock_guard<std::mutex> lock(registry_mutex());
    registry().push_back(c);
    return c;
  }();
  return *slot;
}
}  // namespace detail

void set_enabled(bool on) noexcept { g_enabled.store(on, std::memory_order_relaxed); }
bool enabled() noexcept { return g_enabled.load(std::memory_order_relaxed); }

void reset() noexcept {
  std::lock_guard<std::mutex> lock(registry_mutex());
  for (auto* c : registry()) {
    c->by_phase[0] = Counts{};
    c->by_phase[1] = Counts{};
  }
}

Totals snapshot() noexcept {
  Totals t;
  std::lock_guard<std::mutex> lock(registry_mutex());
  for (auto* c : registry()) {
    t.steady.mul += c->by_phase[0].mul;
    t.steady.div += c->by_phase[0].div;
    t.steady.sqrt += c->by_phase[0].sqrt;
    t.setup.mul += c->by_phase[1].mul;
    t.setup.div += c->by_phase[1].div;
    t.setup.sqrt += c->by_phase[1].sqrt;
  }
  return t;
}

Phase current_phase() noexcept { return t_phase; }
void set_phase(Phase p) noexcept { t_phase = p; }

}  // namespace pal::audit
