#pragma once

#include <cstdint>

#include "pal/pa_nn.hpp"

namespace palh {

// Probes whether the scalar loss is piecewise affine along random 1-D lines
// in input (embedding) space or weight space. The loss is sampled at evenly
// spaced collinear points; per-node segment fingerprints from each forward
// tape detect breakpoints, and within every breakpoint-free run of at least
// three samples the second finite differences of the loss must vanish up to
// binary32 addition rounding, measured relative to the local loss scale.
struct AffinityOptions {
  int segments = 32;
  int samples_per_segment = 64;
  double tolerance = 0x1.0p-16;
  // Per-step motion along the line. An input-space step moves every
  // downstream indicator, so it must be finer than a single-matrix
  // weight-space step for breakpoint-free runs to exist.
  double step_scale_input = 0x1.0p-14;
  double step_scale_weight = 0x1.0p-11;
  uint64_t seed = 1;
  int64_t batch = 1;
};

struct AffinityResult {
  int segments = 0;
  int subsegments = 0;        // breakpoint-free runs with >= 3 samples
  int violations = 0;         // runs whose second differences exceed tolerance
  double worst_ratio = 0.0;   // max |second diff| / local scale over all runs
  bool pass() const { return subsegments > 0 && violations == 0; }
};

AffinityResult probe_affinity(pal::nn::TransformerModel& model, bool weight_space,
                              const AffinityOptions& opt);

}  // namespace palh
