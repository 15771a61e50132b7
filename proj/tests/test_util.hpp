#pragma once

#include <random>

#include "pal/float_codec.hpp"

namespace testutil {

inline float rand_any(std::mt19937& g) { return pal::bits_to_float(g()); }

// Finite normal, either sign.
inline float rand_normal(std::mt19937& g) {
  for (;;) {
    uint32_t u = g();
    uint32_t mag = u & 0x7FFFFFFFu;
    if (mag >= 0x00800000u && mag < 0x7F800000u) return pal::bits_to_float(u);
  }
}

inline float rand_positive_normal(std::mt19937& g) {
  for (;;) {
    uint32_t mag = g() & 0x7FFFFFFFu;
    if (mag >= 0x00800000u && mag < 0x7F800000u) return pal::bits_to_float(mag);
  }
}

// Normal with biased exponent field uniform in [lo_field, hi_field].
inline float rand_normal_exp_range(std::mt19937& g, uint32_t lo_field,
                                   uint32_t hi_field, bool signed_ = true) {
  uint32_t field = lo_field + g() % (hi_field - lo_field + 1);
  uint32_t mant = g() & pal::kMantMask;
  uint32_t sign = signed_ ? (g() & 1u) << 31 : 0u;
  return pal::bits_to_float(sign | (field << 23) | mant);
}

// Uniform in [0,1) from the top 24 bits of the draw.
inline double rand_unit(std::mt19937& g) { return double(g() >> 8) * 0x1.0p-24; }

}  // namespace testutil
