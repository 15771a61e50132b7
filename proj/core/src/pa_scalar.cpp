#include "pal/pa_scalar.hpp"

#include "pal/ops_audit.hpp"

namespace pal {

namespace {

inline float quiet_nan() noexcept { return bits_to_float(kQuietNaNBits); }

inline float clamp_max(uint32_t sign_bit, const PaFormat& fmt, PaFlags* flags) noexcept {
  if (flags) flags->clamped = true;
  return bits_to_float(sign_bit | fmt.max_magnitude_bits());
}

inline float flush_zero(uint32_t sign_bit, PaFlags* flags) noexcept {
  if (flags) flags->flushed = true;
  return bits_to_float(sign_bit);
}

}  // namespace

float pam(float a, float b, const PaFormat& fmt, PaFlags* flags) noexcept {
  uint32_t ua = float_bits(a), ub = float_bits(b);
  uint32_t sign_bit = (ua ^ ub) & kSignMask;
  uint32_t mag_a = ua & ~kSignMask, mag_b = ub & ~kSignMask;
  float out = 0.0f;
  if (detail::pam_special(mag_a, mag_b, sign_bit, out)) {
    if (flags) flags->special = true;
    return out;
  }
  FloatParts fa = decompose_bits(ua);
  FloatParts fb = decompose_bits(ub);
  uint32_t mant_sum = fa.mant + fb.mant;
  uint32_t carry = mant_sum >> kMantBits;  // 1{M_A + M_B >= 1}
  uint32_t mant = mant_sum & kMantMask;
  int e = fa.exponent + fb.exponent + int(carry);
  if (e > fmt.emax) return clamp_max(sign_bit, fmt, flags);
  if (e < fmt.emin) return flush_zero(sign_bit, flags);
  return bits_to_float(sign_bit | (uint32_t(e + kExpBias) << kMantBits) | mant);
}

float pam_int_add(float a, float b, const PaFormat& fmt, PaFlags* flags) noexcept {
  uint32_t ua = float_bits(a), ub = float_bits(b);
  uint32_t sign_bit = (ua ^ ub) & kSignMask;
  uint32_t mag_a = ua & ~kSignMask, mag_b = ub & ~kSignMask;
  float out = 0.0f;
  if (detail::pam_special(mag_a, mag_b, sign_bit, out)) {
    if (flags) flags->special = true;
    return out;
  }
  // Magnitudes add as integers; the exponent of the sum is biased twice, so
  // subtract the bias word once. Mantissa overflow carries into the exponent
  // by construction.
  int64_t r = int64_t(mag_a) + int64_t(mag_b) - int64_t(kOneBits);
  int64_t lo = int64_t(fmt.emin + kExpBias) << kMantBits;
  int64_t hi = (int64_t(fmt.emax + kExpBias) << kMantBits) | kMantMask;
  if (r < lo) return flush_zero(sign_bit, flags);
  if (r > hi) return clamp_max(sign_bit, fmt, flags);
  return bits_to_float(sign_bit | uint32_t(r));
}

float pad(float a, float b, const PaFormat& fmt, PaFlags* flags) noexcept {
  uint32_t ua = float_bits(a), ub = float_bits(b);
  uint32_t sign_bit = (ua ^ ub) & kSignMask;
  uint32_t mag_a = ua & ~kSignMask, mag_b = ub & ~kSignMask;
  if (mag_a > kPosInfBits || mag_b > kPosInfBits) {
    if (flags) flags->special = true;
    return quiet_nan();
  }
  bool inf_a = mag_a == kPosInfBits, inf_b = mag_b == kPosInfBits;
  bool zero_a = mag_a < 0x0080'0000u, zero_b = mag_b < 0x0080'0000u;
  if (inf_a || inf_b || zero_a || zero_b) {
    if (flags) flags->special = true;
    if (inf_a && inf_b) return quiet_nan();
    if (zero_a && zero_b) return quiet_nan();                       // 0/0
    if (inf_b || zero_a) return bits_to_float(sign_bit);            // x/Inf, 0/x
    return clamp_max(sign_bit, fmt, flags);                         // Inf/x, x/0
  }
  FloatParts fa = decompose_bits(ua);
  FloatParts fb = decompose_bits(ub);
  uint32_t borrow = fa.mant < fb.mant ? 1u : 0u;  // strict: pad(x, x) == 1
  uint32_t mant = (fa.mant - fb.mant + (borrow << kMantBits)) & kMantMask;
  int e = fa.exponent - fb.exponent - int(borrow);
  if (e > fmt.emax) return clamp_max(sign_bit, fmt, flags);
  if (e < fmt.emin) return flush_zero(sign_bit, flags);
  return bits_to_float(sign_bit | (uint32_t(e + kExpBias) << kMantBits) | mant);
}

float paexp2(float a, const PaFormat& fmt, PaFlags* flags) noexcept {
  if (std::isnan(a)) {
    if (flags) flags->special = true;
    return quiet_nan();
  }
  if (std::isinf(a)) {
    if (flags) flags->special = true;
    return a > 0 ? clamp_max(0, fmt, flags) : flush_zero(0, flags);
  }
  if (a >= float(fmt.emax) + 1.0f) return clamp_max(0, fmt, flags);
  if (a < float(fmt.emin) - 1.0f) return flush_zero(0, flags);
  int k = int(std::floor(a));
  // The fraction is exact; 1.0f + f rounds it into 23 mantissa bits (to
  // nearest even) and may carry into the exponent, which the integer
  // addition of k then absorbs.
  float f = a - float(k);
  int32_t r = int32_t(float_bits(1.0f + f)) + (int32_t(k) << kMantBits);
  int biased = int(r >> kMantBits);
  if (biased > fmt.emax + kExpBias) return clamp_max(0, fmt, flags);
  if (biased < fmt.emin + kExpBias) return flush_zero(0, flags);
  return bits_to_float(uint32_t(r));
}

float palog2(float a) noexcept {
  uint32_t u = float_bits(a);
  if ((u & kSignMask) || !is_normal_bits(u)) return quiet_nan();
  int e = int(u >> kMantBits) - kExpBias;
  float m = bits_to_float(kOneBits | (u & kMantMask)) - 1.0f;  // exact
  return float(e) + m;  // one round-to-nearest-even when E+M needs > 24 bits
}

float paexp(float a) noexcept { return paexp2(pam(kLog2E, a)); }

float palog(float a) noexcept { return pad(palog2(a), kLog2E); }

float pasqrt(float a) noexcept { return paexp2(pad(palog2(a), 2.0f)); }

float scale_pow2(float x, int k, const PaFormat& fmt) noexcept {
  uint32_t u = float_bits(x);
  uint32_t sign_bit = u & kSignMask;
  uint32_t mag = u & ~kSignMask;
  if (mag > kPosInfBits) return quiet_nan();
  if (mag == kPosInfBits) return x;
  if (mag < 0x0080'0000u) return bits_to_float(sign_bit);
  int e = int(mag >> kMantBits) - kExpBias + k;
  if (e > fmt.emax) return bits_to_float(sign_bit | fmt.max_magnitude_bits());
  if (e < fmt.emin) return bits_to_float(sign_bit);
  return bits_to_float(sign_bit | (uint32_t(e + kExpBias) << kMantBits) |
                       (mag & kMantMask));
}

void apply_scalar_config(const PaScalarConfig& cfg) noexcept {
  audit::set_enabled(cfg.count_native_ops);
}

}  // namespace pal
