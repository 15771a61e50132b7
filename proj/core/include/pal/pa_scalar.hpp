#pragma once

#include <cmath>
#include <cstdint>

#include "pal/float_codec.hpp"

namespace pal {

// Piecewise affine scalar arithmetic on binary32.
//
// pam approximates a*b by adding the sign, exponent and mantissa fields:
//   sign     S = S_A xor S_B
//   carry    c = 1{M_A + M_B >= 1}
//   exponent E = E_A + E_B + c          (clamped to the format range)
//   mantissa M = M_A + M_B - c          (exact in 23-bit integer arithmetic)
// The same value is obtained by adding the two bit patterns as int32 and
// subtracting the bias word 0x3F800000; pam_int_add is that form. The two
// routes are kept separate on purpose and tested for bit equality.
//
// Conventions shared by all operations here:
//   * denormal operands are treated as zero (flush-to-zero),
//   * exponent overflow clamps to the largest finite magnitude of the
//     format (finite inputs never produce Inf),
//   * exponent underflow flushes to signed zero,
//   * NaN propagates; Inf*0 and 0/0 produce NaN.
//
// None of these functions executes a native float multiply, divide or
// square root.

// binary32-nearest constants; pinned as bit patterns so test vectors are stable.
inline constexpr float kLog2E = std::bit_cast<float>(0x3FB8'AA3Bu);  // log2(e)
inline constexpr float kLn2 = std::bit_cast<float>(0x3F31'7218u);    // ln(2)

// Optional out-parameters describing what happened inside one operation.
struct PaFlags {
  bool clamped = false;  // exponent overflow, result saturated
  bool flushed = false;  // exponent underflow, result flushed to zero
  bool special = false;  // a NaN/Inf/zero/denormal case was taken
};

namespace detail {

// Handles NaN/Inf/zero/denormal operands for pam; returns true when `out`
// was produced. `mag_*` are the magnitude bits of the operands.
inline bool pam_special(uint32_t mag_a, uint32_t mag_b, uint32_t sign_bit,
                        float& out) noexcept {
  if (mag_a > kPosInfBits || mag_b > kPosInfBits) {  // NaN operand
    out = bits_to_float(kQuietNaNBits);
    return true;
  }
  bool inf_a = mag_a == kPosInfBits, inf_b = mag_b == kPosInfBits;
  bool zero_a = mag_a < 0x0080'0000u, zero_b = mag_b < 0x0080'0000u;  // incl. denormals
  if (inf_a || inf_b) {
    out = (zero_a || zero_b) ? bits_to_float(kQuietNaNBits)
                             : bits_to_float(sign_bit | kPosInfBits);
    return true;
  }
  if (zero_a || zero_b) {
    out = bits_to_float(sign_bit);
    return true;
  }
  return false;
}

}  // namespace detail

// Reference form of piecewise affine multiplication: explicit field
// arithmetic on the decomposed operands.
float pam(float a, float b, const PaFormat& fmt, PaFlags* flags = nullptr) noexcept;
inline float pam(float a, float b) noexcept { return pam(a, b, PaFormat{}); }

// Integer-addition form, general format.
float pam_int_add(float a, float b, const PaFormat& fmt, PaFlags* flags = nullptr) noexcept;

// Integer-addition form, default binary32 format. This is the hot path used
// by the tensor kernels; bit equality with pam() is asserted exhaustively.
inline float pam_int_add(float a, float b) noexcept {
  uint32_t ua = float_bits(a), ub = float_bits(b);
  uint32_t sign_bit = (ua ^ ub) & kSignMask;
  uint32_t mag_a = ua & ~kSignMask, mag_b = ub & ~kSignMask;
  if (mag_a >= kPosInfBits || mag_b >= kPosInfBits || mag_a < 0x0080'0000u ||
      mag_b < 0x0080'0000u) {
    float out = 0.0f;
    detail::pam_special(mag_a, mag_b, sign_bit, out);
    return out;
  }
  int64_t r = int64_t(mag_a) + int64_t(mag_b) - int64_t(kOneBits);
  if (r < 0x0080'0000) return bits_to_float(sign_bit);            // underflow
  if (r > 0x7F7F'FFFF) return bits_to_float(sign_bit | 0x7F7F'FFFFu);  // overflow
  return bits_to_float(sign_bit | uint32_t(r));
}

// Piecewise affine division, the inverse of pam:
//   borrow   d = 1{M_A - M_B < 0}        (strict, so pad(x, x) == 1)
//   exponent E = E_A - E_B - d
//   mantissa M = M_A - M_B + d
// x/0 with x != 0 saturates to the max finite magnitude with XOR sign;
// 0/0 is NaN. Inf operands: Inf/finite saturates like x/0, finite/Inf is
// signed zero, Inf/Inf is NaN.
float pad(float a, float b, const PaFormat& fmt, PaFlags* flags = nullptr) noexcept;
inline float pad(float a, float b) noexcept { return pad(a, b, PaFormat{}); }

// paexp2(a) = 2^floor(a) * (1 + a - floor(a)), the piecewise affine 2^a.
float paexp2(float a, const PaFormat& fmt, PaFlags* flags = nullptr) noexcept;
inline float paexp2(float a) noexcept { return paexp2(a, PaFormat{}); }

// palog2(a) = E_A + M_A for positive normal a, the piecewise affine log2.
// Rounded to nearest even when E+M needs more than 24 significant bits.
// Domain violations (a <= 0, NaN, Inf, denormal) return NaN.
float palog2(float a) noexcept;

// Derived functions, exact compositions of the primitives above:
//   paexp(a)  = paexp2(pam(log2(e), a))
//   palog(a)  = pad(palog2(a), log2(e))
//   pasqrt(a) = paexp2(pad(palog2(a), 2))
float paexp(float a) noexcept;
float palog(float a) noexcept;
float pasqrt(float a) noexcept;

// pam followed by a compensating pam with a caller-chosen alpha.
inline float pam_compensated(float a, float b, float alpha) noexcept {
  return pam(pam(a, b), alpha);
}

// Exact scaling by 2^k with the same clamp/flush policy as pam. Bit-equal to
// pam(x, 2^k) whenever 2^k is a normal binary32 (asserted in tests); also
// covers k outside [-126, 127], which the backward rules can produce.
float scale_pow2(float x, int k, const PaFormat& fmt = {}) noexcept;

// Discrete segment probes used by the derivative rules and the breakpoint
// detectors. All expect their operands to be normal.
inline int unbiased_exp(float x) noexcept {
  return int((float_bits(x) >> kMantBits) & 0xFFu) - kExpBias;
}
inline bool pam_carry(float a, float b) noexcept {
  return ((float_bits(a) & kMantMask) + (float_bits(b) & kMantMask)) >> kMantBits;
}
inline bool pad_borrow(float a, float b) noexcept {
  return (float_bits(a) & kMantMask) < (float_bits(b) & kMantMask);
}
inline bool is_normal_bits(uint32_t u) noexcept {
  uint32_t mag = u & ~kSignMask;
  return mag >= 0x0080'0000u && mag < kPosInfBits;
}
inline bool is_normal(float x) noexcept { return is_normal_bits(float_bits(x)); }
// True when x is (plus or minus) a power of two, i.e. its mantissa field is zero.
inline bool zero_mantissa(float x) noexcept {
  return is_normal(x) && (float_bits(x) & kMantMask) == 0;
}
// 2^k as a float for k in [-126, 127].
inline float pow2(int k) noexcept {
  return bits_to_float(uint32_t(k + kExpBias) << kMantBits);
}

// Instrumentation configuration of the scalar layer. When count_native_ops
// is set, the audit counters (pal/ops_audit.hpp) are armed: any native
// multiply/divide/sqrt executed anywhere increments them, so a zero steady
// count after running PA code certifies the multiplication-free claim.
struct PaScalarConfig {
  PaFormat fmt{};
  bool count_native_ops = true;
};

// Arms/disarms the audit counters per the config.
void apply_scalar_config(const PaScalarConfig& cfg) noexcept;

}  // namespace pal
