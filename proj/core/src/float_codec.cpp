#include "pal/float_codec.hpp"

#include <stdexcept>

namespace pal {

FloatParts decompose_bits(uint32_t bits) noexcept {
  FloatParts p;
  p.sign = bits >> 31;
  uint32_t exp_field = (bits >> kMantBits) & 0xFFu;
  uint32_t mant = bits & kMantMask;
  if (exp_field == 0xFFu) {
    p.cls = (mant == 0) ? FloatClass::Inf : FloatClass::NaN;
    p.exponent = 128;
    p.mant = mant;
  } else if (exp_field == 0) {
    if (mant == 0) {
      p.cls = FloatClass::Zero;
      p.exponent = -kExpBias;  // minimum encoding
      p.mant = 0;
    } else {
      // Denormal: value is 2^-126 * M, no hidden one.
      p.cls = FloatClass::Denormal;
      p.exponent = 1 - kExpBias;
      p.mant = mant;
    }
  } else {
    p.cls = FloatClass::Normal;
    p.exponent = int32_t(exp_field) - kExpBias;
    p.mant = mant;
  }
  return p;
}

FloatParts decompose(float x) noexcept { return decompose_bits(float_bits(x)); }

float compose(const FloatParts& p) {
  if (p.sign > 1) throw std::invalid_argument("compose: sign must be 0 or 1");
  if (p.mant > kMantMask)
    throw std::invalid_argument("compose: mantissa field exceeds 23 bits");
  uint32_t sign_bit = p.sign << 31;
  switch (p.cls) {
    case FloatClass::NaN:
      return bits_to_float(sign_bit | kExpMask | (p.mant ? p.mant : (1u << 22)));
    case FloatClass::Inf:
      return bits_to_float(sign_bit | kPosInfBits);
    case FloatClass::Zero:
      return bits_to_float(sign_bit);
    case FloatClass::Denormal:
      return bits_to_float(sign_bit | p.mant);
    case FloatClass::Normal:
      if (p.exponent < -126 || p.exponent > 127)
        throw std::invalid_argument("compose: exponent outside encodable range");
      return bits_to_float(sign_bit | (uint32_t(p.exponent + kExpBias) << kMantBits) |
                           p.mant);
  }
  throw std::invalid_argument("compose: bad class");
}

float quantize_mantissa(float x, const PaFormat& fmt) noexcept {
  uint32_t bits = float_bits(x);
  uint32_t sign_bit = bits & kSignMask;
  uint32_t exp_field = (bits >> kMantBits) & 0xFFu;
  if (exp_field == 0xFFu) return x;                       // NaN / Inf pass through
  if (exp_field == 0) return bits_to_float(sign_bit);     // zero and denormals flush

  int e = int(exp_field) - kExpBias;
  uint32_t mant = bits & kMantMask;
  int drop = kMantBits - fmt.mantissa_bits;
  if (drop > 0) {
    // Round the 24-bit significand (hidden one included) to nearest even.
    uint32_t sig = (1u << kMantBits) | mant;
    uint32_t half = 1u << (drop - 1);
    uint32_t rem = sig & ((1u << drop) - 1u);
    uint32_t kept = sig >> drop;
    if (rem > half || (rem == half && (kept & 1u))) ++kept;
    if (kept == (1u << (fmt.mantissa_bits + 1))) {  // mantissa wrapped: 1.111.. -> 10.0
      kept >>= 1;
      ++e;
    }
    mant = (kept << drop) & kMantMask;
  }
  if (e > fmt.emax) return bits_to_float(sign_bit | fmt.max_magnitude_bits());
  if (e < fmt.emin) return bits_to_float(sign_bit);
  return bits_to_float(sign_bit | (uint32_t(e + kExpBias) << kMantBits) | mant);
}

}  // namespace pal
