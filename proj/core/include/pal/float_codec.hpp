#pragma once

#include <bit>
#include <cstdint>

namespace pal {

// Raw binary32 bit access. All arithmetic in this library is defined on the
// IEEE-754 binary32 encoding: [sign | 8-bit biased exponent | 23-bit mantissa].
inline uint32_t float_bits(float x) noexcept { return std::bit_cast<uint32_t>(x); }
inline float bits_to_float(uint32_t u) noexcept { return std::bit_cast<float>(u); }

inline constexpr uint32_t kSignMask = 0x8000'0000u;
inline constexpr uint32_t kExpMask  = 0x7F80'0000u;
inline constexpr uint32_t kMantMask = 0x007F'FFFFu;
inline constexpr uint32_t kPosInfBits = 0x7F80'0000u;
inline constexpr uint32_t kQuietNaNBits = 0x7FC0'0000u;
inline constexpr uint32_t kOneBits = 0x3F80'0000u;  // 1.0f; also the bias word of the int-add trick
inline constexpr int kMantBits = 23;
inline constexpr int kExpBias = 127;

enum class FloatClass : uint8_t { Normal, Zero, Denormal, Inf, NaN };

// Decomposed view of one binary32 word. For Normal values
//   x == (-1)^sign * 2^exponent * (1 + mant / 2^23).
// `mant` is the raw 23-bit mantissa field, i.e. the exact numerator of the
// mantissa fraction M with denominator 2^23.
struct FloatParts {
  uint32_t sign = 0;     // 0 or 1
  int32_t exponent = 0;  // unbiased; [-126, 127] for normals
  uint32_t mant = 0;     // 23-bit mantissa field
  FloatClass cls = FloatClass::Zero;

  // Exact mantissa fraction M in [0, 1).
  float mantissa_frac() const noexcept {
    // (1 + M) - 1 is exact in binary32 for M in [0, 1).
    return bits_to_float(kOneBits | mant) - 1.0f;
  }
};

FloatParts decompose(float x) noexcept;
FloatParts decompose_bits(uint32_t bits) noexcept;

// Inverse of decompose. Throws std::invalid_argument when the parts are not
// encodable (mantissa field >= 2^23, or a Normal exponent outside [-126,127]).
float compose(const FloatParts& p);

// Numeric-format descriptor for narrow-mantissa simulation: how many of the
// 23 mantissa bits are retained and what exponent range is representable.
struct PaFormat {
  enum class DenormalPolicy : uint8_t { FlushToZero };

  int mantissa_bits = 23;  // fractional bits kept, in [0, 23]
  int emin = -126;         // unbiased exponent clamp bounds
  int emax = 127;
  DenormalPolicy denormals = DenormalPolicy::FlushToZero;

  bool valid() const noexcept {
    return mantissa_bits >= 0 && mantissa_bits <= 23 && emin < emax &&
           emin >= -126 && emax <= 127;
  }

  // Largest finite magnitude of this format (used as the overflow clamp).
  uint32_t max_magnitude_bits() const noexcept {
    uint32_t mant = (mantissa_bits == 0)
                        ? 0u
                        : ((kMantMask >> (kMantBits - mantissa_bits))
                           << (kMantBits - mantissa_bits));
    return (uint32_t(emax + kExpBias) << kMantBits) | mant;
  }
  float max_magnitude() const noexcept { return bits_to_float(max_magnitude_bits()); }

  bool operator==(const PaFormat&) const = default;
};

// Rounds the mantissa of x to fmt.mantissa_bits fractional bits
// (round-to-nearest-even, carrying into the exponent on wraparound), then
// clamps the exponent to [emin, emax]: overflow saturates to the largest
// finite magnitude of fmt, underflow flushes to signed zero. NaN and Inf
// pass through; denormals flush to zero.
float quantize_mantissa(float x, const PaFormat& fmt) noexcept;

}  // namespace pal
