#pragma once

#include <bit>
#include <cstdint>

#include "tbnet/tensor.hpp"

namespace tbnet {

/// IEEE 754 binary16 conversion, round-to-nearest-even, overflow to
/// signed infinity, subnormals preserved.
inline std::uint16_t float_to_half_bits(float f) {
  const std::uint32_t x = std::bit_cast<std::uint32_t>(f);
  const std::uint16_t sign = static_cast<std::uint16_t>((x >> 16) & 0x8000u);
  const std::uint32_t fexp = (x >> 23) & 0xFFu;
  std::uint32_t mant = x & 0x7FFFFFu;

  if (fexp == 0xFFu) {  // inf or nan
    if (mant == 0) return sign | 0x7C00u;
    std::uint16_t m = static_cast<std::uint16_t>(mant >> 13);
    return sign | 0x7C00u | 0x200u | m;  // quiet nan, keep top payload bits
  }
  const std::int32_t hexp = static_cast<std::int32_t>(fexp) - 127 + 15;
  if (hexp >= 31) return sign | 0x7C00u;  // overflow
  if (hexp <= 0) {
    // subnormal half (or underflow to zero)
    if (hexp < -10) return sign;
    mant |= 0x800000u;
    const int shift = 14 - hexp;  // in [14, 24]
    std::uint32_t hm = mant >> shift;
    const std::uint32_t rem = mant & ((1u << shift) - 1u);
    const std::uint32_t half = 1u << (shift - 1);
    if (rem > half || (rem == half && (hm & 1u))) ++hm;
    return static_cast<std::uint16_t>(sign | hm);  // carry lands in exponent
  }
  std::uint16_t h = static_cast<std::uint16_t>(
      sign | (static_cast<std::uint32_t>(hexp) << 10) | (mant >> 13));
  const std::uint32_t rem = mant & 0x1FFFu;
  if (rem > 0x1000u || (rem == 0x1000u && (h & 1u))) {
    ++h;  // may carry into exponent and correctly produce infinity
  }
  return h;
}

/// Exact: every binary16 value is representable in binary32.
inline float half_bits_to_float(std::uint16_t h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  const std::uint32_t hexp = (h >> 10) & 0x1Fu;
  std::uint32_t mant = h & 0x3FFu;

  if (hexp == 0x1Fu) {
    return std::bit_cast<float>(sign | 0x7F800000u | (mant << 13));
  }
  if (hexp == 0) {
    if (mant == 0) return std::bit_cast<float>(sign);
    // normalize the subnormal
    int e = -1;
    do {
      mant <<= 1;
      ++e;
    } while ((mant & 0x400u) == 0);
    mant &= 0x3FFu;
    const std::uint32_t fexp = 127 - 15 - e;
    return std::bit_cast<float>(sign | (fexp << 23) | (mant << 13));
  }
  const std::uint32_t fexp = hexp - 15 + 127;
  return std::bit_cast<float>(sign | (fexp << 23) | (mant << 13));
}

inline float round_to_half(float x) {
  return half_bits_to_float(float_to_half_bits(x));
}

template <typename Scalar>
Scalar round_to_half(Scalar x) {
  return static_cast<Scalar>(round_to_half(static_cast<float>(x)));
}

template <typename Scalar>
void round_tensor_to_half(Tensor4<Scalar>& t) {
  for (Eigen::Index i = 0; i < t.numel(); ++i) {
    t.data[i] = round_to_half(t.data[i]);
  }
}

}  // namespace tbnet
