// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>

#include "tilec/ir/types.hpp"

namespace tilec {

// BF16 is the upper half of an IEEE binary32. Loads widen exactly; stores
// round to nearest, ties to even. NaNs stay quiet NaNs.
inline float bf16_to_f32(uint16_t bits) {
  return std::bit_cast<float>(static_cast<uint32_t>(bits) << 16);
}

inline uint16_t f32_to_bf16(float value) {
  uint32_t bits = std::bit_cast<uint32_t>(value);
  if ((bits & 0x7f800000u) == 0x7f800000u && (bits & 0x007fffffu) != 0) {
    return static_cast<uint16_t>((bits >> 16) | 0x0040u);
  }
  uint32_t lsb = (bits >> 16) & 1u;
  bits += 0x7fffu + lsb;
  return static_cast<uint16_t>(bits >> 16);
}

inline float round_bf16(float value) { return bf16_to_f32(f32_to_bf16(value)); }

/// Rounds an F32 value to what a store of `elem` would keep.
inline float round_to(ElemType elem, float value) {
  return elem == ElemType::BF16 ? round_bf16(value) : value;
}

/// Elementwise max(x, 0) shared by every evaluator so -0.0 and NaN behave
/// identically across the interpreter and the kernels.
inline float relu_scalar(float x) { return x < 0.0f ? 0.0f : x; }

}  // namespace tilec
