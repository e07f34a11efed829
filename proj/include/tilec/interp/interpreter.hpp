// SPDX-License-Identifier: Apache-2.0
//
// Reference evaluator for tensor-level functions, including the tiled
// loop-nest form. Slow and simple on purpose: it is the oracle every other
// execution path is checked against.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tilec/ir/ir.hpp"

namespace tilec {

/// A tensor value. Payload is row-major and widened to F32; for BF16 tensors
/// every element is already rounded to a BF16 value.
struct TensorData {
  Type type;
  std::vector<float> values;

  static TensorData zeros(Type type);
  static TensorData from(Type type, std::vector<float> values);
  bool operator==(const TensorData&) const = default;
};

std::vector<TensorData> evaluate(const Function& fn, std::span<const TensorData> inputs);

/// Uniform samples in [lo, hi), rounded to the element type.
TensorData random_tensor(const Type& type, uint64_t seed, float lo = -1.0f, float hi = 1.0f);

/// One random tensor per function argument, seeded by `seed` and position.
std::vector<TensorData> random_inputs(const Function& fn, uint64_t seed);

struct ErrorLocation {
  double max_rel_error = 0.0;
  size_t worst_index = 0;
  float got = 0.0f;
  float expected = 0.0f;
};

/// Normwise relative error: max |got - ref| / max |ref|.
ErrorLocation max_relative_error(std::span<const float> got, std::span<const float> ref);

/// Copy of `fn` with every BF16 type and payload widened to F32.
Function promote_to_f32(const Function& fn);

struct EquivalenceOptions {
  uint64_t seed = 0x5eed;
  // Evaluate the reference with all BF16 data widened to F32.
  bool f32_oracle = false;
};

struct EquivalenceReport {
  uint64_t seed = 0;
  double max_rel_error = 0.0;
  size_t worst_output = 0;
  size_t worst_index = 0;
  bool bitwise_equal = true;
};

/// Evaluates `reference` and `transformed` on shared seeded inputs and
/// compares every output.
EquivalenceReport evaluate_packed_equivalence(const Function& reference,
                                              const Function& transformed,
                                              const EquivalenceOptions& options = {});

}  // namespace tilec
