// SPDX-License-Identifier: Apache-2.0
//
// Typed views over op attributes: pack layouts and generic-op structure.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tilec/ir/ir.hpp"

namespace tilec {

/// Block layout of a pack/unpack pair. Source dims listed in `inner_dims_pos`
/// are split by `inner_tiles`; the outer quotients are reordered by
/// `outer_perm` and the tile extents are appended in order:
///
///   packed = [Q[perm[0]], ..., Q[perm[r-1]], tiles[0], ..., tiles[t-1]]
///
/// where Q[d] = shape[d] / tile(d) for tiled dims and shape[d] otherwise.
struct PackSpec {
  IntList inner_tiles;
  IntList inner_dims_pos;
  IntList outer_perm;

  static PackSpec from_op(const Op& op);
  void to_attrs(AttrDict& attrs) const;

  /// Identity outer permutation over `rank` dims.
  static PackSpec blocked(IntList tiles, IntList dims, int64_t rank);

  /// Reason the spec cannot pack `src_shape`, if any.
  std::optional<std::string> check(std::span<const int64_t> src_shape) const;
  /// Reason the spec cannot unpack `packed_shape`, if any.
  std::optional<std::string> check_packed(std::span<const int64_t> packed_shape) const;

  std::vector<int64_t> packed_shape(std::span<const int64_t> src_shape) const;
  std::vector<int64_t> unpacked_shape(std::span<const int64_t> packed_shape) const;

  void pack_index(std::span<const int64_t> src_idx, std::span<int64_t> packed_idx) const;
  void unpack_index(std::span<const int64_t> packed_idx, std::span<int64_t> src_idx) const;

  /// Element stride in the row-major source of each packed dim. Packing is a
  /// strided gather with these strides over the packed shape.
  std::vector<int64_t> source_strides(std::span<const int64_t> src_shape) const;

  bool operator==(const PackSpec&) const = default;
};

/// dst[i] = src[i] over `shape`, both addressed through element strides.
void strided_copy(float* dst, std::span<const int64_t> dst_strides, const float* src,
                  std::span<const int64_t> src_strides, std::span<const int64_t> shape);

std::vector<float> pack_values(const PackSpec& spec, std::span<const int64_t> src_shape,
                               std::span<const float> src);
std::vector<float> unpack_values(const PackSpec& spec, std::span<const int64_t> packed_shape,
                                 std::span<const float> packed);

enum class IteratorKind { Parallel, Reduction };
enum class GenericBody { MulAcc, Add, MaxZero, Copy };

std::string_view to_string(GenericBody body);
std::optional<GenericBody> parse_generic_body(std::string_view text);

/// Structure of a `generic` op: a perfectly nested loop of `loops` dims whose
/// operands are addressed through projected-permutation indexing maps (one
/// map per operand, ins then the single out).
struct GenericInfo {
  int64_t loops = 0;
  std::vector<IteratorKind> iterators;
  IntListList maps;
  GenericBody body = GenericBody::Copy;

  static GenericInfo from_op(const Op& op);
  void to_attrs(AttrDict& attrs) const;
};

/// Rewrites every compute named op (matmul, packed_matmul, bias_add, relu) of
/// a tensor-level function into its equivalent `generic` form.
Function expand_named_ops(const Function& fn);

}  // namespace tilec
