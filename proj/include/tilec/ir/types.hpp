// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tilec {

enum class ElemType : uint8_t { F32, BF16 };

std::string_view to_string(ElemType elem);
std::optional<ElemType> parse_elem_type(std::string_view text);
size_t elem_size(ElemType elem);

enum class TypeKind : uint8_t { Tensor, Memref, Index, Handle };

/// Shaped value type. Tensors carry value semantics; memrefs describe a
/// strided window into a buffer. Index and Handle are scalar types used by
/// loop induction variables and dispatched kernels.
struct Type {
  TypeKind kind = TypeKind::Index;
  std::vector<int64_t> shape;
  ElemType elem = ElemType::F32;
  // Memref only. Element strides per dim, always populated.
  std::vector<int64_t> strides;

  static Type tensor(std::vector<int64_t> shape, ElemType elem);
  static Type memref(std::vector<int64_t> shape, ElemType elem,
                     std::vector<int64_t> strides = {});
  static Type index() { return Type{}; }
  static Type handle() { return Type{TypeKind::Handle, {}, ElemType::F32, {}}; }

  bool is_tensor() const { return kind == TypeKind::Tensor; }
  bool is_memref() const { return kind == TypeKind::Memref; }
  bool is_shaped() const { return is_tensor() || is_memref(); }
  int64_t rank() const { return static_cast<int64_t>(shape.size()); }
  int64_t num_elements() const;
  bool contiguous() const;

  /// Same shape and element type, as a tensor.
  Type as_tensor() const { return tensor(shape, elem); }

  bool operator==(const Type&) const = default;
};

std::vector<int64_t> row_major_strides(std::span<const int64_t> shape);
int64_t product(std::span<const int64_t> dims);

std::string to_string(const Type& type);
std::string shape_string(std::span<const int64_t> shape);

}  // namespace tilec
