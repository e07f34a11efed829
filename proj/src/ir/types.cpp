// SPDX-License-Identifier: Apache-2.0
#include "tilec/ir/types.hpp"

#include <numeric>
#include <sstream>

namespace tilec {

std::string_view to_string(ElemType elem) {
  return elem == ElemType::F32 ? "f32" : "bf16";
}

std::optional<ElemType> parse_elem_type(std::string_view text) {
  if (text == "f32") return ElemType::F32;
  if (text == "bf16") return ElemType::BF16;
  return std::nullopt;
}

size_t elem_size(ElemType elem) { return elem == ElemType::F32 ? 4 : 2; }

int64_t product(std::span<const int64_t> dims) {
  return std::accumulate(dims.begin(), dims.end(), int64_t{1}, std::multiplies<>());
}

std::vector<int64_t> row_major_strides(std::span<const int64_t> shape) {
  std::vector<int64_t> strides(shape.size(), 1);
  for (int64_t d = static_cast<int64_t>(shape.size()) - 2; d >= 0; --d) {
    strides[d] = strides[d + 1] * shape[d + 1];
  }
  return strides;
}

Type Type::tensor(std::vector<int64_t> shape, ElemType elem) {
  return Type{TypeKind::Tensor, std::move(shape), elem, {}};
}

Type Type::memref(std::vector<int64_t> shape, ElemType elem, std::vector<int64_t> strides) {
  if (strides.empty()) strides = row_major_strides(shape);
  return Type{TypeKind::Memref, std::move(shape), elem, std::move(strides)};
}

int64_t Type::num_elements() const { return product(shape); }

bool Type::contiguous() const {
  return !is_memref() || strides == row_major_strides(shape);
}

std::string shape_string(std::span<const int64_t> shape) {
  std::ostringstream os;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  return os.str();
}

std::string to_string(const Type& type) {
  switch (type.kind) {
    case TypeKind::Index:
      return "index";
    case TypeKind::Handle:
      return "handle";
    case TypeKind::Tensor:
    case TypeKind::Memref: {
      std::ostringstream os;
      os << (type.is_tensor() ? "tensor<" : "memref<") << shape_string(type.shape) << 'x'
         << to_string(type.elem);
      if (type.is_memref() && !type.contiguous()) {
        os << ", [";
        for (size_t i = 0; i < type.strides.size(); ++i) {
          if (i) os << ", ";
          os << type.strides[i];
        }
        os << ']';
      }
      os << '>';
      return os.str();
    }
  }
  return "?";
}

}  // namespace tilec
