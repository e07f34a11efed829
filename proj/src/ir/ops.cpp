// SPDX-License-Identifier: Apache-2.0
#include "tilec/ir/ops.hpp"

#include <algorithm>
#include <numeric>

namespace tilec {

PackSpec PackSpec::from_op(const Op& op) {
  return PackSpec{op.ints_attr("tiles"), op.ints_attr("dims"), op.ints_attr("perm")};
}

void PackSpec::to_attrs(AttrDict& attrs) const {
  attrs["tiles"] = inner_tiles;
  attrs["dims"] = inner_dims_pos;
  attrs["perm"] = outer_perm;
}

PackSpec PackSpec::blocked(IntList tiles, IntList dims, int64_t rank) {
  IntList perm(static_cast<size_t>(rank));
  std::iota(perm.begin(), perm.end(), 0);
  return PackSpec{std::move(tiles), std::move(dims), std::move(perm)};
}

namespace {

std::optional<std::string> check_structure(const PackSpec& spec, int64_t rank) {
  if (spec.inner_tiles.size() != spec.inner_dims_pos.size()) {
    return "pack tiles and dims differ in length (" + std::to_string(spec.inner_tiles.size()) +
           " vs " + std::to_string(spec.inner_dims_pos.size()) + ")";
  }
  std::vector<bool> seen(static_cast<size_t>(rank), false);
  for (int64_t d : spec.inner_dims_pos) {
    if (d < 0 || d >= rank) return "pack dim " + std::to_string(d) + " out of range";
    if (seen[static_cast<size_t>(d)]) return "pack dim " + std::to_string(d) + " tiled twice";
    seen[static_cast<size_t>(d)] = true;
  }
  for (int64_t t : spec.inner_tiles) {
    if (t < 1) return "pack tile size " + std::to_string(t) + " must be positive";
  }
  if (static_cast<int64_t>(spec.outer_perm.size()) != rank) {
    return "pack perm has " + std::to_string(spec.outer_perm.size()) + " entries for rank " +
           std::to_string(rank);
  }
  std::vector<bool> used(static_cast<size_t>(rank), false);
  for (int64_t p : spec.outer_perm) {
    if (p < 0 || p >= rank || used[static_cast<size_t>(p)]) return "pack perm is not a permutation";
    used[static_cast<size_t>(p)] = true;
  }
  return std::nullopt;
}

int64_t tile_of(const PackSpec& spec, int64_t dim) {
  for (size_t j = 0; j < spec.inner_dims_pos.size(); ++j) {
    if (spec.inner_dims_pos[j] == dim) return spec.inner_tiles[j];
  }
  return 1;
}

}  // namespace

std::optional<std::string> PackSpec::check(std::span<const int64_t> src_shape) const {
  if (auto err = check_structure(*this, static_cast<int64_t>(src_shape.size()))) return err;
  for (size_t j = 0; j < inner_tiles.size(); ++j) {
    int64_t dim = src_shape[static_cast<size_t>(inner_dims_pos[j])];
    if (dim % inner_tiles[j] != 0) {
      return "dim " + std::to_string(dim) + " not divisible by " + std::to_string(inner_tiles[j]);
    }
  }
  return std::nullopt;
}

std::optional<std::string> PackSpec::check_packed(std::span<const int64_t> packed_shape) const {
  int64_t rank = static_cast<int64_t>(packed_shape.size()) -
                 static_cast<int64_t>(inner_tiles.size());
  if (rank < 1) return "packed rank too small for " + std::to_string(inner_tiles.size()) + " tiles";
  if (auto err = check_structure(*this, rank)) return err;
  for (size_t j = 0; j < inner_tiles.size(); ++j) {
    if (packed_shape[static_cast<size_t>(rank) + j] != inner_tiles[j]) {
      return "packed inner dim " + std::to_string(packed_shape[static_cast<size_t>(rank) + j]) +
             " does not match tile " + std::to_string(inner_tiles[j]);
    }
  }
  return std::nullopt;
}

std::vector<int64_t> PackSpec::packed_shape(std::span<const int64_t> src_shape) const {
  std::vector<int64_t> out;
  out.reserve(src_shape.size() + inner_tiles.size());
  for (int64_t p : outer_perm) {
    out.push_back(src_shape[static_cast<size_t>(p)] / tile_of(*this, p));
  }
  out.insert(out.end(), inner_tiles.begin(), inner_tiles.end());
  return out;
}

std::vector<int64_t> PackSpec::unpacked_shape(std::span<const int64_t> packed_shape) const {
  size_t rank = packed_shape.size() - inner_tiles.size();
  std::vector<int64_t> out(rank);
  for (size_t i = 0; i < rank; ++i) {
    int64_t d = outer_perm[i];
    out[static_cast<size_t>(d)] = packed_shape[i] * tile_of(*this, d);
  }
  return out;
}

void PackSpec::pack_index(std::span<const int64_t> src_idx, std::span<int64_t> packed_idx) const {
  size_t rank = src_idx.size();
  for (size_t i = 0; i < rank; ++i) {
    int64_t d = outer_perm[i];
    packed_idx[i] = src_idx[static_cast<size_t>(d)] / tile_of(*this, d);
  }
  for (size_t j = 0; j < inner_tiles.size(); ++j) {
    packed_idx[rank + j] = src_idx[static_cast<size_t>(inner_dims_pos[j])] % inner_tiles[j];
  }
}

void PackSpec::unpack_index(std::span<const int64_t> packed_idx, std::span<int64_t> src_idx) const {
  size_t rank = src_idx.size();
  for (size_t i = 0; i < rank; ++i) {
    src_idx[static_cast<size_t>(outer_perm[i])] = packed_idx[i];
  }
  for (size_t j = 0; j < inner_tiles.size(); ++j) {
    auto d = static_cast<size_t>(inner_dims_pos[j]);
    src_idx[d] = src_idx[d] * inner_tiles[j] + packed_idx[rank + j];
  }
}

std::vector<int64_t> PackSpec::source_strides(std::span<const int64_t> src_shape) const {
  auto rm = row_major_strides(src_shape);
  std::vector<int64_t> out;
  for (int64_t p : outer_perm) {
    out.push_back(rm[static_cast<size_t>(p)] * tile_of(*this, p));
  }
  for (int64_t d : inner_dims_pos) out.push_back(rm[static_cast<size_t>(d)]);
  return out;
}

void strided_copy(float* dst, std::span<const int64_t> dst_strides, const float* src,
                  std::span<const int64_t> src_strides, std::span<const int64_t> shape) {
  size_t rank = shape.size();
  if (rank == 0) {
    *dst = *src;
    return;
  }
  for (int64_t e : shape) {
    if (e == 0) return;
  }
  size_t last = rank - 1;
  int64_t n = shape[last], ds = dst_strides[last], ss = src_strides[last];
  std::vector<int64_t> idx(rank, 0);
  int64_t doff = 0, soff = 0;
  while (true) {
    if (ds == 1 && ss == 1) {
      std::copy(src + soff, src + soff + n, dst + doff);
    } else {
      for (int64_t i = 0; i < n; ++i) dst[doff + i * ds] = src[soff + i * ss];
    }
    size_t d = last;
    while (true) {
      if (d == 0) return;
      --d;
      doff += dst_strides[d];
      soff += src_strides[d];
      if (++idx[d] < shape[d]) break;
      doff -= dst_strides[d] * shape[d];
      soff -= src_strides[d] * shape[d];
      idx[d] = 0;
    }
  }
}

std::vector<float> pack_values(const PackSpec& spec, std::span<const int64_t> src_shape,
                               std::span<const float> src) {
  auto packed = spec.packed_shape(src_shape);
  std::vector<float> out(static_cast<size_t>(product(packed)));
  strided_copy(out.data(), row_major_strides(packed), src.data(), spec.source_strides(src_shape),
               packed);
  return out;
}

std::vector<float> unpack_values(const PackSpec& spec, std::span<const int64_t> packed_shape,
                                 std::span<const float> packed) {
  auto plain = spec.unpacked_shape(packed_shape);
  std::vector<float> out(static_cast<size_t>(product(plain)));
  strided_copy(out.data(), spec.source_strides(plain), packed.data(),
               row_major_strides(packed_shape), packed_shape);
  return out;
}

std::string_view to_string(GenericBody body) {
  switch (body) {
    case GenericBody::MulAcc:
      return "mul_acc";
    case GenericBody::Add:
      return "add";
    case GenericBody::MaxZero:
      return "max_zero";
    case GenericBody::Copy:
      return "copy";
  }
  return "?";
}

std::optional<GenericBody> parse_generic_body(std::string_view text) {
  for (GenericBody b : {GenericBody::MulAcc, GenericBody::Add, GenericBody::MaxZero,
                        GenericBody::Copy}) {
    if (to_string(b) == text) return b;
  }
  return std::nullopt;
}

GenericInfo GenericInfo::from_op(const Op& op) {
  GenericInfo info;
  info.loops = op.int_attr("loops");
  for (const std::string& it : op.idents_attr("iterators")) {
    if (it == "parallel") {
      info.iterators.push_back(IteratorKind::Parallel);
    } else if (it == "reduction") {
      info.iterators.push_back(IteratorKind::Reduction);
    } else {
      throw CompileError("unknown iterator kind '" + it + "'");
    }
  }
  info.maps = op.int_lists_attr("maps");
  auto body = parse_generic_body(op.ident_attr("body"));
  if (!body) throw CompileError("unknown generic body '" + op.ident_attr("body") + "'");
  info.body = *body;
  return info;
}

void GenericInfo::to_attrs(AttrDict& attrs) const {
  attrs["loops"] = loops;
  IdentList its;
  for (IteratorKind k : iterators) {
    its.emplace_back(k == IteratorKind::Parallel ? "parallel" : "reduction");
  }
  attrs["iterators"] = std::move(its);
  attrs["maps"] = maps;
  attrs["body"] = std::string(to_string(body));
}

namespace {

IntList iota_list(int64_t n) {
  IntList v(static_cast<size_t>(n));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

Op make_generic(const GenericInfo& info, std::vector<ValueId> operands, ValueId result) {
  Op op;
  op.kind = OpKind::Generic;
  op.result = result;
  op.operands = std::move(operands);
  info.to_attrs(op.attrs);
  return op;
}

}  // namespace

Function expand_named_ops(const Function& fn) {
  Function out = fn;
  out.body.ops.clear();
  OpBuilder b(out, out.body);
  for (const Op& op : fn.body.ops) {
    const Type* result_type = op.result ? &fn.type(*op.result) : nullptr;
    if (!result_type || !result_type->is_tensor()) {
      b.append(op);
      continue;
    }
    int64_t rank = result_type->rank();
    GenericInfo info;
    switch (op.kind) {
      case OpKind::Matmul:
        info = {3,
                {IteratorKind::Parallel, IteratorKind::Parallel, IteratorKind::Reduction},
                {{0, 2}, {2, 1}, {0, 1}},
                GenericBody::MulAcc};
        b.append(make_generic(info, op.operands, *op.result));
        break;
      case OpKind::PackedMatmul: {
        using enum IteratorKind;
        // Loops: MB, NB, mb, nb, KB, kb (, vnni lane).
        if (!op.bool_attr("vnni")) {
          info = {6,
                  {Parallel, Parallel, Parallel, Parallel, Reduction, Reduction},
                  {{0, 4, 2, 5}, {1, 4, 5, 3}, {0, 1, 2, 3}},
                  GenericBody::MulAcc};
          b.append(make_generic(info, op.operands, *op.result));
        } else {
          // Split kb of A into (kb/2, 2) so both operands use projected maps.
          const Type& a = fn.type(op.operands[0]);
          AttrDict attrs;
          PackSpec{{2}, {3}, {0, 1, 2, 3}}.to_attrs(attrs);
          Type a5 = Type::tensor(PackSpec{{2}, {3}, {0, 1, 2, 3}}.packed_shape(a.shape), a.elem);
          ValueId split = b.create(OpKind::Pack, {op.operands[0]}, attrs, a5);
          info = {7,
                  {Parallel, Parallel, Parallel, Parallel, Reduction, Reduction, Reduction},
                  {{0, 4, 2, 5, 6}, {1, 4, 5, 3, 6}, {0, 1, 2, 3}},
                  GenericBody::MulAcc};
          b.append(make_generic(info, {split, op.operands[1], op.operands[2]}, *op.result));
        }
        break;
      }
      case OpKind::BiasAdd: {
        info.loops = rank;
        info.iterators.assign(static_cast<size_t>(rank), IteratorKind::Parallel);
        IntList bias_map = fn.type(op.operands[1]).rank() == 1 ? IntList{rank - 1}
                                                                : IntList{1, rank - 1};
        info.maps = {iota_list(rank), bias_map, iota_list(rank)};
        info.body = GenericBody::Add;
        b.append(make_generic(info, {op.operands[0], op.operands[1], op.operands[0]}, *op.result));
        break;
      }
      case OpKind::Relu:
        info.loops = rank;
        info.iterators.assign(static_cast<size_t>(rank), IteratorKind::Parallel);
        info.maps = {iota_list(rank)};
        info.body = GenericBody::MaxZero;
        b.append(make_generic(info, {op.operands[0]}, *op.result));
        break;
      default:
        b.append(op);
        break;
    }
  }
  renumber(out);
  return out;
}

}  // namespace tilec
