// SPDX-License-Identifier: Apache-2.0
#include "tilec/transforms/pack.hpp"

#include <map>

#include "util.hpp"

namespace tilec {

using detail::top_level_defs;

void PackingOptions::validate() const {
  if (tile_m < 1 || tile_n < 1 || tile_k < 1) throw CompileError("tile sizes must be positive");
  if (min_iters < 1) throw CompileError("min_iters must be positive");
  if (vnni_factor != 2) throw CompileError("vnni factor is fixed at 2");
  if (vnni.value_or(false) && tile_k % vnni_factor != 0) {
    throw CompileError("vnni needs tile_k divisible by " + std::to_string(vnni_factor));
  }
}

PackSpec lhs_pack_spec(const PackingOptions& o) { return {{o.tile_m, o.tile_k}, {0, 1}, {0, 1}}; }
PackSpec rhs_pack_spec(const PackingOptions& o) { return {{o.tile_k, o.tile_n}, {0, 1}, {1, 0}}; }
PackSpec vnni_pack_spec(const PackingOptions& o) {
  return {{o.vnni_factor}, {2}, {0, 1, 2, 3}};
}
PackSpec out_pack_spec(const PackingOptions& o) { return {{o.tile_m, o.tile_n}, {0, 1}, {0, 1}}; }
PackSpec bias_pack_spec(int64_t tile_n) { return {{tile_n}, {0}, {0}}; }

bool should_pack(const Function& fn, const Op& matmul, const PackingOptions& o) {
  if (matmul.kind != OpKind::Matmul) return false;
  const Type& a = fn.type(matmul.operands[0]);
  const Type& b = fn.type(matmul.operands[1]);
  if (!a.is_tensor()) return false;
  auto fits = [&](int64_t dim, int64_t tile) {
    return dim >= o.min_iters * tile && dim % tile == 0;
  };
  if (o.use_vnni(a.elem) && o.tile_k % o.vnni_factor != 0) return false;
  return fits(a.shape[0], o.tile_m) && fits(b.shape[1], o.tile_n) && fits(a.shape[1], o.tile_k);
}

namespace {

ValueId emit_pack(OpBuilder& b, ValueId v, const PackSpec& spec) {
  const Type& t = b.function().type(v);
  AttrDict attrs;
  spec.to_attrs(attrs);
  Type packed = Type::tensor(spec.packed_shape(t.shape), t.elem);
  return b.create(OpKind::Pack, {v}, std::move(attrs), packed);
}

void finish(Function& fn) {
  eliminate_dead_ops(fn);
  renumber(fn);
}

bool is_plain_2d_blocking(const PackSpec& spec) {
  return spec.inner_dims_pos == IntList{0, 1} && spec.outer_perm == IntList{0, 1};
}

}  // namespace

Function pack_matmuls(const Function& fn, const PackingOptions& options) {
  options.validate();
  Function out = fn;
  out.body.ops.clear();
  OpBuilder b(out, out.body);
  auto defs = top_level_defs(fn);
  bool changed = false;
  for (const Op& op : fn.body.ops) {
    if (!should_pack(fn, op, options)) {
      b.append(op);
      continue;
    }
    changed = true;
    ElemType elem = fn.type(op.operands[0]).elem;
    bool vnni = options.use_vnni(elem);
    ValueId pa = emit_pack(b, op.operands[0], lhs_pack_spec(options));
    ValueId pb = emit_pack(b, op.operands[1], rhs_pack_spec(options));
    if (vnni) pb = emit_pack(b, pb, vnni_pack_spec(options));
    const Type& c = fn.type(op.operands[2]);
    Type packed_c = Type::tensor(out_pack_spec(options).packed_shape(c.shape), elem);
    ValueId pc;
    if (const Op* init = defs[static_cast<size_t>(op.operands[2])];
        init && init->kind == OpKind::Splat) {
      // A splat has no layout; build it directly in the packed shape.
      pc = b.create(OpKind::Splat, {}, {{"value", init->attrs.at("value")}}, packed_c);
    } else {
      pc = emit_pack(b, op.operands[2], out_pack_spec(options));
    }
    AttrDict mm;
    if (vnni) mm["vnni"] = true;
    ValueId r = b.create(OpKind::PackedMatmul, {pa, pb, pc}, std::move(mm), packed_c);
    Op unpack;
    unpack.kind = OpKind::Unpack;
    unpack.result = op.result;
    unpack.operands = {r};
    out_pack_spec(options).to_attrs(unpack.attrs);
    b.append(std::move(unpack));
  }
  if (!changed) return fn;
  finish(out);
  return out;
}

namespace {

// One round of propagation; returns false when nothing moved.
bool propagate_once(Function& fn) {
  auto defs = top_level_defs(fn);
  auto uses = use_counts(fn);
  Function out = fn;
  out.body.ops.clear();
  OpBuilder b(out, out.body);
  bool changed = false;
  for (const Op& op : fn.body.ops) {
    bool elementwise = op.kind == OpKind::BiasAdd || op.kind == OpKind::Relu;
    const Op* u = elementwise && fn.type(op.operands[0]).rank() == 2
                      ? defs[static_cast<size_t>(op.operands[0])]
                      : nullptr;
    if (!u || u->kind != OpKind::Unpack || uses[static_cast<size_t>(*u->result)] != 1 ||
        !is_plain_2d_blocking(PackSpec::from_op(*u))) {
      b.append(op);
      continue;
    }
    PackSpec spec = PackSpec::from_op(*u);
    ValueId packed = u->operands[0];
    const Type& pt = fn.type(packed);
    ValueId moved;
    if (op.kind == OpKind::BiasAdd) {
      ValueId pbias = emit_pack(b, op.operands[1], bias_pack_spec(spec.inner_tiles[1]));
      moved = b.create(OpKind::BiasAdd, {packed, pbias}, op.attrs, pt);
    } else {
      moved = b.create(OpKind::Relu, {packed}, op.attrs, pt);
    }
    Op unpack = *u;
    unpack.result = op.result;
    unpack.operands = {moved};
    b.append(std::move(unpack));
    changed = true;
  }
  if (changed) {
    finish(out);
    fn = std::move(out);
  }
  return changed;
}

// Rebuilds `fn` without ops mapped to an existing value by `fold`.
template <class Fold>
bool fold_once(Function& fn, Fold&& fold) {
  auto defs = top_level_defs(fn);
  std::map<ValueId, ValueId> subst;
  Function out = fn;
  out.body.ops.clear();
  OpBuilder b(out, out.body);
  for (const Op& src : fn.body.ops) {
    Op op = src;
    auto remap = [&](Op& o) {
      for (ValueId& v : o.operands) {
        if (auto it = subst.find(v); it != subst.end()) v = it->second;
      }
    };
    remap(op);
    for (Block& region : op.regions) walk_mut(region, remap);
    if (auto replacement = fold(op, defs)) {
      subst[*op.result] = *replacement;
      continue;
    }
    b.append(std::move(op));
  }
  if (subst.empty()) return false;
  finish(out);
  fn = std::move(out);
  return true;
}

}  // namespace

Function propagate_packs(const Function& fn) {
  Function out = fn;
  bool any = false;
  while (propagate_once(out)) any = true;
  return any ? out : fn;
}

Function fold_pack_unpack(const Function& fn) {
  Function out = fn;
  auto fold = [&](const Op& op, const std::vector<const Op*>& defs) -> std::optional<ValueId> {
    if (op.kind != OpKind::Pack && op.kind != OpKind::Unpack) return std::nullopt;
    const Op* inner = defs[static_cast<size_t>(op.operands[0])];
    OpKind want = op.kind == OpKind::Pack ? OpKind::Unpack : OpKind::Pack;
    if (!inner || inner->kind != want) return std::nullopt;
    if (!(PackSpec::from_op(*inner) == PackSpec::from_op(op))) return std::nullopt;
    ValueId original = inner->operands[0];
    if (out.type(original) != out.type(*op.result)) return std::nullopt;
    return original;
  };
  bool any = false;
  while (fold_once(out, fold)) any = true;
  return any ? out : fn;
}

Function fold_constant_packs(const Function& fn) {
  Function out = fn;
  bool any = false;
  while (true) {
    auto defs = top_level_defs(out);
    Function next = out;
    bool changed = false;
    for (Op& op : next.body.ops) {
      if (op.kind != OpKind::Pack) continue;
      const Op* src = defs[static_cast<size_t>(op.operands[0])];
      if (!src) continue;
      PackSpec spec = PackSpec::from_op(op);
      if (src->kind == OpKind::Constant) {
        const DenseData& data = src->dense_attr("value");
        DenseData packed{data.elem,
                         pack_values(spec, out.type(op.operands[0]).shape, data.values)};
        op = Op{OpKind::Constant, op.result, {}, {{"value", std::move(packed)}}, {}};
        changed = true;
      } else if (src->kind == OpKind::Splat) {
        op = Op{OpKind::Splat, op.result, {}, {{"value", src->attrs.at("value")}}, {}};
        changed = true;
      }
    }
    if (!changed) break;
    finish(next);
    out = std::move(next);
    any = true;
  }
  return any ? out : fn;
}

Module pack_matmuls(const Module& module, const PackingOptions& options) {
  return detail::map_functions(module, [&](const Function& f) { return pack_matmuls(f, options); });
}
Module propagate_packs(const Module& module) {
  return detail::map_functions(module, [](const Function& f) { return propagate_packs(f); });
}
Module fold_pack_unpack(const Module& module) {
  return detail::map_functions(module, [](const Function& f) { return fold_pack_unpack(f); });
}
Module fold_constant_packs(const Module& module) {
  return detail::map_functions(module, [](const Function& f) { return fold_constant_packs(f); });
}

}  // namespace tilec
