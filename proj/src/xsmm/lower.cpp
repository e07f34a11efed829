// SPDX-License-Identifier: Apache-2.0
#include "tilec/xsmm/lower.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "../transforms/util.hpp"

namespace tilec::xsmm {

OpKind call_op_kind(CallKind kind) {
  switch (kind) {
    case CallKind::Unary:
      return OpKind::XsmmUnary;
    case CallKind::Binary:
      return OpKind::XsmmBinary;
    case CallKind::Gemm:
      return OpKind::XsmmGemm;
    case CallKind::Brgemm:
      return OpKind::XsmmBrgemm;
    case CallKind::FusedBrgemm:
      return OpKind::XsmmFusedBrgemm;
  }
  return OpKind::XsmmUnary;
}

namespace {

[[noreturn]] void unsupported(const Op& op, const std::string& why) {
  throw CompileError("convert-to-xsmm: " + std::string(op_name(op.kind)) + ": " + why);
}

struct Matrix {
  int64_t rows, cols, ld;
};

// Row-major matrix view of a memref: the last dim is the row, everything
// before it folds into rows.
Matrix as_matrix(const Op& op, const Type& t) {
  if (!t.is_memref() || t.rank() == 0) unsupported(op, "expected a memref operand");
  if (t.strides.back() != 1) unsupported(op, "innermost stride must be 1, got " + to_string(t));
  int64_t cols = t.shape.back();
  if (t.rank() == 1) return {1, cols, cols};
  if (t.rank() == 2) return {t.shape[0], cols, t.strides[0]};
  if (!t.contiguous()) unsupported(op, "rank-" + std::to_string(t.rank()) + " view must be contiguous");
  return {t.num_elements() / cols, cols, cols};
}

DispatchKey unary_key(const Op& op, UnaryKind kind, const Type& in, const Type& out) {
  Matrix mi = as_matrix(op, in), mo = as_matrix(op, out);
  if (mi.rows != mo.rows || mi.cols != mo.cols) unsupported(op, "operand shapes differ");
  DispatchKey key;
  key.kind = CallKind::Unary;
  key.dtype = out.elem;
  key.m = mo.rows;
  key.n = mo.cols;
  key.lda = mi.ld;
  key.ldc = mo.ld;
  key.unary = kind;
  return key;
}

DispatchKey bias_key(const Op& op, const Type& x, const Type& bias) {
  if (bias.rank() != 1) unsupported(op, "bias must be a vector");
  Matrix mx = as_matrix(op, x);
  if (bias.strides[0] != 1 || bias.shape[0] != mx.cols) unsupported(op, "bias does not match rows");
  DispatchKey key;
  key.kind = CallKind::Binary;
  key.dtype = x.elem;
  key.m = mx.rows;
  key.n = mx.cols;
  key.ldb = mx.ld;
  key.ldc = mx.ld;
  key.binary = BinaryKind::Add;
  key.bcast_col_in0 = true;
  return key;
}

}  // namespace

CallLowering lower_call(const Op& op, std::span<const Type> t) {
  CallLowering out;
  switch (op.kind) {
    case OpKind::Fill:
      if (op.float_attr("value") != 0.0) unsupported(op, "only zero fills map to a kernel");
      [[fallthrough]];
    case OpKind::TileZero:
      out = {unary_key(op, UnaryKind::Zero, t[0], t[0]), {0, 0}};
      break;
    case OpKind::Relu:
    case OpKind::TileRelu:
      out = {unary_key(op, UnaryKind::Relu, t[0], t[0]), {0, 0}};
      break;
    case OpKind::Copy:
      out = {unary_key(op, UnaryKind::Copy, t[0], t[1]), {0, 1}};
      break;
    case OpKind::BiasAdd:
      if (t[0].rank() != 2) unsupported(op, "only 2-D bias_add lowers outside a tile loop");
      [[fallthrough]];
    case OpKind::TileBiasAdd:
      out = {bias_key(op, t[0], t[1]), {1, 0, 0}};
      break;
    case OpKind::Matmul: {
      Matrix a = as_matrix(op, t[0]), b = as_matrix(op, t[1]), c = as_matrix(op, t[2]);
      DispatchKey key;
      key.kind = CallKind::Gemm;
      key.dtype = t[2].elem;
      key.m = c.rows;
      key.n = c.cols;
      key.k = a.cols;
      key.lda = a.ld;
      key.ldb = b.ld;
      key.ldc = c.ld;
      out = {key, {0, 1, 2}};
      break;
    }
    case OpKind::TileMatmulAccum: {
      const Type &a = t[0], &b = t[1], &c = t[2];
      bool vnni = op.bool_attr("vnni");
      if (a.strides[2] != 1 || c.strides[1] != 1 || b.strides.back() != 1 ||
          (vnni && b.strides[2] != 2)) {
        unsupported(op, "tile views must be unit-stride in the innermost dim");
      }
      DispatchKey key;
      key.kind = CallKind::Brgemm;
      key.dtype = c.elem;
      key.batch = a.shape[0];
      key.m = a.shape[1];
      key.k = a.shape[2];
      key.n = c.shape[1];
      key.lda = a.strides[1];
      key.stride_a = a.strides[0];
      key.ldb = b.strides[1];
      key.stride_b = b.strides[0];
      key.ldc = c.strides[0];
      key.vnni = vnni;
      out = {key, {0, 1, 2}};
      break;
    }
    case OpKind::Generic:
      unsupported(op, "generic ops have no micro-kernel form");
    case OpKind::PackedMatmul:
      unsupported(op, "packed_matmul must be tiled before lowering");
    default:
      unsupported(op, "no micro-kernel form");
  }
  out.key.validate();
  return out;
}

namespace {

// Handles requested while rewriting one top-level op, in creation order.
struct DispatchList {
  Function& fn;
  std::vector<std::pair<DispatchKey, ValueId>> entries;

  ValueId get(const DispatchKey& key) {
    for (const auto& [k, v] : entries) {
      if (k == key) return v;
    }
    ValueId v = fn.new_value(Type::handle());
    entries.emplace_back(key, v);
    return v;
  }

  void emit(Block& block) {
    for (const auto& [key, v] : entries) {
      block.ops.push_back(Op{OpKind::XsmmDispatch, v, {}, key.to_attrs(), {}});
    }
    entries.clear();
  }
};

bool lowers_to_call(const Op& op) {
  switch (op.kind) {
    case OpKind::TileZero:
    case OpKind::TileRelu:
    case OpKind::TileBiasAdd:
    case OpKind::TileMatmulAccum:
    case OpKind::Matmul:
    case OpKind::BiasAdd:
    case OpKind::Relu:
    case OpKind::Copy:
    case OpKind::Generic:
    case OpKind::PackedMatmul:
      return true;
    case OpKind::Fill:
      return op.float_attr("value") == 0.0;
    default:
      return false;
  }
}

Op convert_op(const Op& op, Function& fn, DispatchList& dispatches) {
  if (!op.regions.empty()) {
    Op out = op;
    for (Block& region : out.regions) {
      region.ops.clear();
    }
    for (size_t r = 0; r < op.regions.size(); ++r) {
      for (const Op& inner : op.regions[r].ops) {
        out.regions[r].ops.push_back(convert_op(inner, fn, dispatches));
      }
    }
    return out;
  }
  if (!lowers_to_call(op)) return op;
  std::vector<Type> types;
  for (ValueId v : op.operands) types.push_back(fn.type(v));
  CallLowering lowering = lower_call(op, types);
  Op call;
  call.kind = call_op_kind(lowering.key.kind);
  call.operands.push_back(dispatches.get(lowering.key));
  for (size_t i : lowering.operands) call.operands.push_back(op.operands[i]);
  return call;
}

std::map<ValueId, DispatchKey> dispatch_keys(const Function& fn) {
  std::map<ValueId, DispatchKey> keys;
  for (const Op& op : fn.body.ops) {
    if (op.kind == OpKind::XsmmDispatch) keys[*op.result] = DispatchKey::from_op(op);
  }
  return keys;
}

bool is_call(const Op& op) {
  switch (op.kind) {
    case OpKind::XsmmUnary:
    case OpKind::XsmmBinary:
    case OpKind::XsmmGemm:
    case OpKind::XsmmBrgemm:
    case OpKind::XsmmFusedBrgemm:
    case OpKind::XsmmTileConfig:
    case OpKind::XsmmTileRelease:
      return true;
    default:
      return false;
  }
}

// Collapses [zero]? brgemm [add]? [relu]? runs on one C view. Non-call ops
// in between are transparent; any other call ends the run.
std::vector<Op> fuse_ops(const std::vector<Op>& ops, const std::map<ValueId, DispatchKey>& keys,
                         const std::function<ValueId(const DispatchKey&)>& handle_for,
                         const std::function<std::vector<Op>(const Op&)>& recurse) {
  std::vector<size_t> calls;
  for (size_t i = 0; i < ops.size(); ++i) {
    if (is_call(ops[i])) calls.push_back(i);
  }
  auto key_of = [&](size_t i) -> const DispatchKey* {
    auto it = keys.find(ops[i].operands[0]);
    return it == keys.end() ? nullptr : &it->second;
  };
  std::set<size_t> removed;
  std::map<size_t, Op> placed;  // fused call, at the position of its last part
  for (size_t ci = 0; ci < calls.size(); ++ci) {
    size_t p = calls[ci];
    if (ops[p].kind != OpKind::XsmmBrgemm || removed.count(p)) continue;
    const DispatchKey* bk = key_of(p);
    if (!bk) continue;
    ValueId c = ops[p].operands[3];
    auto unary_on_c = [&](size_t i, UnaryKind kind) {
      const DispatchKey* k = key_of(i);
      return ops[i].kind == OpKind::XsmmUnary && k && k->unary == kind &&
             ops[i].operands[1] == c && ops[i].operands[2] == c && !removed.count(i);
    };
    bool zero = ci > 0 && unary_on_c(calls[ci - 1], UnaryKind::Zero);
    size_t next = ci + 1;
    std::optional<size_t> add, relu;
    if (next < calls.size()) {
      size_t i = calls[next];
      const DispatchKey* k = key_of(i);
      if (ops[i].kind == OpKind::XsmmBinary && k && k->binary == BinaryKind::Add &&
          k->bcast_col_in0 && ops[i].operands[2] == c && ops[i].operands[3] == c) {
        add = i;
        ++next;
      }
    }
    if (next < calls.size() && unary_on_c(calls[next], UnaryKind::Relu)) relu = calls[next];
    if (!zero && !add && !relu) continue;
    DispatchKey fused = *bk;
    fused.beta_zero = zero;
    Op op;
    op.operands = {ops[p].operands.begin(), ops[p].operands.end()};
    if (!add && !relu) {
      op.kind = OpKind::XsmmBrgemm;
    } else {
      op.kind = OpKind::XsmmFusedBrgemm;
      fused.kind = CallKind::FusedBrgemm;
      if (add) {
        fused.binary = BinaryKind::Add;
        fused.bcast_col_in0 = true;
        op.operands.push_back(ops[*add].operands[1]);
      }
      if (relu) fused.unary = UnaryKind::Relu;
    }
    fused.validate();
    op.operands[0] = handle_for(fused);
    if (zero) removed.insert(calls[ci - 1]);
    removed.insert(p);
    if (add) removed.insert(*add);
    if (relu) removed.insert(*relu);
    size_t last = relu ? *relu : add ? *add : p;
    removed.erase(last);
    placed[last] = std::move(op);
  }
  std::vector<Op> out;
  for (size_t i = 0; i < ops.size(); ++i) {
    if (removed.count(i)) continue;
    if (auto it = placed.find(i); it != placed.end()) {
      out.push_back(std::move(it->second));
      continue;
    }
    for (Op& op : recurse(ops[i])) out.push_back(std::move(op));
  }
  return out;
}

void finish(Function& fn) {
  eliminate_dead_ops(fn);
  renumber(fn);
}

}  // namespace

Function convert_to_xsmm(const Function& fn) {
  Function out = fn;
  out.body.ops.clear();
  DispatchList dispatches{out, {}};
  for (const Op& op : fn.body.ops) {
    Op converted = convert_op(op, out, dispatches);
    dispatches.emit(out.body);
    out.body.ops.push_back(std::move(converted));
  }
  finish(out);
  return out;
}

Function fuse_xsmm_calls(const Function& fn) {
  Function out = fn;
  auto keys = dispatch_keys(fn);
  DispatchList pending{out, {}};
  std::function<std::vector<Op>(const Op&)> nested = [&](const Op& op) -> std::vector<Op> {
    Op copy = op;
    for (Block& region : copy.regions) {
      region.ops = fuse_ops(region.ops, keys,
                            [&](const DispatchKey& k) { return pending.get(k); }, nested);
    }
    return {std::move(copy)};
  };
  Block top;
  top.args = fn.body.args;
  // Top-level fusions get their dispatch right before the fused call; calls
  // inside a loop nest get theirs right before the nest.
  DispatchList immediate{out, {}};
  std::vector<Op> fused_top = fuse_ops(
      fn.body.ops, keys, [&](const DispatchKey& k) { return immediate.get(k); },
      [](const Op& op) { return std::vector<Op>{op}; });
  for (Op& op : fused_top) {
    if (!op.regions.empty()) {
      op = std::move(nested(op).front());
      pending.emit(top);
    } else if (is_call(op)) {
      immediate.emit(top);
    }
    top.ops.push_back(std::move(op));
  }
  out.body = std::move(top);
  finish(out);
  return out;
}

namespace {

std::string divisors(int64_t n) {
  std::ostringstream os;
  bool first = true;
  for (int64_t d = 1; d <= n; ++d) {
    if (n % d == 0) {
      os << (first ? "" : ", ") << d;
      first = false;
    }
  }
  return os.str();
}

}  // namespace

Function parallelize_2d(const Function& fn, int64_t gm, int64_t gn) {
  if (gm < 1 || gn < 1) throw CompileError("parallelize-2d: grid factors must be positive");
  Function out = fn;
  if (gm == 1 && gn == 1) return out;
  for (Op& op : out.body.ops) {
    if (op.kind != OpKind::Parallel || op.ints_attr("bounds").size() != 2) continue;
    IntList bounds = op.ints_attr("bounds");
    if (bounds[0] % gm != 0 || bounds[1] % gn != 0) {
      throw CompileError("parallelize-2d: grid (" + std::to_string(gm) + "," + std::to_string(gn) +
                         ") does not divide the " + std::to_string(bounds[0]) + "x" +
                         std::to_string(bounds[1]) + " tile grid; valid gm: " +
                         divisors(bounds[0]) + "; valid gn: " + divisors(bounds[1]));
    }
    Block old_body = std::move(op.body());
    ValueId old_i = old_body.args[0], old_j = old_body.args[1];
    Block par_body;
    ValueId bi = out.new_value(Type::index());
    ValueId bj = out.new_value(Type::index());
    par_body.args = {bi, bj};
    Op loop;
    loop.kind = OpKind::For;
    loop.regions.resize(1);
    Block& inner = loop.regions[0];
    IntList loop_bounds;
    ValueId li = -1, lj = -1;
    if (gm > 1) {
      li = out.new_value(Type::index());
      inner.args.push_back(li);
      loop_bounds.push_back(gm);
    }
    if (gn > 1) {
      lj = out.new_value(Type::index());
      inner.args.push_back(lj);
      loop_bounds.push_back(gn);
    }
    loop.attrs["bounds"] = loop_bounds;
    OpBuilder b(out, inner);
    ValueId i = gm > 1 ? b.create(OpKind::IndexAffine, {bi, li}, {{"scale", gm}}, Type::index()) : bi;
    ValueId j = gn > 1 ? b.create(OpKind::IndexAffine, {bj, lj}, {{"scale", gn}}, Type::index()) : bj;
    replace_all_uses(old_body, old_i, i);
    replace_all_uses(old_body, old_j, j);
    for (Op& moved : old_body.ops) inner.ops.push_back(std::move(moved));
    par_body.ops.push_back(std::move(loop));
    op.attrs["bounds"] = IntList{bounds[0] / gm, bounds[1] / gn};
    op.regions[0] = std::move(par_body);
  }
  renumber(out);
  return out;
}

namespace {

bool is_gemm_call(const Op& op) {
  return op.kind == OpKind::XsmmGemm || op.kind == OpKind::XsmmBrgemm ||
         op.kind == OpKind::XsmmFusedBrgemm;
}

void wrap_calls(Block& block) {
  std::vector<Op> ops;
  for (Op& op : block.ops) {
    for (Block& region : op.regions) wrap_calls(region);
    if (is_gemm_call(op)) {
      ValueId h = op.operands[0];
      ops.push_back(Op{OpKind::XsmmTileConfig, std::nullopt, {h}, {}, {}});
      ops.push_back(std::move(op));
      ops.push_back(Op{OpKind::XsmmTileRelease, std::nullopt, {h}, {}, {}});
    } else {
      ops.push_back(std::move(op));
    }
  }
  block.ops = std::move(ops);
}

// Moves config/release brackets out of every sequential loop in `block`.
// Handles are defined at function level, so they are invariant in any loop.
void hoist_out_of_loops(Block& block) {
  std::vector<Op> ops;
  for (Op& op : block.ops) {
    if (op.kind != OpKind::For) {
      ops.push_back(std::move(op));
      continue;
    }
    Block& body = op.body();
    hoist_out_of_loops(body);
    std::vector<ValueId> handles;
    std::vector<Op> kept;
    for (Op& inner : body.ops) {
      if (inner.kind == OpKind::XsmmTileConfig || inner.kind == OpKind::XsmmTileRelease) {
        ValueId h = inner.operands[0];
        if (std::find(handles.begin(), handles.end(), h) == handles.end()) handles.push_back(h);
      } else {
        kept.push_back(std::move(inner));
      }
    }
    body.ops = std::move(kept);
    for (ValueId h : handles) ops.push_back(Op{OpKind::XsmmTileConfig, std::nullopt, {h}, {}, {}});
    ops.push_back(std::move(op));
    for (auto it = handles.rbegin(); it != handles.rend(); ++it) {
      ops.push_back(Op{OpKind::XsmmTileRelease, std::nullopt, {*it}, {}, {}});
    }
  }
  block.ops = std::move(ops);
}

}  // namespace

Function hoist_tile_config(const Function& fn, bool hoist) {
  Function out = fn;
  wrap_calls(out.body);
  if (hoist) {
    for (Op& op : out.body.ops) {
      if (op.kind == OpKind::Parallel) hoist_out_of_loops(op.body());
    }
  }
  return out;
}

Module convert_to_xsmm(const Module& module) {
  return tilec::detail::map_functions(module, [](const Function& f) { return convert_to_xsmm(f); });
}
Module fuse_xsmm_calls(const Module& module) {
  return tilec::detail::map_functions(module, [](const Function& f) { return fuse_xsmm_calls(f); });
}
Module parallelize_2d(const Module& module, int64_t gm, int64_t gn) {
  return tilec::detail::map_functions(module,
                                      [&](const Function& f) { return parallelize_2d(f, gm, gn); });
}
Module hoist_tile_config(const Module& module, bool hoist) {
  return tilec::detail::map_functions(module,
                                      [&](const Function& f) { return hoist_tile_config(f, hoist); });
}

}  // namespace tilec::xsmm
