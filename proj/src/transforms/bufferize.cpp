// SPDX-License-Identifier: Apache-2.0
#include "tilec/transforms/bufferize.hpp"

#include <algorithm>
#include <map>

#include "util.hpp"

namespace tilec {

std::string_view to_string(StorageClass storage) {
  switch (storage) {
    case StorageClass::FuncArg:
      return "func_arg";
    case StorageClass::Alloc:
      return "alloc";
    case StorageClass::ConstantRO:
      return "constant_ro";
    case StorageClass::Result:
      return "result";
  }
  return "?";
}

namespace {

std::vector<int64_t> drop_dims(const std::vector<int64_t>& v, const IntList& dims) {
  std::vector<int64_t> out;
  for (size_t d = 0; d < v.size(); ++d) {
    if (std::find(dims.begin(), dims.end(), static_cast<int64_t>(d)) == dims.end()) {
      out.push_back(v[d]);
    }
  }
  return out;
}

struct SubviewInfo {
  ValueId source;
  IntList dims;
  std::vector<ValueId> at;
};

class Bufferizer {
 public:
  explicit Bufferizer(const Function& fn)
      : src_(fn), uses_(use_counts(fn)), map_(fn.types.size(), -1),
        last_use_(fn.types.size(), -1) {
    for (size_t i = 0; i < fn.body.ops.size(); ++i) {
      for_each_use(fn.body.ops[i], [&](ValueId v) { last_use_[static_cast<size_t>(v)] = static_cast<int>(i); });
    }
  }

  Function run() {
    out_.name = src_.name;
    for (const Type& t : src_.result_types) out_.result_types.push_back(memref_of(t));
    for (ValueId arg : src_.args()) {
      ValueId v = out_.new_value(memref_of(src_.type(arg)));
      out_.body.args.push_back(v);
      bind(arg, v, false);
    }
    OpBuilder b(out_, out_.body);
    lower_top(b);
    renumber(out_);
    return std::move(out_);
  }

 private:
  static Type memref_of(const Type& t) {
    return t.is_shaped() ? Type::memref(t.shape, t.elem) : t;
  }

  void bind(ValueId tensor, ValueId buffer, bool writable) {
    map_[static_cast<size_t>(tensor)] = buffer;
    writable_[buffer] = writable;
  }

  ValueId buf(ValueId tensor) const {
    ValueId v = map_[static_cast<size_t>(tensor)];
    if (v < 0) throw CompileError("bufferize: value %" + std::to_string(tensor) + " has no buffer");
    return v;
  }

  ValueId alloc(OpBuilder& b, const Type& like) {
    ValueId v = b.create(OpKind::Alloc, {}, {}, Type::memref(like.shape, like.elem));
    writable_[v] = true;
    return v;
  }

  template <class F>
  static void for_each_use(const Op& op, F&& f) {
    for (ValueId v : op.operands) f(v);
    for (const Block& region : op.regions) {
      walk(region, [&](const Op& inner) {
        for (ValueId v : inner.operands) f(v);
      });
    }
  }

  // In function scope, an op may overwrite its init when it is the init's
  // last reader and reads it only once. Inside loop bodies the init must
  // have no other use at all.
  bool can_overwrite(ValueId init) const {
    if (!top_op_) return uses_[static_cast<size_t>(init)] == 1;
    if (last_use_[static_cast<size_t>(init)] != top_index_) return false;
    int reads = 0;
    for_each_use(*top_op_, [&](ValueId v) { reads += v == init; });
    return reads == 1;
  }

  // Buffer an op may overwrite in place of `init`.
  ValueId dest_for(OpBuilder& b, ValueId init) {
    ValueId current = buf(init);
    if (can_overwrite(init) && writable_.at(current)) return current;
    ValueId fresh = alloc(b, out_.type(current));
    b.create_void(OpKind::Copy, {current, fresh});
    return fresh;
  }

  ValueId subview(OpBuilder& b, ValueId source, IntList dims, std::vector<ValueId> at) {
    Type st = out_.type(source);
    Type t = Type::memref(drop_dims(st.shape, dims), st.elem, drop_dims(st.strides, dims));
    std::vector<ValueId> operands{source};
    operands.insert(operands.end(), at.begin(), at.end());
    ValueId v = b.create(OpKind::Subview, std::move(operands), {{"dims", dims}}, t);
    writable_[v] = writable_.at(source);
    subviews_[v] = SubviewInfo{source, std::move(dims), std::move(at)};
    return v;
  }

  std::vector<ValueId> bufs(const std::vector<ValueId>& operands) const {
    std::vector<ValueId> out;
    for (ValueId v : operands) out.push_back(buf(v));
    return out;
  }

  void lower(const Block& block, OpBuilder& b) {
    for (const Op& op : block.ops) lower(op, b);
  }

  void lower_top(OpBuilder& b) {
    for (size_t i = 0; i < src_.body.ops.size(); ++i) {
      top_index_ = static_cast<int>(i);
      top_op_ = &src_.body.ops[i];
      lower(*top_op_, b);
    }
  }

  void lower(const Op& op, OpBuilder& b) {
    switch (op.kind) {
      case OpKind::Constant: {
        ValueId v = b.create(OpKind::Constant, {}, op.attrs, memref_of(src_.type(*op.result)));
        bind(*op.result, v, false);
        return;
      }
      case OpKind::Splat: {
        ValueId v = alloc(b, src_.type(*op.result));
        b.create_void(OpKind::Fill, {v}, op.attrs);
        bind(*op.result, v, true);
        return;
      }
      case OpKind::Empty:
        bind(*op.result, alloc(b, src_.type(*op.result)), true);
        return;
      case OpKind::Pack:
      case OpKind::Unpack: {
        ValueId dst = alloc(b, src_.type(*op.result));
        b.create_void(op.kind, {buf(op.operands[0]), dst}, op.attrs);
        bind(*op.result, dst, true);
        return;
      }
      case OpKind::Matmul:
      case OpKind::PackedMatmul:
      case OpKind::TileMatmulAccum: {
        ValueId a = buf(op.operands[0]), bb = buf(op.operands[1]);
        ValueId c = dest_for(b, op.operands[2]);
        b.create_void(op.kind, {a, bb, c}, op.attrs);
        bind(*op.result, c, true);
        return;
      }
      case OpKind::BiasAdd:
      case OpKind::TileBiasAdd: {
        ValueId bias = buf(op.operands[1]);
        ValueId x = dest_for(b, op.operands[0]);
        b.create_void(op.kind, {x, bias}, op.attrs);
        bind(*op.result, x, true);
        return;
      }
      case OpKind::Relu:
      case OpKind::TileRelu:
      case OpKind::TileZero: {
        ValueId x = dest_for(b, op.operands[0]);
        b.create_void(op.kind, {x}, op.attrs);
        bind(*op.result, x, true);
        return;
      }
      case OpKind::Generic: {
        std::vector<ValueId> operands;
        for (size_t i = 0; i + 1 < op.operands.size(); ++i) operands.push_back(buf(op.operands[i]));
        ValueId out = dest_for(b, op.operands.back());
        operands.push_back(out);
        b.create_void(OpKind::Generic, std::move(operands), op.attrs);
        bind(*op.result, out, true);
        return;
      }
      case OpKind::Forall: {
        ValueId out = dest_for(b, op.operands[0]);
        Op par;
        par.kind = OpKind::Parallel;
        par.attrs["bounds"] = op.attrs.at("bounds");
        par.regions.resize(1);
        const Block& body = op.body();
        for (size_t i = 0; i + 1 < body.args.size(); ++i) {
          ValueId iv = out_.new_value(Type::index());
          par.regions[0].args.push_back(iv);
          map_[static_cast<size_t>(body.args[i])] = iv;
        }
        map_[static_cast<size_t>(body.args.back())] = out;
        OpBuilder inner(out_, par.regions[0]);
        const Op* top = top_op_;
        top_op_ = nullptr;
        lower(body, inner);
        top_op_ = top;
        b.append(std::move(par));
        bind(*op.result, out, true);
        return;
      }
      case OpKind::ExtractSlice: {
        std::vector<ValueId> at(op.operands.begin() + 1, op.operands.end());
        ValueId v = subview(b, buf(op.operands[0]), op.ints_attr("dims"), bufs(at));
        map_[static_cast<size_t>(*op.result)] = v;
        return;
      }
      case OpKind::InsertSlice: {
        ValueId tile = buf(op.operands[0]);
        ValueId dest = buf(op.operands[1]);
        std::vector<ValueId> at = bufs({op.operands.begin() + 2, op.operands.end()});
        const IntList& dims = op.ints_attr("dims");
        auto it = subviews_.find(tile);
        if (it != subviews_.end() && it->second.source == dest && it->second.dims == dims &&
            it->second.at == at) {
          return;  // already computed in place
        }
        ValueId target = subview(b, dest, dims, at);
        b.create_void(OpKind::Copy, {tile, target});
        return;
      }
      case OpKind::Return: {
        std::vector<ValueId> results;
        for (ValueId v : op.operands) {
          ValueId r = buf(v);
          Op* def = find_alloc(r);
          if (!def || def->has_attr("result")) {
            ValueId fresh = alloc(b, out_.type(r));
            b.create_void(OpKind::Copy, {r, fresh});
            r = fresh;
            def = find_alloc(r);
          }
          def->attrs["result"] = true;
          results.push_back(r);
        }
        b.create_void(OpKind::Return, std::move(results));
        return;
      }
      default:
        throw CompileError("bufferize: unexpected op '" + std::string(op_name(op.kind)) + "'");
    }
  }

  Op* find_alloc(ValueId v) {
    for (Op& op : out_.body.ops) {
      if (op.kind == OpKind::Alloc && op.result == v) return &op;
    }
    return nullptr;
  }

  const Function& src_;
  std::vector<int> uses_;
  std::vector<ValueId> map_;
  std::vector<int> last_use_;  // index of the last top-level op reading each value
  int top_index_ = -1;
  const Op* top_op_ = nullptr;  // null while lowering a loop body
  Function out_;
  std::map<ValueId, bool> writable_;
  std::map<ValueId, SubviewInfo> subviews_;
};

}  // namespace

Function bufferize(const Function& fn) { return Bufferizer(fn).run(); }

Module bufferize(const Module& module) {
  return detail::map_functions(module, [](const Function& f) { return bufferize(f); });
}

std::vector<BufferInfo> list_buffers(const Function& fn) {
  std::vector<BufferInfo> out;
  for (ValueId arg : fn.args()) out.push_back({arg, fn.type(arg), StorageClass::FuncArg});
  walk(fn.body, [&](const Op& op) {
    if (op.kind == OpKind::Constant && op.result) {
      out.push_back({*op.result, fn.type(*op.result), StorageClass::ConstantRO});
    } else if (op.kind == OpKind::Alloc) {
      out.push_back({*op.result, fn.type(*op.result),
                     op.bool_attr("result") ? StorageClass::Result : StorageClass::Alloc});
    }
  });
  return out;
}

}  // namespace tilec
