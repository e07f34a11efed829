// SPDX-License-Identifier: Apache-2.0
#include "tilec/ir/ir.hpp"

#include <array>
#include <sstream>

namespace tilec {
namespace {

constexpr std::array<std::pair<OpKind, std::string_view>, 33> kOpNames = {{
    {OpKind::Constant, "constant"},
    {OpKind::Splat, "splat"},
    {OpKind::Empty, "empty"},
    {OpKind::Matmul, "matmul"},
    {OpKind::PackedMatmul, "packed_matmul"},
    {OpKind::BiasAdd, "bias_add"},
    {OpKind::Relu, "relu"},
    {OpKind::Pack, "pack"},
    {OpKind::Unpack, "unpack"},
    {OpKind::Generic, "generic"},
    {OpKind::Forall, "forall"},
    {OpKind::ExtractSlice, "extract_slice"},
    {OpKind::InsertSlice, "insert_slice"},
    {OpKind::TileZero, "tile_zero"},
    {OpKind::TileMatmulAccum, "tile_matmul_accum"},
    {OpKind::TileBiasAdd, "tile_bias_add"},
    {OpKind::TileRelu, "tile_relu"},
    {OpKind::Return, "return"},
    {OpKind::Alloc, "alloc"},
    {OpKind::Fill, "fill"},
    {OpKind::Copy, "copy"},
    {OpKind::Parallel, "parallel"},
    {OpKind::For, "for"},
    {OpKind::IndexAffine, "index_affine"},
    {OpKind::Subview, "subview"},
    {OpKind::XsmmDispatch, "xsmm.dispatch"},
    {OpKind::XsmmUnary, "xsmm.unary"},
    {OpKind::XsmmBinary, "xsmm.binary"},
    {OpKind::XsmmGemm, "xsmm.gemm"},
    {OpKind::XsmmBrgemm, "xsmm.brgemm"},
    {OpKind::XsmmFusedBrgemm, "xsmm.fused_brgemm"},
    {OpKind::XsmmTileConfig, "xsmm.tile_config"},
    {OpKind::XsmmTileRelease, "xsmm.tile_release"},
}};

template <class T>
const T& get_attr(const Op& op, std::string_view key) {
  auto it = op.attrs.find(key);
  if (it == op.attrs.end()) {
    throw CompileError("op '" + std::string(op_name(op.kind)) + "' is missing attribute '" +
                       std::string(key) + "'");
  }
  const T* value = std::get_if<T>(&it->second);
  if (!value) {
    throw CompileError("attribute '" + std::string(key) + "' of op '" +
                       std::string(op_name(op.kind)) + "' has the wrong kind");
  }
  return *value;
}

}  // namespace

std::string_view op_name(OpKind kind) {
  for (const auto& [k, name] : kOpNames) {
    if (k == kind) return name;
  }
  return "?";
}

std::optional<OpKind> parse_op_name(std::string_view name) {
  for (const auto& [k, n] : kOpNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

int64_t Op::int_attr(std::string_view key) const { return get_attr<int64_t>(*this, key); }
double Op::float_attr(std::string_view key) const {
  auto it = attrs.find(key);
  if (it != attrs.end()) {
    if (const auto* i = std::get_if<int64_t>(&it->second)) return static_cast<double>(*i);
  }
  return get_attr<double>(*this, key);
}
bool Op::bool_attr(std::string_view key, bool fallback) const {
  if (!has_attr(key)) return fallback;
  return get_attr<bool>(*this, key);
}
const std::string& Op::ident_attr(std::string_view key) const {
  return get_attr<std::string>(*this, key);
}
const IntList& Op::ints_attr(std::string_view key) const { return get_attr<IntList>(*this, key); }
const IdentList& Op::idents_attr(std::string_view key) const {
  return get_attr<IdentList>(*this, key);
}
const IntListList& Op::int_lists_attr(std::string_view key) const {
  return get_attr<IntListList>(*this, key);
}
const DenseData& Op::dense_attr(std::string_view key) const {
  return get_attr<DenseData>(*this, key);
}

ValueId Function::new_value(Type type) {
  types.push_back(std::move(type));
  return static_cast<ValueId>(types.size() - 1);
}

Function* Module::find(std::string_view name) {
  for (auto& fn : functions) {
    if (fn.name == name) return &fn;
  }
  return nullptr;
}

const Function* Module::find(std::string_view name) const {
  return const_cast<Module*>(this)->find(name);
}

std::string Diagnostic::format() const {
  std::ostringstream os;
  if (line > 0) os << line << ':' << col << ": ";
  if (!function.empty()) os << "in @" << function << ": ";
  if (op_index >= 0) os << "op #" << op_index << ": ";
  os << message;
  return os.str();
}

ValueId OpBuilder::create(OpKind kind, std::vector<ValueId> operands, AttrDict attrs,
                          Type result) {
  ValueId id = fn_.new_value(std::move(result));
  Op op;
  op.kind = kind;
  op.result = id;
  op.operands = std::move(operands);
  op.attrs = std::move(attrs);
  block_->ops.push_back(std::move(op));
  return id;
}

void OpBuilder::create_void(OpKind kind, std::vector<ValueId> operands, AttrDict attrs) {
  Op op;
  op.kind = kind;
  op.operands = std::move(operands);
  op.attrs = std::move(attrs);
  block_->ops.push_back(std::move(op));
}

Op& OpBuilder::append(Op op) {
  block_->ops.push_back(std::move(op));
  return block_->ops.back();
}

void walk(const Block& block, const std::function<void(const Op&)>& fn) {
  for (const Op& op : block.ops) {
    fn(op);
    for (const Block& region : op.regions) walk(region, fn);
  }
}

void walk_mut(Block& block, const std::function<void(Op&)>& fn) {
  for (Op& op : block.ops) {
    fn(op);
    for (Block& region : op.regions) walk_mut(region, fn);
  }
}

std::vector<int> use_counts(const Function& fn) {
  std::vector<int> counts(fn.types.size(), 0);
  walk(fn.body, [&](const Op& op) {
    for (ValueId v : op.operands) ++counts.at(static_cast<size_t>(v));
  });
  return counts;
}

void replace_all_uses(Block& block, ValueId from, ValueId to) {
  walk_mut(block, [&](Op& op) {
    for (ValueId& v : op.operands) {
      if (v == from) v = to;
    }
  });
}

namespace {

bool erase_unused(Block& block, const std::vector<int>& uses) {
  bool changed = false;
  std::erase_if(block.ops, [&](const Op& op) {
    bool dead = op.result && uses[static_cast<size_t>(*op.result)] == 0;
    changed |= dead;
    return dead;
  });
  for (Op& op : block.ops) {
    for (Block& region : op.regions) changed |= erase_unused(region, uses);
  }
  return changed;
}

void collect_defs(Block& block, std::vector<ValueId*>& order) {
  for (ValueId& arg : block.args) order.push_back(&arg);
  for (Op& op : block.ops) {
    if (op.result) order.push_back(&*op.result);
    for (Block& region : op.regions) collect_defs(region, order);
  }
}

const Op* find_def(const Block& block, ValueId id) {
  for (const Op& op : block.ops) {
    if (op.result == id) return &op;
    for (const Block& region : op.regions) {
      if (const Op* found = find_def(region, id)) return found;
    }
  }
  return nullptr;
}

}  // namespace

void eliminate_dead_ops(Function& fn) {
  while (erase_unused(fn.body, use_counts(fn))) {
  }
}

void renumber(Function& fn) {
  std::vector<ValueId*> defs;
  collect_defs(fn.body, defs);
  std::vector<ValueId> remap(fn.types.size(), -1);
  std::vector<Type> types;
  types.reserve(defs.size());
  for (ValueId* def : defs) {
    remap.at(static_cast<size_t>(*def)) = static_cast<ValueId>(types.size());
    types.push_back(fn.types.at(static_cast<size_t>(*def)));
  }
  for (ValueId* def : defs) *def = remap[static_cast<size_t>(*def)];
  walk_mut(fn.body, [&](Op& op) {
    for (ValueId& v : op.operands) {
      ValueId mapped = remap.at(static_cast<size_t>(v));
      if (mapped < 0) throw CompileError("renumber: use of undefined value %" + std::to_string(v));
      v = mapped;
    }
  });
  fn.types = std::move(types);
}

const Op* defining_op(const Function& fn, ValueId id) { return find_def(fn.body, id); }

}  // namespace tilec
