// SPDX-License-Identifier: Apache-2.0
//
// Core SSA IR shared by every stage of the compiler. One op vocabulary spans
// value-semantic tensors, loop nests over tiles, bufferized form and the
// micro-kernel call layer; the verifier decides which combinations are legal.
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tilec/ir/types.hpp"

namespace tilec {

using ValueId = int32_t;

/// Literal tensor payload. Values are held widened to F32 and are always
/// exactly representable in `elem`.
struct DenseData {
  ElemType elem = ElemType::F32;
  std::vector<float> values;
  bool operator==(const DenseData&) const = default;
};

using IntList = std::vector<int64_t>;
using IdentList = std::vector<std::string>;
using IntListList = std::vector<std::vector<int64_t>>;

// Strings are bare identifiers in the textual form.
using Attribute =
    std::variant<int64_t, double, bool, std::string, IntList, IdentList, IntListList, DenseData>;

using AttrDict = std::map<std::string, Attribute, std::less<>>;

enum class OpKind : uint8_t {
  // Tensor level.
  Constant,
  Splat,
  Empty,
  Matmul,
  PackedMatmul,
  BiasAdd,
  Relu,
  Pack,
  Unpack,
  Generic,
  Forall,
  ExtractSlice,
  InsertSlice,
  TileZero,
  TileMatmulAccum,
  TileBiasAdd,
  TileRelu,
  Return,
  // Buffer level.
  Alloc,
  Fill,
  Copy,
  Parallel,
  For,
  IndexAffine,
  Subview,
  // Micro-kernel calls.
  XsmmDispatch,
  XsmmUnary,
  XsmmBinary,
  XsmmGemm,
  XsmmBrgemm,
  XsmmFusedBrgemm,
  XsmmTileConfig,
  XsmmTileRelease,
};

std::string_view op_name(OpKind kind);
std::optional<OpKind> parse_op_name(std::string_view name);

struct Op;

struct Block {
  std::vector<ValueId> args;
  std::vector<Op> ops;
  bool operator==(const Block&) const;
};

struct Op {
  OpKind kind = OpKind::Return;
  std::optional<ValueId> result;
  std::vector<ValueId> operands;
  AttrDict attrs;
  std::vector<Block> regions;

  bool has_attr(std::string_view key) const { return attrs.find(key) != attrs.end(); }
  int64_t int_attr(std::string_view key) const;
  double float_attr(std::string_view key) const;
  bool bool_attr(std::string_view key, bool fallback = false) const;
  const std::string& ident_attr(std::string_view key) const;
  const IntList& ints_attr(std::string_view key) const;
  const IdentList& idents_attr(std::string_view key) const;
  const IntListList& int_lists_attr(std::string_view key) const;
  const DenseData& dense_attr(std::string_view key) const;

  Block& body() { return regions.at(0); }
  const Block& body() const { return regions.at(0); }

  bool operator==(const Op&) const = default;
};

inline bool Block::operator==(const Block& other) const {
  return args == other.args && ops == other.ops;
}

struct Function {
  std::string name;
  std::vector<Type> result_types;
  Block body;  // body.args are the function arguments
  std::vector<Type> types;  // indexed by ValueId

  ValueId new_value(Type type);
  const Type& type(ValueId id) const { return types.at(static_cast<size_t>(id)); }
  const std::vector<ValueId>& args() const { return body.args; }

  bool operator==(const Function&) const = default;
};

struct Module {
  std::vector<Function> functions;

  Function* find(std::string_view name);
  const Function* find(std::string_view name) const;

  bool operator==(const Module&) const = default;
};

/// Located error report. `line`/`col` are set by the parser, `op_index` by
/// the verifier (pre-order position of the op within its function).
struct Diagnostic {
  std::string message;
  std::string function;
  int op_index = -1;
  int line = 0;
  int col = 0;

  std::string format() const;
};

class CompileError : public std::runtime_error {
 public:
  explicit CompileError(Diagnostic diag)
      : std::runtime_error(diag.format()), diag_(std::move(diag)) {}
  explicit CompileError(std::string message)
      : CompileError(Diagnostic{std::move(message), {}, -1, 0, 0}) {}
  const Diagnostic& diagnostic() const { return diag_; }

 private:
  Diagnostic diag_;
};

/// Appends ops to a block, allocating result values in the owning function.
class OpBuilder {
 public:
  OpBuilder(Function& fn, Block& block) : fn_(fn), block_(&block) {}

  ValueId create(OpKind kind, std::vector<ValueId> operands, AttrDict attrs, Type result);
  void create_void(OpKind kind, std::vector<ValueId> operands, AttrDict attrs = {});
  Op& append(Op op);

  Function& function() { return fn_; }
  Block& block() { return *block_; }
  void set_block(Block& block) { block_ = &block; }

 private:
  Function& fn_;
  Block* block_;
};

// IR walking and rewriting helpers.
void walk(const Block& block, const std::function<void(const Op&)>& fn);
void walk_mut(Block& block, const std::function<void(Op&)>& fn);

/// Number of operand uses of every value, counted across nested regions.
std::vector<int> use_counts(const Function& fn);

void replace_all_uses(Block& block, ValueId from, ValueId to);

/// Drops ops whose result is unused, to fixpoint. Ops without results are
/// kept (they carry side effects or terminate a block).
void eliminate_dead_ops(Function& fn);

/// Renumbers values densely in textual definition order and compacts the
/// type table. Every pass ends with this so printing is canonical.
void renumber(Function& fn);

/// The op defining `id`, or nullptr for block arguments.
const Op* defining_op(const Function& fn, ValueId id);

}  // namespace tilec
