// SPDX-License-Identifier: Apache-2.0
#include "tilec/ir/verifier.hpp"

#include <algorithm>
#include <set>

#include "tilec/ir/ops.hpp"

namespace tilec {
namespace {

struct Failure {
  std::string message;
};

[[noreturn]] void fail(std::string message) { throw Failure{std::move(message)}; }

void require(bool cond, const std::string& message) {
  if (!cond) fail(message);
}

std::string dims_str(const std::vector<int64_t>& shape) { return "[" + shape_string(shape) + "]"; }

std::vector<int64_t> drop_dims(const std::vector<int64_t>& values, const IntList& dims) {
  std::vector<int64_t> out;
  for (size_t i = 0; i < values.size(); ++i) {
    if (std::find(dims.begin(), dims.end(), static_cast<int64_t>(i)) == dims.end()) {
      out.push_back(values[i]);
    }
  }
  return out;
}

class Verifier {
 public:
  explicit Verifier(const Function& fn) : fn_(fn), defined_(fn.types.size(), false) {}

  std::optional<Diagnostic> run() {
    try {
      for (ValueId arg : fn_.args()) {
        require(arg >= 0 && static_cast<size_t>(arg) < fn_.types.size(), "bad argument id");
        require(fn_.type(arg).is_shaped(), "function arguments must be shaped");
      }
      const auto& ops = fn_.body.ops;
      require(!ops.empty() && ops.back().kind == OpKind::Return,
              "function must end with a return");
      block(fn_.body, nullptr);
    } catch (const Failure& f) {
      return Diagnostic{f.message, fn_.name, op_index_, 0, 0};
    } catch (const CompileError& e) {
      return Diagnostic{e.diagnostic().message, fn_.name, op_index_, 0, 0};
    }
    return std::nullopt;
  }

 private:
  const Type& type(ValueId id) const { return fn_.type(id); }

  void define(ValueId id) {
    require(id >= 0 && static_cast<size_t>(id) < fn_.types.size(), "value id out of range");
    require(!defined_[static_cast<size_t>(id)], "value %" + std::to_string(id) + " defined twice");
    defined_[static_cast<size_t>(id)] = true;
  }

  void block(const Block& b, const Op* parent) {
    std::vector<ValueId> scope;
    for (ValueId arg : b.args) {
      define(arg);
      scope.push_back(arg);
    }
    for (size_t i = 0; i < b.ops.size(); ++i) {
      const Op& op = b.ops[i];
      ++op_index_;
      int my_index = op_index_;
      for (ValueId v : op.operands) {
        require(v >= 0 && static_cast<size_t>(v) < fn_.types.size() &&
                    defined_[static_cast<size_t>(v)],
                "use of undefined value %" + std::to_string(v) + " in '" +
                    std::string(op_name(op.kind)) + "'");
      }
      if (op.kind == OpKind::Return) {
        require(parent == nullptr && i + 1 == b.ops.size(), "return must be the last op of the function");
      }
      if (op.kind == OpKind::InsertSlice) {
        require(parent && parent->kind == OpKind::Forall && i + 1 == b.ops.size(),
                "insert_slice must terminate a forall body");
      }
      check(op, parent);
      for (const Block& region : op.regions) block(region, &op);
      (void)my_index;
      if (op.result) {
        define(*op.result);
        scope.push_back(*op.result);
      }
    }
    // Values defined in a region are not visible after it.
    if (parent) {
      for (ValueId v : scope) defined_[static_cast<size_t>(v)] = false;
    }
  }

  void expect_operands(const Op& op, size_t n) {
    require(op.operands.size() == n, std::string(op_name(op.kind)) + " expects " +
                                         std::to_string(n) + " operands, got " +
                                         std::to_string(op.operands.size()));
  }

  // Tensor form: every shaped operand a tensor and one result. Buffer form:
  // memref operands and no result.
  bool tensor_mode(const Op& op) {
    require(!op.operands.empty(), std::string(op_name(op.kind)) + " needs operands");
    bool tensor = type(op.operands[0]).is_tensor();
    for (ValueId v : op.operands) {
      const Type& t = type(v);
      require(t.is_shaped(), std::string(op_name(op.kind)) + " operands must be shaped");
      require(t.is_tensor() == tensor,
              std::string(op_name(op.kind)) + " mixes tensor and memref operands");
    }
    if (tensor) {
      require(op.result.has_value(), std::string(op_name(op.kind)) + " on tensors needs a result");
      require(type(*op.result).is_tensor(), std::string(op_name(op.kind)) + " result must be a tensor");
    } else {
      require(!op.result, std::string(op_name(op.kind)) + " on memrefs has no result");
    }
    return tensor;
  }

  void same_elem(const Op& op) {
    ElemType elem = type(op.operands[0]).elem;
    for (ValueId v : op.operands) {
      if (type(v).is_shaped()) {
        require(type(v).elem == elem, std::string(op_name(op.kind)) + " element types differ");
      }
    }
    if (op.result && type(*op.result).is_shaped()) {
      require(type(*op.result).elem == elem,
              std::string(op_name(op.kind)) + " result element type differs");
    }
  }

  void result_matches(const Op& op, ValueId like) {
    require(type(*op.result).shape == type(like).shape && type(*op.result).elem == type(like).elem,
            std::string(op_name(op.kind)) + " result type " + to_string(type(*op.result)) +
                " does not match " + to_string(type(like)));
  }

  void check_rank(ValueId v, int64_t rank, std::string_view what) {
    require(type(v).rank() == rank, std::string(what) + " must have rank " + std::to_string(rank) +
                                        ", got " + to_string(type(v)));
  }

  void check_matmul(const Op& op) {
    expect_operands(op, 3);
    bool tensor = tensor_mode(op);
    same_elem(op);
    for (int i = 0; i < 3; ++i) check_rank(op.operands[static_cast<size_t>(i)], 2, "matmul operand");
    const auto& a = type(op.operands[0]).shape;
    const auto& b = type(op.operands[1]).shape;
    const auto& c = type(op.operands[2]).shape;
    require(a[1] == b[0], "contraction dim mismatch " + std::to_string(a[1]) + "≠" +
                              std::to_string(b[0]));
    require(c[0] == a[0] && c[1] == b[1], "matmul init " + dims_str(c) + " does not match " +
                                              dims_str({a[0], b[1]}));
    if (tensor) result_matches(op, op.operands[2]);
  }

  void check_packed_matmul(const Op& op) {
    expect_operands(op, 3);
    bool tensor = tensor_mode(op);
    same_elem(op);
    bool vnni = op.bool_attr("vnni");
    check_rank(op.operands[0], 4, "packed_matmul A");
    check_rank(op.operands[1], vnni ? 5 : 4, "packed_matmul B");
    check_rank(op.operands[2], 4, "packed_matmul C");
    const auto& a = type(op.operands[0]).shape;  // MB KB mb kb
    const auto& b = type(op.operands[1]).shape;  // NB KB kb nb | NB KB kb/2 nb 2
    const auto& c = type(op.operands[2]).shape;  // MB NB mb nb
    int64_t b_kb = vnni ? b[2] * b[4] : b[2];
    if (vnni) require(b[4] == 2, "vnni packed_matmul B must end in a pair dim");
    require(a[1] == b[1] && a[3] == b_kb, "contraction dim mismatch " + dims_str(a) + " vs " +
                                              dims_str(b));
    require(c[0] == a[0] && c[1] == b[0] && c[2] == a[2] && c[3] == b[3],
            "packed_matmul init " + dims_str(c) + " does not match operands");
    if (tensor) result_matches(op, op.operands[2]);
  }

  void check_bias_add(const Op& op) {
    expect_operands(op, 2);
    bool tensor = tensor_mode(op);
    same_elem(op);
    const auto& x = type(op.operands[0]).shape;
    const auto& bias = type(op.operands[1]).shape;
    if (x.size() == 2) {
      require(bias.size() == 1 && bias[0] == x[1],
              "bias " + dims_str(bias) + " does not broadcast over " + dims_str(x));
    } else if (x.size() == 4) {
      require(bias.size() == 2 && bias[0] == x[1] && bias[1] == x[3],
              "packed bias " + dims_str(bias) + " does not broadcast over " + dims_str(x));
    } else {
      fail("bias_add input must have rank 2 or 4");
    }
    if (tensor) result_matches(op, op.operands[0]);
  }

  void check_unary_same(const Op& op) {
    expect_operands(op, 1);
    if (tensor_mode(op)) result_matches(op, op.operands[0]);
  }

  void check_pack(const Op& op, bool unpack) {
    PackSpec spec = PackSpec::from_op(op);
    bool tensor = tensor_mode(op);
    expect_operands(op, tensor ? 1 : 2);
    same_elem(op);
    const Type& src = type(op.operands[0]);
    std::vector<int64_t> dst_shape =
        tensor ? type(*op.result).shape : type(op.operands[1]).shape;
    if (!unpack) {
      if (auto err = spec.check(src.shape)) fail(*err);
      auto expected = spec.packed_shape(src.shape);
      require(dst_shape == expected, "pack result " + dims_str(dst_shape) + " expected " +
                                         dims_str(expected));
    } else {
      if (auto err = spec.check_packed(src.shape)) fail(*err);
      auto expected = spec.unpacked_shape(src.shape);
      require(dst_shape == expected, "unpack result " + dims_str(dst_shape) + " expected " +
                                         dims_str(expected));
    }
  }

  void check_generic(const Op& op) {
    bool tensor = tensor_mode(op);
    same_elem(op);
    GenericInfo info = GenericInfo::from_op(op);
    require(info.loops >= 1, "generic needs at least one loop");
    require(static_cast<int64_t>(info.iterators.size()) == info.loops,
            "generic iterator count differs from loop count");
    require(info.maps.size() == op.operands.size(), "generic needs one indexing map per operand");
    size_t num_ins = op.operands.size() - 1;
    std::vector<int64_t> extents(static_cast<size_t>(info.loops), -1);
    for (size_t i = 0; i < op.operands.size(); ++i) {
      const IntList& map = info.maps[i];
      const Type& t = type(op.operands[i]);
      require(static_cast<int64_t>(map.size()) == t.rank(),
              "indexing map " + std::to_string(i) + " has " + std::to_string(map.size()) +
                  " results for operand of rank " + std::to_string(t.rank()));
      std::set<int64_t> seen;
      for (size_t r = 0; r < map.size(); ++r) {
        int64_t d = map[r];
        require(d >= 0 && d < info.loops, "indexing map " + std::to_string(i) +
                                              " is not a projected permutation (d" +
                                              std::to_string(d) + " out of range)");
        require(seen.insert(d).second, "indexing map " + std::to_string(i) +
                                           " is not a projected permutation (d" +
                                           std::to_string(d) + " repeated)");
        auto& ext = extents[static_cast<size_t>(d)];
        require(ext < 0 || ext == t.shape[r], "loop d" + std::to_string(d) +
                                                  " has inconsistent extents " +
                                                  std::to_string(ext) + " and " +
                                                  std::to_string(t.shape[r]));
        ext = t.shape[r];
      }
    }
    for (size_t d = 0; d < extents.size(); ++d) {
      require(extents[d] > 0, "loop d" + std::to_string(d) + " is not addressed by any operand");
    }
    std::set<int64_t> out_dims(info.maps.back().begin(), info.maps.back().end());
    std::set<int64_t> parallel_dims;
    int reductions = 0;
    for (int64_t d = 0; d < info.loops; ++d) {
      if (info.iterators[static_cast<size_t>(d)] == IteratorKind::Parallel) {
        parallel_dims.insert(d);
      } else {
        ++reductions;
      }
    }
    require(out_dims == parallel_dims, "out map must cover all parallel dims exactly");
    switch (info.body) {
      case GenericBody::MulAcc:
        require(num_ins == 2 && reductions >= 1, "mul_acc needs two ins and a reduction");
        break;
      case GenericBody::Add:
        require(num_ins == 2 && reductions == 0, "add needs two ins and no reduction");
        break;
      case GenericBody::MaxZero:
      case GenericBody::Copy:
        require(num_ins == 0 && reductions == 0,
                std::string(to_string(info.body)) + " computes from its out init only");
        break;
    }
    if (tensor) result_matches(op, op.operands.back());
  }

  void check_bounds(const Op& op, size_t args) {
    const IntList& bounds = op.ints_attr("bounds");
    require(!bounds.empty(), std::string(op_name(op.kind)) + " needs bounds");
    for (int64_t b : bounds) require(b >= 1, "loop bounds must be positive");
    require(op.regions.size() == 1, std::string(op_name(op.kind)) + " needs one region");
    const Block& body = op.body();
    require(body.args.size() == bounds.size() + args,
            std::string(op_name(op.kind)) + " region argument count mismatch");
    for (size_t i = 0; i < bounds.size(); ++i) {
      require(type(body.args[i]).kind == TypeKind::Index, "induction variables must be index");
    }
  }

  void check_slice_indices(const Op& op, size_t first_index, const Type& src, const IntList& dims) {
    require(op.operands.size() - first_index == dims.size(),
            std::string(op_name(op.kind)) + " needs one index per sliced dim");
    for (size_t i = first_index; i < op.operands.size(); ++i) {
      require(type(op.operands[i]).kind == TypeKind::Index, "slice offsets must be index values");
    }
    std::set<int64_t> seen;
    for (int64_t d : dims) {
      require(d >= 0 && d < src.rank() && seen.insert(d).second, "bad slice dims");
    }
    require(dims.size() < src.shape.size(), "slice must keep at least one dim");
  }

  void check_tile_matmul(const Op& op) {
    expect_operands(op, 3);
    tensor_mode(op);
    same_elem(op);
    bool vnni = op.bool_attr("vnni");
    check_rank(op.operands[0], 3, "tile A");
    check_rank(op.operands[1], vnni ? 4 : 3, "tile B");
    check_rank(op.operands[2], 2, "tile C");
    const auto& a = type(op.operands[0]).shape;
    const auto& b = type(op.operands[1]).shape;
    const auto& c = type(op.operands[2]).shape;
    int64_t b_k = vnni ? b[1] * b[3] : b[1];
    if (vnni) require(b[3] == 2, "vnni tile B must end in a pair dim");
    require(a[0] == b[0] && a[2] == b_k, "tile contraction mismatch " + dims_str(a) + " vs " +
                                             dims_str(b));
    require(c[0] == a[1] && c[1] == b[2], "tile C " + dims_str(c) + " does not match operands");
    if (op.result) result_matches(op, op.operands[2]);
  }

  void check_call(const Op& op) {
    require(!op.result, "xsmm calls have no result");
    require(!op.operands.empty() && type(op.operands[0]).kind == TypeKind::Handle,
            std::string(op_name(op.kind)) + " takes a dispatched handle first");
    for (size_t i = 1; i < op.operands.size(); ++i) {
      require(type(op.operands[i]).is_memref(), std::string(op_name(op.kind)) +
                                                    " operands must be memrefs");
    }
    const Op* dispatch = defining_op(fn_, op.operands[0]);
    require(dispatch && dispatch->kind == OpKind::XsmmDispatch, "handle must come from xsmm.dispatch");
    const std::string& kind = dispatch->ident_attr("kind");
    auto need = [&](std::string_view k, size_t lo, size_t hi) {
      require(kind == k, std::string(op_name(op.kind)) + " invoked with a '" + kind + "' handle");
      require(op.operands.size() >= lo && op.operands.size() <= hi,
              std::string(op_name(op.kind)) + " operand count mismatch");
    };
    switch (op.kind) {
      case OpKind::XsmmUnary:
        need("unary", 3, 3);
        break;
      case OpKind::XsmmBinary:
        need("binary", 4, 4);
        break;
      case OpKind::XsmmGemm:
        need("gemm", 4, 4);
        break;
      case OpKind::XsmmBrgemm:
        need("brgemm", 4, 4);
        break;
      case OpKind::XsmmFusedBrgemm:
        need("fused_brgemm", 4, 5);
        break;
      case OpKind::XsmmTileConfig:
      case OpKind::XsmmTileRelease:
        require(op.operands.size() == 1, "tile config ops take only a handle");
        break;
      default:
        break;
    }
  }

  void check_dispatch(const Op& op) {
    require(op.operands.empty(), "xsmm.dispatch takes no operands");
    require(op.result && type(*op.result).kind == TypeKind::Handle, "xsmm.dispatch yields a handle");
    const std::string& kind = op.ident_attr("kind");
    static const std::set<std::string> kKinds = {"unary", "binary", "gemm", "brgemm",
                                                 "fused_brgemm"};
    require(kKinds.count(kind) > 0, "unknown xsmm call kind '" + kind + "'");
    if (op.has_attr("unary")) {
      const std::string& u = op.ident_attr("unary");
      require(u == "relu" || u == "zero" || u == "copy" || u == "none",
              "unsupported unary kind '" + u + "' (supported: relu, zero, copy)");
    }
    if (op.has_attr("binary")) {
      const std::string& b = op.ident_attr("binary");
      require(b == "add" || b == "mul" || b == "none", "unsupported binary kind '" + b + "'");
    }
    for (const char* key : {"m", "n"}) require(op.int_attr(key) >= 1, "xsmm dims must be positive");
  }

  void check(const Op& op, const Op* parent) {
    auto no_operands = [&] {
      require(op.operands.empty(), std::string(op_name(op.kind)) + " takes no operands");
    };
    switch (op.kind) {
      case OpKind::Constant: {
        no_operands();
        require(op.result && type(*op.result).is_shaped(), "constant needs a shaped result");
        const DenseData& data = op.dense_attr("value");
        const Type& t = type(*op.result);
        require(data.elem == t.elem, "constant payload element type differs from result");
        require(static_cast<int64_t>(data.values.size()) == t.num_elements(),
                "constant payload has " + std::to_string(data.values.size()) + " elements, type has " +
                    std::to_string(t.num_elements()));
        break;
      }
      case OpKind::Splat:
        no_operands();
        require(op.result && type(*op.result).is_tensor(), "splat needs a tensor result");
        op.float_attr("value");
        break;
      case OpKind::Empty:
        no_operands();
        require(op.result && type(*op.result).is_tensor(), "empty needs a tensor result");
        break;
      case OpKind::Matmul:
        check_matmul(op);
        break;
      case OpKind::PackedMatmul:
        check_packed_matmul(op);
        break;
      case OpKind::BiasAdd:
        check_bias_add(op);
        break;
      case OpKind::Relu:
        check_unary_same(op);
        break;
      case OpKind::Pack:
        check_pack(op, false);
        break;
      case OpKind::Unpack:
        check_pack(op, true);
        break;
      case OpKind::Generic:
        check_generic(op);
        break;
      case OpKind::Forall: {
        expect_operands(op, 1);
        require(op.result && type(*op.result).is_tensor() &&
                    type(*op.result) == type(op.operands[0]),
                "forall result must match its shared output");
        check_bounds(op, 1);
        const Block& body = op.body();
        require(type(body.args.back()) == type(op.operands[0]),
                "forall shared output argument type mismatch");
        require(!body.ops.empty() && body.ops.back().kind == OpKind::InsertSlice,
                "forall body must end with insert_slice");
        const Op& ins = body.ops.back();
        require(ins.operands.size() >= 2 && ins.operands[1] == body.args.back(),
                "forall body must insert into its shared output");
        const IntList& bounds = op.ints_attr("bounds");
        const IntList& dims = ins.ints_attr("dims");
        require(dims.size() == bounds.size(), "forall insert must slice one dim per loop");
        for (size_t i = 0; i < dims.size(); ++i) {
          require(ins.operands[2 + i] == body.args[i],
                  "forall insert offsets must be the induction variables in order");
          require(type(op.operands[0]).shape[static_cast<size_t>(dims[i])] == bounds[i],
                  "forall bounds must match the sliced dims of its output");
        }
        break;
      }
      case OpKind::ExtractSlice: {
        require(!op.operands.empty() && type(op.operands[0]).is_tensor(),
                "extract_slice source must be a tensor");
        const IntList& dims = op.ints_attr("dims");
        check_slice_indices(op, 1, type(op.operands[0]), dims);
        require(op.result && type(*op.result) ==
                                 Type::tensor(drop_dims(type(op.operands[0]).shape, dims),
                                              type(op.operands[0]).elem),
                "extract_slice result type mismatch");
        break;
      }
      case OpKind::InsertSlice: {
        require(op.operands.size() >= 2 && !op.result, "insert_slice takes (tile, dest, offsets...)");
        const IntList& dims = op.ints_attr("dims");
        const Type& dest = type(op.operands[1]);
        require(dest.is_tensor() && type(op.operands[0]).is_tensor(), "insert_slice works on tensors");
        check_slice_indices(op, 2, dest, dims);
        require(type(op.operands[0]).shape == drop_dims(dest.shape, dims),
                "insert_slice tile shape mismatch");
        break;
      }
      case OpKind::Subview: {
        require(!op.operands.empty() && type(op.operands[0]).is_memref(),
                "subview source must be a memref");
        const IntList& dims = op.ints_attr("dims");
        const Type& src = type(op.operands[0]);
        check_slice_indices(op, 1, src, dims);
        Type expected =
            Type::memref(drop_dims(src.shape, dims), src.elem, drop_dims(src.strides, dims));
        require(op.result && type(*op.result) == expected, "subview result type mismatch, expected " +
                                                               to_string(expected));
        break;
      }
      case OpKind::TileZero:
      case OpKind::TileRelu:
        expect_operands(op, 1);
        tensor_mode(op);
        check_rank(op.operands[0], 2, "tile operand");
        if (op.result) result_matches(op, op.operands[0]);
        break;
      case OpKind::TileMatmulAccum:
        check_tile_matmul(op);
        break;
      case OpKind::TileBiasAdd: {
        expect_operands(op, 2);
        tensor_mode(op);
        same_elem(op);
        check_rank(op.operands[0], 2, "tile C");
        check_rank(op.operands[1], 1, "tile bias");
        require(type(op.operands[1]).shape[0] == type(op.operands[0]).shape[1],
                "tile bias length mismatch");
        if (op.result) result_matches(op, op.operands[0]);
        break;
      }
      case OpKind::Return: {
        require(!op.result, "return has no result");
        require(op.operands.size() == fn_.result_types.size(), "return arity mismatch");
        for (size_t i = 0; i < op.operands.size(); ++i) {
          const Type& t = type(op.operands[i]);
          const Type& want = fn_.result_types[i];
          require(t.shape == want.shape && t.elem == want.elem && t.kind == want.kind,
                  "return type " + to_string(t) + " does not match " + to_string(want));
        }
        break;
      }
      case OpKind::Alloc:
        no_operands();
        require(op.result && type(*op.result).is_memref() && type(*op.result).contiguous(),
                "alloc yields a contiguous memref");
        break;
      case OpKind::Fill:
        expect_operands(op, 1);
        require(!op.result && type(op.operands[0]).is_memref(), "fill writes a memref");
        op.float_attr("value");
        break;
      case OpKind::Copy:
        expect_operands(op, 2);
        require(!op.result && type(op.operands[0]).is_memref() && type(op.operands[1]).is_memref(),
                "copy works on memrefs");
        require(type(op.operands[0]).shape == type(op.operands[1]).shape, "copy shape mismatch");
        same_elem(op);
        break;
      case OpKind::Parallel:
      case OpKind::For:
        no_operands();
        require(!op.result, std::string(op_name(op.kind)) + " has no result");
        check_bounds(op, 0);
        if (op.kind == OpKind::Parallel) {
          require(parent == nullptr, "parallel loops may not nest");
        }
        break;
      case OpKind::IndexAffine:
        expect_operands(op, 2);
        require(type(op.operands[0]).kind == TypeKind::Index &&
                    type(op.operands[1]).kind == TypeKind::Index,
                "index_affine takes index operands");
        require(op.result && type(*op.result).kind == TypeKind::Index, "index_affine yields index");
        require(op.int_attr("scale") >= 1, "index_affine scale must be positive");
        break;
      case OpKind::XsmmDispatch:
        check_dispatch(op);
        break;
      case OpKind::XsmmUnary:
      case OpKind::XsmmBinary:
      case OpKind::XsmmGemm:
      case OpKind::XsmmBrgemm:
      case OpKind::XsmmFusedBrgemm:
      case OpKind::XsmmTileConfig:
      case OpKind::XsmmTileRelease:
        check_call(op);
        break;
    }
    if (op.kind != OpKind::Forall && op.kind != OpKind::Parallel && op.kind != OpKind::For) {
      require(op.regions.empty(), std::string(op_name(op.kind)) + " takes no region");
    }
  }

  const Function& fn_;
  std::vector<bool> defined_;
  int op_index_ = -1;
};

}  // namespace

std::optional<Diagnostic> verify(const Function& fn) { return Verifier(fn).run(); }

std::optional<Diagnostic> verify(const Module& module) {
  std::set<std::string> names;
  for (const Function& fn : module.functions) {
    if (!names.insert(fn.name).second) {
      return Diagnostic{"duplicate function name", fn.name, -1, 0, 0};
    }
    if (auto diag = verify(fn)) return diag;
  }
  return std::nullopt;
}

void verify_or_throw(const Module& module, std::string_view stage) {
  if (auto diag = verify(module)) {
    diag->message = std::string(stage) + ": " + diag->message;
    throw CompileError(*diag);
  }
}

}  // namespace tilec
