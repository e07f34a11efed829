// SPDX-License-Identifier: Apache-2.0
#include "tilec/ir/analysis.hpp"

#include "tilec/ir/ops.hpp"

namespace tilec {

double flop_count(const Function& fn) {
  double total = 0.0;
  for (const Op& op : fn.body.ops) {
    if (!op.result || !fn.type(*op.result).is_tensor()) continue;
    const Type& out = fn.type(*op.result);
    auto elems = static_cast<double>(out.num_elements());
    switch (op.kind) {
      case OpKind::Matmul:
        total += 2.0 * elems * static_cast<double>(fn.type(op.operands[0]).shape[1]);
        break;
      case OpKind::PackedMatmul: {
        const auto& a = fn.type(op.operands[0]).shape;
        total += 2.0 * elems * static_cast<double>(a[1] * a[3]);
        break;
      }
      case OpKind::BiasAdd:
      case OpKind::Relu:
        total += elems;
        break;
      case OpKind::Generic: {
        GenericInfo info = GenericInfo::from_op(op);
        std::vector<int64_t> extents(static_cast<size_t>(info.loops), 1);
        for (size_t i = 0; i < op.operands.size(); ++i) {
          const auto& shape = fn.type(op.operands[i]).shape;
          for (size_t r = 0; r < info.maps[i].size(); ++r) {
            extents[static_cast<size_t>(info.maps[i][r])] = shape[r];
          }
        }
        auto iters = static_cast<double>(product(extents));
        total += info.body == GenericBody::MulAcc ? 2.0 * iters : iters;
        break;
      }
      default:
        break;
    }
  }
  return total;
}

double flop_count(const Module& module) {
  double total = 0.0;
  for (const Function& fn : module.functions) total += flop_count(fn);
  return total;
}

int count_ops(const Function& fn, OpKind kind) {
  int n = 0;
  walk(fn.body, [&](const Op& op) { n += op.kind == kind ? 1 : 0; });
  return n;
}

}  // namespace tilec
