// SPDX-License-Identifier: Apache-2.0
//
// Buffer-form to micro-kernel call lowering and the call-level passes:
// epilogue fusion, 2D thread-grid blocking and tile-config placement.
#pragma once

#include <span>
#include <vector>

#include "tilec/ir/ir.hpp"
#include "tilec/xsmm/kernels.hpp"

namespace tilec::xsmm {

/// Micro-kernel call equivalent to one buffer op: the dispatch key and, for
/// each call operand after the handle, the index of the buffer-op operand.
struct CallLowering {
  DispatchKey key;
  std::vector<size_t> operands;
};

/// Lowering of a single buffer op given its operand types. Throws
/// CompileError for ops without a micro-kernel form.
CallLowering lower_call(const Op& op, std::span<const Type> operand_types);

OpKind call_op_kind(CallKind kind);

Function convert_to_xsmm(const Function& fn);
Function fuse_xsmm_calls(const Function& fn);
Function parallelize_2d(const Function& fn, int64_t gm, int64_t gn);
/// Brackets every gemm-family call with tile_config/tile_release. With
/// `hoist`, the brackets move out of sequential loops nested in a parallel
/// body, but stay inside it.
Function hoist_tile_config(const Function& fn, bool hoist = true);

Module convert_to_xsmm(const Module& module);
Module fuse_xsmm_calls(const Module& module);
Module parallelize_2d(const Module& module, int64_t gm, int64_t gn);
Module hoist_tile_config(const Module& module, bool hoist = true);

}  // namespace tilec::xsmm
