// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tilec/ir/ir.hpp"

namespace tilec {

/// Floating-point operation count of a tensor-level module: 2*M*N*K per
/// (packed) matmul, one per output element for bias_add and relu. Generic
/// ops count 2 per iteration for mul_acc and 1 otherwise.
double flop_count(const Module& module);
double flop_count(const Function& fn);

/// Ops of `kind` anywhere in the function, including nested regions.
int count_ops(const Function& fn, OpKind kind);

}  // namespace tilec
