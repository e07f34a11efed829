// SPDX-License-Identifier: Apache-2.0
//
// Tensor to buffer conversion. Ops become destination-passing memref ops;
// an op updates its init buffer in place when the init value has no other
// use and the buffer is writable, and otherwise works on a fresh copy.
#pragma once

#include <vector>

#include "tilec/ir/ir.hpp"

namespace tilec {

enum class StorageClass { FuncArg, Alloc, ConstantRO, Result };

std::string_view to_string(StorageClass storage);

struct BufferInfo {
  ValueId value = -1;
  Type type;
  StorageClass storage = StorageClass::Alloc;
};

Function bufferize(const Function& fn);
Module bufferize(const Module& module);

/// Every buffer root of a bufferized function: arguments, constants and
/// allocations (including those nested in loop bodies).
std::vector<BufferInfo> list_buffers(const Function& fn);

}  // namespace tilec
