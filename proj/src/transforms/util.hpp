// SPDX-License-Identifier: Apache-2.0
// Internal helpers shared by the rewrite passes.
#pragma once

#include <vector>

#include "tilec/ir/ir.hpp"

namespace tilec::detail {

// Defining op of each value among the top-level ops of `fn` (nullptr for
// arguments and values defined inside regions).
inline std::vector<const Op*> top_level_defs(const Function& fn) {
  std::vector<const Op*> defs(fn.types.size(), nullptr);
  for (const Op& op : fn.body.ops) {
    if (op.result) defs[static_cast<size_t>(*op.result)] = &op;
  }
  return defs;
}

inline bool is_zero_splat(const Op* op) {
  return op && op->kind == OpKind::Splat && op->float_attr("value") == 0.0;
}

template <class F>
Module map_functions(const Module& module, F&& fn) {
  Module out;
  for (const Function& f : module.functions) out.functions.push_back(fn(f));
  return out;
}

}  // namespace tilec::detail
