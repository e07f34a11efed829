// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>

#include "tilec/ir/ir.hpp"

namespace tilec {

/// Checks SSA dominance, per-op shape and attribute rules, and the return
/// contract. Returns the first error found, located by op index.
std::optional<Diagnostic> verify(const Module& module);
std::optional<Diagnostic> verify(const Function& fn);

/// Throws CompileError with the first diagnostic, prefixed by `stage`.
void verify_or_throw(const Module& module, std::string_view stage);

}  // namespace tilec
