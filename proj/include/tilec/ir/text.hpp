// SPDX-License-Identifier: Apache-2.0
//
// Textual IR. One op per line:
//
//   %3 = pack(%0) {dims = [0, 1], perm = [0, 1], tiles = [32, 32]} : tensor<8x32x32x32xf32>
//
// Attributes print in key order, so the output is canonical. Ops with a
// region print their block arguments after `^` and the body in braces.
#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <variant>

#include "tilec/ir/ir.hpp"

namespace tilec {

struct PrintOptions {
  // Constants with more elements than this print as `dense<f32 ...>`, which
  // does not parse back. Zero prints everything.
  size_t elide_constants_above = 0;
};

std::string print(const Module& module, const PrintOptions& options = {});
std::string print(const Function& fn, const PrintOptions& options = {});

/// Parse result: a module, or the first syntax or verification error.
class ParseResult {
 public:
  ParseResult(Module module) : value_(std::move(module)) {}
  ParseResult(Diagnostic diag) : value_(std::move(diag)) {}

  bool ok() const { return std::holds_alternative<Module>(value_); }
  explicit operator bool() const { return ok(); }
  Module& module() { return std::get<Module>(value_); }
  const Diagnostic& error() const { return std::get<Diagnostic>(value_); }

 private:
  std::variant<Module, Diagnostic> value_;
};

/// Parses and verifies. Syntax errors carry line and column.
ParseResult parse(std::string_view text);

/// Parses without running the verifier.
ParseResult parse_unverified(std::string_view text);

}  // namespace tilec
