// SPDX-License-Identifier: Apache-2.0
#include <charconv>
#include <cstring>

#include "tilec/ir/bf16.hpp"
#include "tilec/ir/text.hpp"

namespace tilec {
namespace {

constexpr size_t kInlineDenseLimit = 16;

void append_float(std::string& out, double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  std::string_view text(buf, static_cast<size_t>(res.ptr - buf));
  out += text;
  if (text.find_first_of(".eEn") == std::string_view::npos) out += ".0";
}

void append_float32(std::string& out, float value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  std::string_view text(buf, static_cast<size_t>(res.ptr - buf));
  out += text;
  if (text.find_first_of(".eEn") == std::string_view::npos) out += ".0";
}

void append_ints(std::string& out, const IntList& list) {
  out += '[';
  for (size_t i = 0; i < list.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(list[i]);
  }
  out += ']';
}

void append_dense(std::string& out, const DenseData& dense, const PrintOptions& options) {
  out += "dense<";
  out += to_string(dense.elem);
  out += ' ';
  if (options.elide_constants_above && dense.values.size() > options.elide_constants_above) {
    out += "...>";
    return;
  }
  if (dense.values.size() <= kInlineDenseLimit) {
    out += '[';
    for (size_t i = 0; i < dense.values.size(); ++i) {
      if (i) out += ", ";
      append_float32(out, dense.values[i]);
    }
    out += "]>";
    return;
  }
  static constexpr char kHex[] = "0123456789ABCDEF";
  out += "0x";
  size_t width = dense.elem == ElemType::F32 ? 8 : 4;
  out.reserve(out.size() + dense.values.size() * width + 2);
  for (float v : dense.values) {
    uint32_t bits = dense.elem == ElemType::F32 ? std::bit_cast<uint32_t>(v) : f32_to_bf16(v);
    for (size_t d = width; d-- > 0;) out += kHex[(bits >> (4 * d)) & 0xF];
  }
  out += '>';
}

void append_attr(std::string& out, const Attribute& attr, const PrintOptions& options) {
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, int64_t>) {
          out += std::to_string(v);
        } else if constexpr (std::is_same_v<T, double>) {
          append_float(out, v);
        } else if constexpr (std::is_same_v<T, bool>) {
          out += v ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::string>) {
          out += v;
        } else if constexpr (std::is_same_v<T, IntList>) {
          append_ints(out, v);
        } else if constexpr (std::is_same_v<T, IdentList>) {
          out += '[';
          for (size_t i = 0; i < v.size(); ++i) {
            if (i) out += ", ";
            out += v[i];
          }
          out += ']';
        } else if constexpr (std::is_same_v<T, IntListList>) {
          out += '[';
          for (size_t i = 0; i < v.size(); ++i) {
            if (i) out += ", ";
            append_ints(out, v[i]);
          }
          out += ']';
        } else {
          append_dense(out, v, options);
        }
      },
      attr);
}

class Printer {
 public:
  Printer(const Function& fn, const PrintOptions& options, std::string& out)
      : fn_(fn), options_(options), out_(out) {}

  void print_function() {
    out_ += "  func @";
    out_ += fn_.name;
    out_ += '(';
    for (size_t i = 0; i < fn_.args().size(); ++i) {
      if (i) out_ += ", ";
      value_decl(fn_.args()[i]);
    }
    out_ += ") -> (";
    for (size_t i = 0; i < fn_.result_types.size(); ++i) {
      if (i) out_ += ", ";
      out_ += to_string(fn_.result_types[i]);
    }
    out_ += ") {\n";
    block(fn_.body, 2);
    out_ += "  }\n";
  }

 private:
  void value(ValueId id) {
    out_ += '%';
    out_ += std::to_string(id);
  }

  void value_decl(ValueId id) {
    value(id);
    out_ += ": ";
    out_ += to_string(fn_.type(id));
  }

  void block(const Block& b, int depth) {
    for (const Op& op : b.ops) {
      out_.append(static_cast<size_t>(depth) * 2, ' ');
      this->op(op, depth);
    }
  }

  void op(const Op& op, int depth) {
    if (op.result) {
      value(*op.result);
      out_ += " = ";
    }
    out_ += op_name(op.kind);
    if (!op.operands.empty()) {
      out_ += '(';
      for (size_t i = 0; i < op.operands.size(); ++i) {
        if (i) out_ += ", ";
        value(op.operands[i]);
      }
      out_ += ')';
    }
    if (!op.attrs.empty()) {
      out_ += " {";
      bool first = true;
      // `value` prints first and unkeyed.
      if (auto it = op.attrs.find("value"); it != op.attrs.end()) {
        append_attr(out_, it->second, options_);
        first = false;
      }
      for (const auto& [key, attr] : op.attrs) {
        if (key == "value") continue;
        if (!first) out_ += ", ";
        first = false;
        out_ += key;
        out_ += " = ";
        append_attr(out_, attr, options_);
      }
      out_ += '}';
    }
    if (op.result) {
      out_ += " : ";
      out_ += to_string(fn_.type(*op.result));
    }
    for (const Block& region : op.regions) {
      out_ += " ^(";
      for (size_t i = 0; i < region.args.size(); ++i) {
        if (i) out_ += ", ";
        value_decl(region.args[i]);
      }
      out_ += ") {\n";
      block(region, depth + 1);
      out_.append(static_cast<size_t>(depth) * 2, ' ');
      out_ += '}';
    }
    out_ += '\n';
  }

  const Function& fn_;
  const PrintOptions& options_;
  std::string& out_;
};

}  // namespace

std::string print(const Function& fn, const PrintOptions& options) {
  std::string out;
  Printer(fn, options, out).print_function();
  return out;
}

std::string print(const Module& module, const PrintOptions& options) {
  std::string out = "module {\n";
  for (const Function& fn : module.functions) {
    Printer(fn, options, out).print_function();
  }
  out += "}\n";
  return out;
}

}  // namespace tilec
