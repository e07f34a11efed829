// SPDX-License-Identifier: Apache-2.0
#include <cctype>
#include <charconv>
#include <cstring>
#include <unordered_map>

#include "tilec/ir/bf16.hpp"
#include "tilec/ir/text.hpp"
#include "tilec/ir/verifier.hpp"

namespace tilec {
namespace {

struct SyntaxError {
  Diagnostic diag;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Module parse_module() {
    Module module;
    skip_ws();
    bool wrapped = false;
    if (peek_word("module")) {
      consume_word("module");
      expect('{');
      wrapped = true;
    }
    while (true) {
      skip_ws();
      if (at_end()) break;
      if (wrapped && peek() == '}') break;
      module.functions.push_back(parse_function());
    }
    if (wrapped) expect('}');
    skip_ws();
    if (!at_end()) fail("unexpected trailing input");
    return module;
  }

 private:
  [[noreturn]] void fail(std::string message) {
    throw SyntaxError{Diagnostic{std::move(message), fn_ ? fn_->name : "", -1, line_, col_}};
  }

  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }

  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_ws() {
    while (!at_end()) {
      char c = peek();
      if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else if (c == '/' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '/') {
        while (!at_end() && peek() != '\n') advance();
      } else {
        break;
      }
    }
  }

  bool try_consume(char c) {
    skip_ws();
    if (peek() != c) return false;
    advance();
    return true;
  }

  void expect(char c) {
    skip_ws();
    if (peek() != c) {
      fail(std::string("expected '") + c + "'" +
           (at_end() ? std::string(" at end of input") : std::string(", found '") + peek() + "'"));
    }
    advance();
  }

  bool try_consume_str(std::string_view s) {
    skip_ws();
    if (text_.substr(pos_, s.size()) != s) return false;
    for (size_t i = 0; i < s.size(); ++i) advance();
    return true;
  }

  static bool is_ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  }

  std::string_view ident() {
    skip_ws();
    size_t start = pos_;
    if (!std::isalpha(static_cast<unsigned char>(peek())) && peek() != '_') {
      fail("expected identifier");
    }
    while (!at_end() && is_ident_char(peek())) advance();
    return text_.substr(start, pos_ - start);
  }

  bool peek_word(std::string_view word) {
    skip_ws();
    if (text_.substr(pos_, word.size()) != word) return false;
    size_t end = pos_ + word.size();
    return end >= text_.size() || !is_ident_char(text_[end]);
  }

  void consume_word(std::string_view word) {
    if (!peek_word(word)) fail("expected '" + std::string(word) + "'");
    for (size_t i = 0; i < word.size(); ++i) advance();
  }

  int64_t integer() {
    skip_ws();
    size_t start = pos_;
    if (peek() == '-' || peek() == '+') advance();
    while (!at_end() && std::isdigit(static_cast<unsigned char>(peek()))) advance();
    int64_t value = 0;
    auto res = std::from_chars(text_.data() + start, text_.data() + pos_, value);
    if (res.ec != std::errc() || res.ptr != text_.data() + pos_) fail("expected integer");
    return value;
  }

  // --- values -------------------------------------------------------------

  std::string_view value_name() {
    skip_ws();
    if (peek() != '%') fail("expected value name");
    advance();
    size_t start = pos_;
    while (!at_end() && is_ident_char(peek())) advance();
    if (pos_ == start) fail("empty value name");
    return text_.substr(start, pos_ - start);
  }

  ValueId define(std::string_view name, Type type) {
    if (names_.count(std::string(name))) fail("redefinition of %" + std::string(name));
    ValueId id = fn_->new_value(std::move(type));
    names_.emplace(std::string(name), id);
    return id;
  }

  ValueId use() {
    std::string name(value_name());
    auto it = names_.find(name);
    if (it == names_.end()) fail("use of undefined value %" + name);
    return it->second;
  }

  // --- types --------------------------------------------------------------

  Type type() {
    skip_ws();
    int line = line_, col = col_;
    std::string_view word = ident();
    if (word == "index") return Type::index();
    if (word == "handle") return Type::handle();
    if (word != "tensor" && word != "memref") {
      line_ = line;
      col_ = col;
      fail("malformed type '" + std::string(word) + "'");
    }
    bool is_tensor = word == "tensor";
    expect('<');
    std::vector<int64_t> shape;
    std::optional<ElemType> elem;
    while (true) {
      skip_ws();
      if (std::isdigit(static_cast<unsigned char>(peek()))) {
        size_t start = pos_;
        while (!at_end() && std::isdigit(static_cast<unsigned char>(peek()))) advance();
        int64_t dim = 0;
        std::from_chars(text_.data() + start, text_.data() + pos_, dim);
        shape.push_back(dim);
        if (peek() != 'x') fail("malformed type: expected 'x' after dimension");
        advance();
        continue;
      }
      size_t start = pos_;
      while (!at_end() && std::isalnum(static_cast<unsigned char>(peek()))) advance();
      elem = parse_elem_type(text_.substr(start, pos_ - start));
      if (!elem) fail("malformed type: unknown element type '" +
                      std::string(text_.substr(start, pos_ - start)) + "'");
      break;
    }
    if (shape.empty()) fail("malformed type: shaped type needs at least one dimension");
    std::vector<int64_t> strides;
    if (!is_tensor && try_consume(',')) {
      expect('[');
      do {
        strides.push_back(integer());
      } while (try_consume(','));
      expect(']');
      if (strides.size() != shape.size()) fail("malformed type: stride count differs from rank");
    }
    expect('>');
    return is_tensor ? Type::tensor(std::move(shape), *elem)
                     : Type::memref(std::move(shape), *elem, std::move(strides));
  }

  // --- attributes ---------------------------------------------------------

  Attribute number() {
    skip_ws();
    size_t start = pos_;
    if (peek() == '-' || peek() == '+') advance();
    if (peek_word("inf") || peek_word("nan")) {
      advance(), advance(), advance();
    } else {
      while (!at_end() && (std::isdigit(static_cast<unsigned char>(peek())) || peek() == '.' ||
                           peek() == 'e' || peek() == 'E' ||
                           ((peek() == '-' || peek() == '+') &&
                            (text_[pos_ - 1] == 'e' || text_[pos_ - 1] == 'E')))) {
        advance();
      }
    }
    std::string_view tok = text_.substr(start, pos_ - start);
    if (tok.find_first_of(".eEn") == std::string_view::npos) {
      int64_t v = 0;
      auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) fail("malformed integer");
      return v;
    }
    double v = 0;
    std::string tmp(tok);
    char* end = nullptr;
    v = std::strtod(tmp.c_str(), &end);
    if (end != tmp.c_str() + tmp.size()) fail("malformed float '" + tmp + "'");
    return v;
  }

  float float32() {
    Attribute a = number();
    if (auto* i = std::get_if<int64_t>(&a)) return static_cast<float>(*i);
    return static_cast<float>(std::get<double>(a));
  }

  DenseData dense() {
    expect('<');
    DenseData data;
    std::string_view elem_name = ident();
    auto elem = parse_elem_type(elem_name);
    if (!elem) fail("unknown dense element type '" + std::string(elem_name) + "'");
    data.elem = *elem;
    skip_ws();
    if (try_consume_str("...")) fail("elided constant cannot be parsed");
    if (try_consume('[')) {
      if (!try_consume(']')) {
        do {
          data.values.push_back(round_to(data.elem, float32()));
        } while (try_consume(','));
        expect(']');
      }
    } else {
      if (!try_consume_str("0x")) fail("expected '[' or hex payload in dense attribute");
      size_t width = data.elem == ElemType::F32 ? 8 : 4;
      size_t start = pos_;
      while (!at_end() && std::isxdigit(static_cast<unsigned char>(peek()))) advance();
      std::string_view hex = text_.substr(start, pos_ - start);
      if (hex.size() % width != 0) fail("dense hex payload length is not a multiple of the element width");
      data.values.reserve(hex.size() / width);
      for (size_t i = 0; i < hex.size(); i += width) {
        uint32_t bits = 0;
        std::from_chars(hex.data() + i, hex.data() + i + width, bits, 16);
        data.values.push_back(data.elem == ElemType::F32
                                  ? std::bit_cast<float>(bits)
                                  : bf16_to_f32(static_cast<uint16_t>(bits)));
      }
    }
    expect('>');
    return data;
  }

  Attribute attr_value() {
    skip_ws();
    char c = peek();
    if (c == '[') {
      advance();
      skip_ws();
      if (peek() == ']') {
        advance();
        return IntList{};
      }
      if (peek() == '[') {
        IntListList lists;
        do {
          expect('[');
          IntList list;
          if (!try_consume(']')) {
            do {
              list.push_back(integer());
            } while (try_consume(','));
            expect(']');
          }
          lists.push_back(std::move(list));
        } while (try_consume(','));
        expect(']');
        return lists;
      }
      if (std::isalpha(static_cast<unsigned char>(peek()))) {
        IdentList idents;
        do {
          idents.emplace_back(ident());
        } while (try_consume(','));
        expect(']');
        return idents;
      }
      IntList ints;
      do {
        ints.push_back(integer());
      } while (try_consume(','));
      expect(']');
      return ints;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+') return number();
    if (peek_word("inf") || peek_word("nan")) return number();
    if (peek_word("dense")) {
      consume_word("dense");
      return dense();
    }
    std::string_view word = ident();
    if (word == "true") return true;
    if (word == "false") return false;
    return std::string(word);
  }

  AttrDict attrs() {
    AttrDict dict;
    expect('{');
    if (try_consume('}')) return dict;
    bool first = true;
    do {
      skip_ws();
      size_t save_pos = pos_;
      int save_line = line_, save_col = col_;
      std::string key;
      if (std::isalpha(static_cast<unsigned char>(peek())) && !peek_word("dense") &&
          !peek_word("true") && !peek_word("false") && !peek_word("inf") && !peek_word("nan")) {
        key = std::string(ident());
        if (!try_consume('=')) {
          // Bare identifier: the unkeyed `value` attribute.
          pos_ = save_pos;
          line_ = save_line;
          col_ = save_col;
          key.clear();
        }
      }
      if (key.empty()) {
        if (!first) fail("only the first attribute may omit its key");
        key = "value";
      }
      if (dict.count(key)) fail("duplicate attribute '" + key + "'");
      dict.emplace(key, attr_value());
      first = false;
    } while (try_consume(','));
    expect('}');
    return dict;
  }

  // --- ops and functions --------------------------------------------------

  void block_body(Block& block) {
    expect('{');
    while (true) {
      skip_ws();
      if (at_end()) fail("unterminated block");
      if (peek() == '}') break;
      block.ops.push_back(parse_op());
    }
    expect('}');
  }

  Op parse_op() {
    Op op;
    skip_ws();
    std::string result_name;
    if (peek() == '%') {
      result_name = std::string(value_name());
      expect('=');
    }
    skip_ws();
    int line = line_, col = col_;
    std::string_view name = ident();
    auto kind = parse_op_name(name);
    if (!kind) {
      line_ = line;
      col_ = col;
      fail("unknown op '" + std::string(name) + "'");
    }
    op.kind = *kind;
    skip_ws();
    if (peek() == '(') {
      advance();
      if (!try_consume(')')) {
        do {
          op.operands.push_back(use());
        } while (try_consume(','));
        expect(')');
      }
    }
    skip_ws();
    if (peek() == '{') op.attrs = attrs();
    if (!result_name.empty()) {
      expect(':');
      op.result = define(result_name, type());
    }
    while (try_consume('^')) {
      Block region;
      expect('(');
      if (!try_consume(')')) {
        do {
          std::string arg(value_name());
          expect(':');
          region.args.push_back(define(arg, type()));
        } while (try_consume(','));
        expect(')');
      }
      block_body(region);
      op.regions.push_back(std::move(region));
    }
    return op;
  }

  Function parse_function() {
    Function fn;
    fn_ = &fn;
    names_.clear();
    consume_word("func");
    expect('@');
    fn.name = std::string(ident());
    expect('(');
    if (!try_consume(')')) {
      do {
        std::string arg(value_name());
        expect(':');
        fn.body.args.push_back(define(arg, type()));
      } while (try_consume(','));
      expect(')');
    }
    if (!try_consume_str("->")) fail("expected '->'");
    expect('(');
    if (!try_consume(')')) {
      do {
        fn.result_types.push_back(type());
      } while (try_consume(','));
      expect(')');
    }
    block_body(fn.body);
    fn_ = nullptr;
    return fn;
  }

  std::string_view text_;
  size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  Function* fn_ = nullptr;
  std::unordered_map<std::string, ValueId> names_;
};

}  // namespace

ParseResult parse_unverified(std::string_view text) {
  try {
    Module module = Parser(text).parse_module();
    for (Function& fn : module.functions) renumber(fn);
    return module;
  } catch (const SyntaxError& err) {
    return err.diag;
  } catch (const CompileError& err) {
    return err.diagnostic();
  }
}

ParseResult parse(std::string_view text) {
  ParseResult result = parse_unverified(text);
  if (!result) return result;
  if (auto diag = verify(result.module())) return *diag;
  return result;
}

}  // namespace tilec
