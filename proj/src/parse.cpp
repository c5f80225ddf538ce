#include "difflik/parse.hpp"

#include <cctype>
#include <string>

#include "difflik/errors.hpp"

namespace difflik {
namespace {

class Parser {
 public:
  Parser(std::string_view text, std::size_t line, std::size_t column)
      : text_(text), line0_(line), column0_(column) {}

  Expr run() {
    Expr e = parse_sum();
    skip_space();
    if (pos_ < text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { fail_at(what, pos_); }

  [[noreturn]] void fail_at(const std::string& what, std::size_t at) const {
    std::size_t line = line0_;
    std::size_t column = column0_;
    for (std::size_t i = 0; i < at && i < text_.size(); ++i) {
      if (text_[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ParseError(what, line, column);
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(std::string_view token) {
    skip_space();
    if (text_.substr(pos_, token.size()) == token) {
      pos_ += token.size();
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(std::string_view(&c, 1))) fail(std::string("expected '") + c + "'");
  }

  Expr parse_sum() {
    Expr acc = parse_product();
    for (;;) {
      if (accept("+")) {
        acc = acc + parse_product();
      } else if (accept("-")) {
        acc = acc - parse_product();
      } else {
        return acc;
      }
    }
  }

  Expr parse_product() {
    Expr acc = parse_unary();
    for (;;) {
      skip_space();
      if (text_.substr(pos_, 2) == "**") return acc;
      if (accept("*")) {
        acc = acc * parse_unary();
      } else if (accept("/")) {
        acc = acc / parse_unary();
      } else {
        return acc;
      }
    }
  }

  Expr parse_unary() {
    if (accept("-")) return -parse_unary();
    if (accept("+")) return parse_unary();
    return parse_power();
  }

  Expr parse_power() {
    Expr base = parse_atom();
    if (accept("^") || accept("**")) {
      skip_space();
      const std::size_t at = pos_;
      Expr ex = parse_unary();
      if (!ex.is_number()) fail_at("exponent must be a constant rational", at);
      return pow(base, ex.rational());
    }
    return base;
  }

  Rational parse_decimal() {
    const std::size_t start = pos_;
    std::string digits;
    long scale = 0;
    bool dot = false;
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (std::isdigit(static_cast<unsigned char>(c))) {
        digits += c;
        if (dot) ++scale;
      } else if (c == '.' && !dot) {
        dot = true;
      } else {
        break;
      }
      ++pos_;
    }
    if (digits.empty()) fail_at("malformed number", start);
    long exponent = 0;
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      bool negative = false;
      if (p < text_.size() && (text_[p] == '+' || text_[p] == '-')) negative = text_[p++] == '-';
      const std::size_t digits_start = p;
      while (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) {
        exponent = exponent * 10 + (text_[p] - '0');
        if (exponent > 4096) fail_at("exponent out of range", pos_);
        ++p;
      }
      if (p == digits_start) fail_at("malformed exponent", pos_);
      if (negative) exponent = -exponent;
      pos_ = p;
    }
    Rational q{mpz_class(digits, 10)};
    q *= pow_int(Rational(10), exponent - scale);
    return q;
  }

  Expr parse_atom() {
    skip_space();
    if (pos_ >= text_.size()) fail("unexpected end of expression");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = parse_sum();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return Expr::number(parse_decimal());
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
        ++pos_;
      }
      const std::string name(text_.substr(start, pos_ - start));
      if (name == "exp" || name == "log" || name == "sqrt") {
        expect('(');
        Expr arg = parse_sum();
        expect(')');
        if (name == "exp") return Expr::exp(arg);
        if (name == "log") return Expr::log(arg);
        return Expr::sqrt(arg);
      }
      if (name.size() > 1 && name[0] == 'x' &&
          name.find_first_not_of("0123456789", 1) == std::string::npos) {
        if (name[1] == '0') fail_at("state variables are numbered from x1", start);
        if (name.size() > 6) fail_at("state variable index too large", start);
        return Expr::variable(std::stoi(name.substr(1)) - 1);
      }
      return Expr::parameter(name);
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  std::string_view text_;
  std::size_t line0_;
  std::size_t column0_;
  std::size_t pos_ = 0;
};

}  // namespace

Expr parse_expr(std::string_view text, std::size_t line, std::size_t column) {
  return Parser(text, line, column).run();
}

}  // namespace difflik
