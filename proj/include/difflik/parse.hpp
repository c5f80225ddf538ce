#pragma once

#include <cstddef>
#include <string_view>

#include "difflik/expr.hpp"

namespace difflik {

/// Parses an infix expression. Identifiers `x1`, `x2`, ... are state
/// variables; every other identifier is a parameter. Supports + - * /, unary
/// minus, `^` or `**` with a constant rational exponent, and exp/log/sqrt.
/// Decimal literals are read as exact rationals. Error positions are reported
/// relative to `line` and `column`, which locate the first character.
Expr parse_expr(std::string_view text, std::size_t line = 1, std::size_t column = 1);

}  // namespace difflik
