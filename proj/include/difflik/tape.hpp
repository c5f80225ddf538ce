#pragma once

// Compiled evaluation of a batch of expressions that share subterms.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "difflik/expr.hpp"

namespace difflik {

class BoundTape;

/// Straight-line program computing several expressions at once. Identical
/// subtrees are computed once.
class Tape {
 public:
  Tape() = default;
  explicit Tape(std::span<const Expr> outputs);

  std::size_t num_outputs() const noexcept { return outputs_.size(); }
  std::size_t num_ops() const noexcept { return ops_.size(); }
  const std::vector<std::string>& parameters() const noexcept { return params_; }

  /// Evaluates every state-free op for `theta`. Throws UnboundParameter or
  /// DomainError.
  BoundTape bind(const ParameterValues& theta) const;

 private:
  enum class Op : std::uint8_t { Const, Param, Var, Add, Mul, PowInt, Sqrt, InvSqrt, Pow, Exp, Log };
  struct Instr {
    Op op;
    bool state_free;
    std::int32_t first;  // into args_, or parameter / variable index
    std::int32_t count;
    double c;  // constant, coefficient or exponent
  };

  std::int32_t emit(const Expr& e);

  std::vector<Instr> ops_;
  std::vector<std::int32_t> args_;
  std::vector<Expr> source_;  // for diagnostics
  std::vector<std::int32_t> outputs_;
  std::vector<std::string> params_;
  std::vector<std::int32_t> dynamic_;  // ops evaluated per state
  int max_var_ = -1;

  friend class BoundTape;
};

class BoundTape {
 public:
  /// Writes every output at state `x` into `out` (size num_outputs()).
  void eval(std::span<const double> x, std::span<double> out) const;
  std::size_t num_outputs() const noexcept { return tape_->outputs_.size(); }

 private:
  explicit BoundTape(const Tape* tape) : tape_(tape) {}
  const Tape* tape_;
  std::vector<double> base_;
  mutable std::vector<double> work_;
  friend class Tape;
};

}  // namespace difflik
