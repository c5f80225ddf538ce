#pragma once

// Immutable symbolic scalar expressions in the state variables x1..xm and
// named model parameters.
//
// Every Expr is kept in a local canonical form by its smart constructors:
// sums are flattened with like terms collected, products are flattened with
// like bases merged into powers, numeric subterms are folded exactly, and
// products over sums (or sums raised to small positive integer powers) are
// multiplied out. There is no global rewriting; two mathematically equal
// expressions may still differ structurally.

#include <compare>
#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "difflik/rational.hpp"

namespace difflik {

using ParameterValues = std::map<std::string, double, std::less<>>;

class Expr {
 public:
  enum class Kind : std::uint8_t { Number, Float, Parameter, Variable, Power, Product, Sum, Exp, Log };

  /// The constant 0.
  Expr();

  static Expr number(const Rational& q);
  static Expr number(long n) { return number(Rational(n)); }
  static Expr floating(double value);
  /// State variable x_{index+1}; `index` is zero-based.
  static Expr variable(int index);
  static Expr parameter(std::string name);

  static Expr sum(std::vector<Expr> terms);
  static Expr product(std::vector<Expr> factors);
  static Expr power(const Expr& base, const Rational& exponent);
  static Expr exp(const Expr& arg);
  static Expr log(const Expr& arg);
  static Expr sqrt(const Expr& arg) { return power(arg, make_rational(1, 2)); }

  Kind kind() const noexcept;
  /// Number value, Product coefficient or Power exponent.
  const Rational& rational() const noexcept;
  double float_value() const noexcept;
  int variable_index() const noexcept;
  const std::string& parameter_name() const noexcept;
  /// Sum terms, Product factors, Power base, Exp/Log argument.
  std::span<const Expr> args() const noexcept;

  bool is_number() const noexcept { return kind() == Kind::Number; }
  bool is_zero() const noexcept;
  bool is_one() const noexcept;
  /// True when no state variable occurs in the tree.
  bool is_state_free() const noexcept;
  std::size_t hash() const noexcept;
  /// Number of nodes (shared subtrees counted once per occurrence).
  std::size_t size() const noexcept;

  std::string to_string() const;

  friend bool operator==(const Expr& a, const Expr& b);
  friend std::strong_ordering operator<=>(const Expr& a, const Expr& b);

 private:
  struct Node;
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  static Expr make(Node node);

  std::shared_ptr<const Node> node_;

  friend struct ExprBuilder;
};

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr pow(const Expr& base, const Rational& exponent);

/// Partial derivative with respect to the zero-based state variable `index`.
Expr differentiate(const Expr& e, int index);

/// Evaluates at state `x` with named parameters.
/// Throws UnboundParameter or DomainError.
double eval(const Expr& e, std::span<const double> x, const ParameterValues& theta);

/// Replaces state variable `index` by `replacement` and re-canonicalizes.
Expr substitute(const Expr& e, int index, const Expr& replacement);

std::set<std::string> parameters_of(const Expr& e);
/// Largest zero-based state variable index referenced, or -1.
int max_variable_index(const Expr& e);

struct ExprHash {
  std::size_t operator()(const Expr& e) const noexcept { return e.hash(); }
};

}  // namespace difflik
