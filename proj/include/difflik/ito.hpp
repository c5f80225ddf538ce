#pragma once

// Algebra of iterated stochastic integrals on [0, 1].
//
// A multi-index (i1, ..., in) over {0, 1, ..., m} denotes the iterated
// integral with i1 the outermost integrator:
//   I_(i1,...,in)(t) = int_0^t I_(i2,...,in)(s) dW_{i1}(s),   dW_0(s) = ds,
// and I_() = 1. The same convention applies to Stratonovich integrals J.

#include <compare>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "difflik/poly.hpp"
#include "difflik/rational.hpp"

namespace difflik {

class MultiIndex {
 public:
  MultiIndex() = default;
  MultiIndex(std::initializer_list<int> entries);
  explicit MultiIndex(std::span<const int> entries);

  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  int operator[](std::size_t k) const noexcept { return static_cast<unsigned char>(data_[k]); }
  int front() const noexcept { return (*this)[0]; }
  std::vector<int> entries() const;

  /// Zeros count twice, every other entry once.
  int norm() const noexcept;
  /// Drops the first (outermost) entry.
  MultiIndex minus() const;
  MultiIndex prepend(int k) const;
  /// Number of entries equal to k.
  int count(int k) const noexcept;
  int max_entry() const noexcept;

  /// Compact byte key; also defines the ordering.
  const std::string& key() const noexcept { return data_; }
  std::string to_string() const;

  friend bool operator==(const MultiIndex&, const MultiIndex&) = default;
  friend auto operator<=>(const MultiIndex& a, const MultiIndex& b) { return a.data_ <=> b.data_; }

 private:
  std::string data_;
};

enum class Flavor { Ito, Stratonovich };

/// Finite linear combination of iterated integrals with rational coefficients.
class IntegralCombination {
 public:
  using Terms = std::map<MultiIndex, Rational>;

  explicit IntegralCombination(Flavor flavor = Flavor::Ito) : flavor_(flavor) {}

  Flavor flavor() const noexcept { return flavor_; }
  const Terms& terms() const noexcept { return terms_; }
  bool is_zero() const noexcept { return terms_.empty(); }
  Rational coefficient(const MultiIndex& i) const;

  void add(const MultiIndex& i, const Rational& c);
  IntegralCombination& operator+=(const IntegralCombination& o);
  IntegralCombination& operator*=(const Rational& s);
  /// Applies the outer integrator k to every term.
  IntegralCombination prepend(int k) const;

  std::string to_string() const;
  friend bool operator==(const IntegralCombination& a, const IntegralCombination& b) {
    return a.flavor_ == b.flavor_ && a.terms_ == b.terms_;
  }

 private:
  Flavor flavor_;
  Terms terms_;
};

IntegralCombination strat_to_ito(const MultiIndex& i);

/// I_a(t) * I_b(t) as a linear combination of single iterated Ito integrals.
IntegralCombination ito_product(const MultiIndex& a, const MultiIndex& b);
IntegralCombination ito_product(const IntegralCombination& a, const IntegralCombination& b);
IntegralCombination ito_product_n(std::span<const MultiIndex> factors);

/// E[sum c_i I_i(1)]; only all-zero indices (0,...,0) of length n contribute 1/n!.
Rational unconditional_expectation(const IntegralCombination& c);

/// E[prod_r I_{a_r}(1)] for Ito indices, by the moment recursion obtained from
/// Ito's formula. Memoized on the multiset of indices.
Rational product_expectation(std::vector<MultiIndex> factors);

/// E[I_i(1) | W(1) = z] for an Ito index via the Brownian-bridge substitution
/// dW_k -> dB_k - B_k(1) dt + z_k dt. Result is a polynomial in z_1..z_m.
RationalPoly bridge_conditional_expectation(const MultiIndex& i, std::size_t m);

/// E[prod_w J_{i_w}(1) | W(1) = z] for Stratonovich indices. Computed through
/// the Hermite expansion of the conditional expectation with coefficients
/// from product_expectation. Memoized on the sorted tuple.
RationalPoly conditional_product_expectation(std::span<const MultiIndex> strat, std::size_t m);

/// Same quantity computed termwise with bridge_conditional_expectation after
/// converting to Ito form and multiplying out. Slow; kept as a reference.
RationalPoly conditional_product_expectation_by_bridge(std::span<const MultiIndex> strat, std::size_t m);

/// Probabilists' Hermite polynomial He_n as a one-variable polynomial.
const RationalPoly& hermite(unsigned n);

/// All multi-indices over {0..m} with the given norm, in lexicographic order.
std::vector<MultiIndex> indices_with_norm(int norm, int m);

}  // namespace difflik
