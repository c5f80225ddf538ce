#pragma once

// Sparse multivariate polynomials over an exact (Rational) or floating
// coefficient ring.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "difflik/errors.hpp"
#include "difflik/rational.hpp"

namespace difflik {

using Exponents = std::vector<std::uint16_t>;

/// Graded lexicographic order: total degree first, then lexicographic.
struct GradedLex {
  bool operator()(const Exponents& a, const Exponents& b) const {
    const auto da = std::accumulate(a.begin(), a.end(), 0u);
    const auto db = std::accumulate(b.begin(), b.end(), 0u);
    if (da != db) return da < db;
    return a < b;
  }
};

namespace detail {
inline bool is_zero_coeff(const Rational& c) { return c == 0; }
inline bool is_zero_coeff(double c) { return c == 0.0; }
inline double to_double(const Rational& c) { return c.get_d(); }
inline double to_double(double c) { return c; }
inline std::string coeff_string(const Rational& c) { return to_string(c); }
inline std::string coeff_string(double c) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", c);
  return buf;
}
inline bool is_negative(const Rational& c) { return c < 0; }
inline bool is_negative(double c) { return c < 0; }
}  // namespace detail

template <class C>
class Poly {
 public:
  using Terms = std::map<Exponents, C, GradedLex>;

  explicit Poly(std::size_t dims = 1) : dims_(dims) {}

  static Poly constant(std::size_t dims, const C& c) {
    Poly p(dims);
    p.add_term(Exponents(dims, 0), c);
    return p;
  }
  /// The monomial z_{index+1}.
  static Poly variable(std::size_t dims, std::size_t index) {
    Exponents e(dims, 0);
    e.at(index) = 1;
    Poly p(dims);
    p.add_term(e, C(1));
    return p;
  }

  std::size_t dims() const noexcept { return dims_; }
  const Terms& terms() const noexcept { return terms_; }
  bool is_zero() const noexcept { return terms_.empty(); }

  unsigned degree() const {
    unsigned d = 0;
    for (const auto& [e, c] : terms_) d = std::max(d, std::accumulate(e.begin(), e.end(), 0u));
    return d;
  }

  C coefficient(const Exponents& e) const {
    auto it = terms_.find(e);
    return it == terms_.end() ? C(0) : it->second;
  }

  void add_term(const Exponents& e, const C& c) {
    if (e.size() != dims_) throw InvalidArgument("monomial dimension mismatch");
    if (detail::is_zero_coeff(c)) return;
    auto [it, inserted] = terms_.try_emplace(e, c);
    if (!inserted) {
      it->second += c;
      if (detail::is_zero_coeff(it->second)) terms_.erase(it);
    }
  }

  Poly& operator+=(const Poly& o) {
    check(o);
    for (const auto& [e, c] : o.terms_) add_term(e, c);
    return *this;
  }
  Poly& operator-=(const Poly& o) {
    check(o);
    for (const auto& [e, c] : o.terms_) add_term(e, C(-c));
    return *this;
  }
  Poly& operator*=(const C& s) {
    if (detail::is_zero_coeff(s)) {
      terms_.clear();
      return *this;
    }
    for (auto& [e, c] : terms_) c *= s;
    return *this;
  }
  friend Poly operator+(Poly a, const Poly& b) { return a += b; }
  friend Poly operator-(Poly a, const Poly& b) { return a -= b; }
  friend Poly operator*(Poly a, const C& s) { return a *= s; }
  friend Poly operator*(const C& s, Poly a) { return a *= s; }
  friend Poly operator*(const Poly& a, const Poly& b) {
    a.check(b);
    Poly r(a.dims_);
    Exponents e(a.dims_);
    for (const auto& [ea, ca] : a.terms_) {
      for (const auto& [eb, cb] : b.terms_) {
        for (std::size_t i = 0; i < a.dims_; ++i) e[i] = static_cast<std::uint16_t>(ea[i] + eb[i]);
        r.add_term(e, C(ca * cb));
      }
    }
    return r;
  }
  friend bool operator==(const Poly& a, const Poly& b) { return a.dims_ == b.dims_ && a.terms_ == b.terms_; }

  /// Partial derivative in z_{index+1}.
  Poly diff(std::size_t index) const {
    Poly r(dims_);
    for (const auto& [e, c] : terms_) {
      if (e[index] == 0) continue;
      Exponents f = e;
      --f[index];
      r.add_term(f, C(c * C(static_cast<long>(e[index]))));
    }
    return r;
  }

  double eval(std::span<const double> z) const {
    if (z.size() < dims_) throw InvalidArgument("point dimension mismatch");
    double s = 0.0;
    for (const auto& [e, c] : terms_) {
      double t = detail::to_double(c);
      for (std::size_t i = 0; i < dims_; ++i) {
        for (std::uint16_t k = 0; k < e[i]; ++k) t *= z[i];
      }
      s += t;
    }
    return s;
  }

  /// Substitutes z_i = sum_j a[i][j] w_j; the result has a[0].size() variables.
  Poly compose_linear(const std::vector<std::vector<C>>& a) const {
    if (a.size() != dims_) throw InvalidArgument("substitution dimension mismatch");
    const std::size_t out_dims = dims_ == 0 ? 0 : a[0].size();
    std::vector<Poly> lin;
    for (std::size_t i = 0; i < dims_; ++i) {
      Poly l(out_dims);
      for (std::size_t j = 0; j < out_dims; ++j) l += variable(out_dims, j) * a[i][j];
      lin.push_back(std::move(l));
    }
    // Cache integer powers of each linear form.
    std::vector<std::vector<Poly>> powers(dims_);
    Poly r(out_dims);
    for (const auto& [e, c] : terms_) {
      Poly t = constant(out_dims, c);
      for (std::size_t i = 0; i < dims_; ++i) {
        auto& pw = powers[i];
        if (pw.empty()) pw.push_back(constant(out_dims, C(1)));
        while (pw.size() <= e[i]) pw.push_back(pw.back() * lin[i]);
        if (e[i] > 0) t = t * pw[e[i]];
      }
      r += t;
    }
    return r;
  }

  /// Canonical text, highest graded-lex monomial first, e.g.
  /// `z1^2*z2 - 1/2*z1 + 3`.
  std::string to_string(const std::string& var = "z") const {
    if (terms_.empty()) return "0";
    std::string out;
    for (auto it = terms_.rbegin(); it != terms_.rend(); ++it) {
      const auto& [e, c] = *it;
      const bool neg = detail::is_negative(c);
      const C mag = neg ? C(-c) : c;
      std::string mono;
      for (std::size_t i = 0; i < dims_; ++i) {
        if (e[i] == 0) continue;
        if (!mono.empty()) mono += "*";
        mono += var + std::to_string(i + 1);
        if (e[i] > 1) mono += "^" + std::to_string(e[i]);
      }
      std::string coeff = detail::coeff_string(mag);
      std::string term;
      if (mono.empty()) {
        term = coeff;
      } else if (coeff == "1") {
        term = mono;
      } else {
        term = coeff + "*" + mono;
      }
      if (out.empty()) {
        out = neg ? "-" + term : term;
      } else {
        out += neg ? " - " + term : " + " + term;
      }
    }
    return out;
  }

  template <class D>
  Poly<D> convert() const {
    Poly<D> r(dims_);
    for (const auto& [e, c] : terms_) r.add_term(e, static_cast<D>(detail::to_double(c)));
    return r;
  }

 private:
  void check(const Poly& o) const {
    if (o.dims_ != dims_) throw InvalidArgument("polynomial dimension mismatch");
  }

  std::size_t dims_;
  Terms terms_;
};

using RationalPoly = Poly<Rational>;
using RealPoly = Poly<double>;

}  // namespace difflik
