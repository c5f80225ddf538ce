#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <string>

namespace difflik {

/// Arbitrary-precision rational used by every exact (symbolic) computation.
using Rational = mpq_class;

inline Rational make_rational(long num, long den = 1) {
  Rational q(num, den);
  q.canonicalize();
  return q;
}

/// Canonical text form: `p` for integers, `p/q` otherwise.
inline std::string to_string(const Rational& q) {
  if (q.get_den() == 1) return q.get_num().get_str();
  return q.get_num().get_str() + "/" + q.get_den().get_str();
}

inline bool is_integer(const Rational& q) { return q.get_den() == 1; }

inline Rational factorial(unsigned n) {
  mpz_class f;
  mpz_fac_ui(f.get_mpz_t(), n);
  return Rational(f);
}

/// q^n for integer n (n may be negative; q must then be nonzero).
inline Rational pow_int(const Rational& q, long n) {
  Rational base = q;
  if (n < 0) {
    base = 1 / base;
    n = -n;
  }
  mpz_class num, den;
  mpz_pow_ui(num.get_mpz_t(), base.get_num_mpz_t(), static_cast<unsigned long>(n));
  mpz_pow_ui(den.get_mpz_t(), base.get_den_mpz_t(), static_cast<unsigned long>(n));
  Rational r(num, den);
  r.canonicalize();
  return r;
}

}  // namespace difflik
