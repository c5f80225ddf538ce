#include <cmath>
#include <vector>

#include "difflik/errors.hpp"
#include "difflik/expr.hpp"
#include "difflik/parse.hpp"
#include "difflik/poly.hpp"
#include "difflik/tape.hpp"
#include "doctest.h"

using namespace difflik;

namespace {
double at(const Expr& e, std::vector<double> x, const ParameterValues& p = {}) { return eval(e, x, p); }
}  // namespace

TEST_CASE("canonical sums and products") {
  Expr x = Expr::variable(0);
  Expr y = Expr::variable(1);
  CHECK(x + x == Expr::number(2) * x);
  CHECK(x - x == Expr());
  CHECK(x * x == pow(x, Rational(2)));
  CHECK(x * y == y * x);
  CHECK((x + y) * (x - y) == x * x - y * y);
  CHECK(pow(x + Expr::number(1), Rational(2)) == x * x + Expr::number(2) * x + Expr::number(1));
  CHECK(x / x == Expr::number(1));
  CHECK(Expr::sqrt(x) * Expr::sqrt(x) == x);
  CHECK(Expr::log(Expr::exp(x)) == x);
  CHECK(Expr::exp(Expr()) == Expr::number(1));
  CHECK(Expr::sqrt(Expr::number(make_rational(9, 4))) == Expr::number(make_rational(3, 2)));
}

TEST_CASE("derivatives") {
  Expr x = Expr::variable(0);
  Expr k = Expr::parameter("kappa");
  Expr e = parse_expr("kappa*(alpha - x1) + sqrt(x1)*exp(2*x1)");
  Expr d = differentiate(e, 0);
  const ParameterValues p{{"kappa", 0.5}, {"alpha", 0.06}};
  for (double v : {0.3, 1.7}) {
    const double h = 1e-6;
    const double fd = (at(e, {v + h}, p) - at(e, {v - h}, p)) / (2 * h);
    CHECK(at(d, {v}, p) == doctest::Approx(fd).epsilon(1e-7));
  }
  CHECK(differentiate(k * x, 1) == Expr());
  CHECK(differentiate(pow(x, Rational(3)), 0) == Expr::number(3) * x * x);
}

TEST_CASE("parser round trip and errors") {
  for (const char* s : {"kappa*(alpha - x1)", "sigma*sqrt(x1)", "x1^(-3/2)*log(x2) - 0.25*exp(-x1)",
                        "2**3*x1/theta", "-x1 + 1.5e-2"}) {
    Expr e = parse_expr(s);
    CHECK(parse_expr(e.to_string()) == e);
  }
  CHECK(parse_expr("0.125") == Expr::number(make_rational(1, 8)));
  CHECK_THROWS_AS(parse_expr("x1 +"), ParseError);
  CHECK_THROWS_AS(parse_expr("x1^y"), ParseError);
  CHECK_THROWS_AS(parse_expr("x0"), ParseError);
  try {
    parse_expr("a + (b", 3, 8);
    FAIL("no throw");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(e.column() == 14);
  }
}

TEST_CASE("evaluation errors") {
  CHECK_THROWS_AS(at(parse_expr("log(x1)"), {-1.0}), DomainError);
  CHECK_THROWS_AS(at(parse_expr("sqrt(x1)"), {-1.0}), DomainError);
  CHECK_THROWS_AS(at(parse_expr("1/x1"), {0.0}), DomainError);
  CHECK_THROWS_AS(at(parse_expr("kappa*x1"), {1.0}), UnboundParameter);
  try {
    at(parse_expr("1 + log(x1 - 2)"), {1.0});
  } catch (const DomainError& e) {
    CHECK(e.subexpression() == "log(-2 + x1)");
  }
}

TEST_CASE("tape matches tree evaluation") {
  std::vector<Expr> outs{parse_expr("kappa*(alpha - x1)"), parse_expr("sigma*sqrt(x1)*x2"),
                         parse_expr("exp(kappa)*x1^2 + 1/sqrt(x2)"), parse_expr("kappa")};
  Tape tape(outs);
  const ParameterValues p{{"kappa", 0.3}, {"alpha", 0.1}, {"sigma", 0.2}};
  BoundTape bt = tape.bind(p);
  std::vector<double> out(outs.size());
  std::vector<double> x{0.7, 2.5};
  bt.eval(x, out);
  for (std::size_t i = 0; i < outs.size(); ++i) CHECK(out[i] == doctest::Approx(eval(outs[i], x, p)));
  x[1] = -1.0;
  CHECK_THROWS_AS(bt.eval(x, out), DomainError);
  CHECK_THROWS_AS(tape.bind({{"kappa", 1.0}}), UnboundParameter);
}

TEST_CASE("polynomials") {
  using P = RationalPoly;
  P z1 = P::variable(2, 0);
  P z2 = P::variable(2, 1);
  P p = z1 * z1 * z2 - z1 * make_rational(1, 2) + P::constant(2, Rational(3));
  CHECK(p.to_string() == "z1^2*z2 - 1/2*z1 + 3");
  CHECK(p.diff(0).to_string() == "2*z1*z2 - 1/2");
  CHECK(p.degree() == 3);
  std::vector<double> pt{2.0, -1.0};
  CHECK(p.eval(pt) == doctest::Approx(-4.0 - 1.0 + 3.0));
  // z1 -> z1 + z2, z2 -> z2
  P q = p.compose_linear({{Rational(1), Rational(1)}, {Rational(0), Rational(1)}});
  CHECK(q.eval(std::vector<double>{1.0, -1.0}) == doctest::Approx(p.eval(std::vector<double>{0.0, -1.0})));
  CHECK((p - p).is_zero());
}
