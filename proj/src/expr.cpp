#include "difflik/expr.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <cstdio>
#include <functional>

#include "difflik/errors.hpp"

namespace difflik {

struct Expr::Node {
  Kind kind = Kind::Number;
  Rational q;  // Number value, Product coefficient, Power exponent
  double f = 0.0;
  int var = -1;
  std::string name;
  std::vector<Expr> args;
  std::size_t hash = 0;
  std::size_t size = 1;
  bool state_free = true;
};

namespace {

std::size_t mix(std::size_t h, std::size_t v) {
  return h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
}

std::size_t hash_rational(const Rational& q) {
  const unsigned long p = 2147483629UL;
  std::size_t h = mpz_fdiv_ui(q.get_num_mpz_t(), p);
  if (mpz_sgn(q.get_num_mpz_t()) < 0) h = mix(h, 7);
  return mix(h, mpz_fdiv_ui(q.get_den_mpz_t(), p));
}

}  // namespace

struct ExprBuilder {
  using Node = Expr::Node;
  using Kind = Expr::Kind;

  static const Node& node(const Expr& e) { return *e.node_; }

  static Expr finish(Node n) {
    std::size_t h = static_cast<std::size_t>(n.kind) * 1315423911ULL;
    switch (n.kind) {
      case Kind::Number:
        h = mix(h, hash_rational(n.q));
        break;
      case Kind::Float:
        h = mix(h, std::hash<double>{}(n.f));
        break;
      case Kind::Parameter:
        h = mix(h, std::hash<std::string>{}(n.name));
        break;
      case Kind::Variable:
        h = mix(h, static_cast<std::size_t>(n.var));
        n.state_free = false;
        break;
      case Kind::Power:
      case Kind::Product:
        h = mix(h, hash_rational(n.q));
        [[fallthrough]];
      default:
        break;
    }
    for (const Expr& a : n.args) {
      h = mix(h, a.hash());
      n.size += a.size();
      n.state_free = n.state_free && a.is_state_free();
    }
    n.hash = h;
    return Expr(std::make_shared<const Node>(std::move(n)));
  }

  static Expr number(const Rational& q) {
    Node n;
    n.kind = Kind::Number;
    n.q = q;
    return finish(std::move(n));
  }

  // Splits c*rest for like-term collection.
  static std::pair<Rational, Expr> split_coefficient(const Expr& t) {
    const Node& n = node(t);
    if (n.kind == Kind::Product && n.q != 1) {
      if (n.args.size() == 1) return {n.q, n.args[0]};
      Node m;
      m.kind = Kind::Product;
      m.q = 1;
      m.args = n.args;
      return {n.q, finish(std::move(m))};
    }
    return {Rational(1), t};
  }

  static Expr scale(const Expr& rest, const Rational& c) {
    if (c == 1) return rest;
    const Node& n = node(rest);
    Node m;
    m.kind = Kind::Product;
    m.q = c;
    if (n.kind == Kind::Product) {
      m.args = n.args;
    } else {
      m.args = {rest};
    }
    return finish(std::move(m));
  }

  static Expr sum(std::vector<Expr> terms) {
    Rational constant = 0;
    std::map<Expr, Rational> collected;
    std::function<void(const Expr&)> add = [&](const Expr& t) {
      const Node& n = node(t);
      if (n.kind == Kind::Number) {
        constant += n.q;
      } else if (n.kind == Kind::Sum) {
        for (const Expr& a : n.args) add(a);
      } else {
        auto [c, rest] = split_coefficient(t);
        collected[rest] += c;
      }
    };
    for (const Expr& t : terms) add(t);

    std::vector<Expr> out;
    if (constant != 0) out.push_back(number(constant));
    for (const auto& [rest, c] : collected) {
      if (c != 0) out.push_back(scale(rest, c));
    }
    if (out.empty()) return number(Rational(0));
    if (out.size() == 1) return out.front();
    Node n;
    n.kind = Kind::Sum;
    n.args = std::move(out);
    return finish(std::move(n));
  }

  static Expr product_node(const Rational& coef, std::vector<Expr> plain) {
    if (coef == 0) return number(Rational(0));
    if (plain.empty()) return number(coef);
    if (coef == 1 && plain.size() == 1) return plain.front();
    std::sort(plain.begin(), plain.end());
    Node n;
    n.kind = Kind::Product;
    n.q = coef;
    n.args = std::move(plain);
    return finish(std::move(n));
  }

  static Expr product(const std::vector<Expr>& factors) {
    Rational coef = 1;
    std::map<Expr, Rational> powers;
    std::function<void(const Expr&)> add = [&](const Expr& f) {
      const Node& n = node(f);
      switch (n.kind) {
        case Kind::Number:
          coef *= n.q;
          break;
        case Kind::Product:
          coef *= n.q;
          for (const Expr& a : n.args) add(a);
          break;
        case Kind::Power:
          powers[n.args[0]] += n.q;
          break;
        default:
          powers[f] += 1;
          break;
      }
    };
    for (const Expr& f : factors) add(f);
    if (coef == 0) return number(Rational(0));

    std::vector<Expr> plain;
    std::vector<Expr> sums;
    std::vector<Expr> regroup;
    for (const auto& [base, e] : powers) {
      if (e == 0) continue;
      if (base.kind() == Kind::Sum && is_integer(e) && e >= 1 && e <= 8) {
        for (long k = 0; k < e.get_num().get_si(); ++k) sums.push_back(base);
        continue;
      }
      Expr p = power(base, e);
      const Node& pn = node(p);
      switch (pn.kind) {
        case Kind::Number:
          coef *= pn.q;
          break;
        case Kind::Product:
          regroup.push_back(p);
          break;
        case Kind::Sum:
          sums.push_back(p);
          break;
        default:
          plain.push_back(p);
          break;
      }
    }
    if (coef == 0) return number(Rational(0));
    if (!regroup.empty()) {
      // A merged exponent became integral on a product base; its factors may
      // combine with the others, so collect again.
      std::vector<Expr> all = plain;
      all.insert(all.end(), regroup.begin(), regroup.end());
      all.insert(all.end(), sums.begin(), sums.end());
      all.push_back(number(coef));
      return product(all);
    }
    Expr mono = product_node(coef, std::move(plain));
    if (sums.empty()) return mono;

    std::vector<Expr> terms{mono};
    for (const Expr& s : sums) {
      std::vector<Expr> next;
      next.reserve(terms.size() * node(s).args.size());
      for (const Expr& t : terms) {
        for (const Expr& u : node(s).args) next.push_back(product({t, u}));
      }
      terms = std::move(next);
    }
    return sum(std::move(terms));
  }

  static bool exact_root(const Rational& q, unsigned long k, Rational& out) {
    if (q < 0) return false;
    mpz_class num, den;
    if (!mpz_root(num.get_mpz_t(), q.get_num_mpz_t(), k)) return false;
    if (!mpz_root(den.get_mpz_t(), q.get_den_mpz_t(), k)) return false;
    out = Rational(num, den);
    out.canonicalize();
    return true;
  }

  static Expr power_node(const Expr& base, const Rational& e) {
    Node n;
    n.kind = Kind::Power;
    n.q = e;
    n.args = {base};
    return finish(std::move(n));
  }

  static Expr power(const Expr& base, const Rational& e) {
    if (e == 0) return number(Rational(1));
    if (e == 1) return base;
    const Node& b = node(base);
    const bool integral = is_integer(e);
    switch (b.kind) {
      case Kind::Number: {
        if (b.q == 0) return e > 0 ? base : power_node(base, e);
        if (integral && abs(e) <= 4096) return number(pow_int(b.q, e.get_num().get_si()));
        Rational root;
        if (!integral && e.get_den().fits_ulong_p() && abs(e.get_num()) <= 4096 &&
            exact_root(b.q, e.get_den().get_ui(), root)) {
          return number(pow_int(root, e.get_num().get_si()));
        }
        return power_node(base, e);
      }
      case Kind::Float: {
        const double v = std::pow(b.f, e.get_d());
        if (std::isfinite(v)) return Expr::floating(v);
        return power_node(base, e);
      }
      case Kind::Power:
        if (integral) return power(b.args[0], b.q * e);
        return power_node(base, e);
      case Kind::Product:
        if (integral) {
          std::vector<Expr> fs{number(pow_int(b.q, e.get_num().get_si()))};
          for (const Expr& a : b.args) fs.push_back(power(a, e));
          return product(fs);
        }
        return power_node(base, e);
      case Kind::Exp:
        return exp(product({number(e), b.args[0]}));
      case Kind::Sum:
        if (integral && e >= 2 && e <= 8) {
          return product(std::vector<Expr>(e.get_num().get_ui(), base));
        }
        return power_node(base, e);
      default:
        return power_node(base, e);
    }
  }

  static Expr exp(const Expr& arg) {
    if (arg.is_zero()) return number(Rational(1));
    Node n;
    n.kind = Kind::Exp;
    n.args = {arg};
    return finish(std::move(n));
  }

  static Expr log(const Expr& arg) {
    if (arg.is_one()) return number(Rational(0));
    if (arg.kind() == Kind::Exp) return arg.args()[0];
    Node n;
    n.kind = Kind::Log;
    n.args = {arg};
    return finish(std::move(n));
  }
};

// ---------------------------------------------------------------------------

Expr Expr::make(Node node) { return ExprBuilder::finish(std::move(node)); }

Expr::Expr() {
  static const Expr zero = ExprBuilder::number(Rational(0));
  node_ = zero.node_;
}

Expr Expr::number(const Rational& q) { return ExprBuilder::number(q); }

Expr Expr::floating(double value) {
  Node n;
  n.kind = Kind::Float;
  n.f = value;
  return make(std::move(n));
}

Expr Expr::variable(int index) {
  if (index < 0) throw InvalidArgument("negative state variable index");
  Node n;
  n.kind = Kind::Variable;
  n.var = index;
  return make(std::move(n));
}

Expr Expr::parameter(std::string name) {
  Node n;
  n.kind = Kind::Parameter;
  n.name = std::move(name);
  return make(std::move(n));
}

Expr Expr::sum(std::vector<Expr> terms) { return ExprBuilder::sum(std::move(terms)); }
Expr Expr::product(std::vector<Expr> factors) { return ExprBuilder::product(factors); }
Expr Expr::power(const Expr& base, const Rational& exponent) { return ExprBuilder::power(base, exponent); }
Expr Expr::exp(const Expr& arg) { return ExprBuilder::exp(arg); }
Expr Expr::log(const Expr& arg) { return ExprBuilder::log(arg); }

Expr::Kind Expr::kind() const noexcept { return node_->kind; }
const Rational& Expr::rational() const noexcept { return node_->q; }
double Expr::float_value() const noexcept { return node_->f; }
int Expr::variable_index() const noexcept { return node_->var; }
const std::string& Expr::parameter_name() const noexcept { return node_->name; }
std::span<const Expr> Expr::args() const noexcept { return node_->args; }
bool Expr::is_zero() const noexcept { return node_->kind == Kind::Number && node_->q == 0; }
bool Expr::is_one() const noexcept { return node_->kind == Kind::Number && node_->q == 1; }
bool Expr::is_state_free() const noexcept { return node_->state_free; }
std::size_t Expr::hash() const noexcept { return node_->hash; }
std::size_t Expr::size() const noexcept { return node_->size; }

std::strong_ordering operator<=>(const Expr& a, const Expr& b) {
  if (a.node_ == b.node_) return std::strong_ordering::equal;
  const auto& x = *a.node_;
  const auto& y = *b.node_;
  if (x.kind != y.kind) return x.kind <=> y.kind;
  auto cmp_q = [](const Rational& p, const Rational& q) {
    const int c = cmp(p, q);
    return c < 0 ? std::strong_ordering::less : (c > 0 ? std::strong_ordering::greater : std::strong_ordering::equal);
  };
  auto cmp_args = [](const std::vector<Expr>& p, const std::vector<Expr>& q) {
    const std::size_t n = std::min(p.size(), q.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (auto c = p[i] <=> q[i]; c != 0) return c;
    }
    return p.size() <=> q.size();
  };
  switch (x.kind) {
    case Expr::Kind::Number:
      return cmp_q(x.q, y.q);
    case Expr::Kind::Float:
      if (x.f < y.f) return std::strong_ordering::less;
      if (y.f < x.f) return std::strong_ordering::greater;
      return std::bit_cast<std::uint64_t>(x.f) <=> std::bit_cast<std::uint64_t>(y.f);
    case Expr::Kind::Parameter:
      return x.name <=> y.name;
    case Expr::Kind::Variable:
      return x.var <=> y.var;
    case Expr::Kind::Power:
      if (auto c = x.args[0] <=> y.args[0]; c != 0) return c;
      return cmp_q(x.q, y.q);
    case Expr::Kind::Product:
      if (auto c = cmp_args(x.args, y.args); c != 0) return c;
      return cmp_q(x.q, y.q);
    default:
      return cmp_args(x.args, y.args);
  }
}

bool operator==(const Expr& a, const Expr& b) {
  if (a.node_ == b.node_) return true;
  if (a.hash() != b.hash()) return false;
  return (a <=> b) == 0;
}

Expr operator+(const Expr& a, const Expr& b) { return Expr::sum({a, b}); }
Expr operator-(const Expr& a, const Expr& b) { return Expr::sum({a, -b}); }
Expr operator*(const Expr& a, const Expr& b) { return Expr::product({a, b}); }
Expr operator/(const Expr& a, const Expr& b) { return Expr::product({a, Expr::power(b, Rational(-1))}); }
Expr operator-(const Expr& a) { return Expr::product({Expr::number(-1), a}); }
Expr pow(const Expr& base, const Rational& exponent) { return Expr::power(base, exponent); }

// ---------------------------------------------------------------------------

Expr differentiate(const Expr& e, int index) {
  if (e.is_state_free()) return Expr();
  using K = Expr::Kind;
  switch (e.kind()) {
    case K::Variable:
      return Expr::number(e.variable_index() == index ? 1 : 0);
    case K::Sum: {
      std::vector<Expr> terms;
      for (const Expr& t : e.args()) terms.push_back(differentiate(t, index));
      return Expr::sum(std::move(terms));
    }
    case K::Product: {
      auto fs = e.args();
      std::vector<Expr> terms;
      for (std::size_t k = 0; k < fs.size(); ++k) {
        Expr dk = differentiate(fs[k], index);
        if (dk.is_zero()) continue;
        std::vector<Expr> factors{Expr::number(e.rational()), dk};
        for (std::size_t j = 0; j < fs.size(); ++j) {
          if (j != k) factors.push_back(fs[j]);
        }
        terms.push_back(Expr::product(std::move(factors)));
      }
      return Expr::sum(std::move(terms));
    }
    case K::Power: {
      const Expr& u = e.args()[0];
      Expr du = differentiate(u, index);
      if (du.is_zero()) return Expr();
      return Expr::product({Expr::number(e.rational()), Expr::power(u, e.rational() - 1), du});
    }
    case K::Exp:
      return Expr::product({e, differentiate(e.args()[0], index)});
    case K::Log: {
      const Expr& u = e.args()[0];
      return Expr::product({differentiate(u, index), Expr::power(u, Rational(-1))});
    }
    default:
      return Expr();
  }
}

double eval(const Expr& e, std::span<const double> x, const ParameterValues& theta) {
  using K = Expr::Kind;
  switch (e.kind()) {
    case K::Number:
      return e.rational().get_d();
    case K::Float:
      return e.float_value();
    case K::Parameter: {
      auto it = theta.find(e.parameter_name());
      if (it == theta.end()) throw UnboundParameter(e.parameter_name());
      return it->second;
    }
    case K::Variable:
      if (static_cast<std::size_t>(e.variable_index()) >= x.size()) {
        throw InvalidArgument("state vector too short for " + e.to_string());
      }
      return x[static_cast<std::size_t>(e.variable_index())];
    case K::Sum: {
      double s = 0.0;
      for (const Expr& t : e.args()) s += eval(t, x, theta);
      return s;
    }
    case K::Product: {
      double p = e.rational().get_d();
      for (const Expr& f : e.args()) p *= eval(f, x, theta);
      return p;
    }
    case K::Power: {
      const double base = eval(e.args()[0], x, theta);
      const Rational& p = e.rational();
      if (base == 0.0 && p < 0) throw DomainError("division by zero", e.to_string());
      if (is_integer(p)) return std::pow(base, p.get_d());
      if (base < 0.0) throw DomainError("fractional power of a negative value", e.to_string());
      if (p == make_rational(1, 2)) return std::sqrt(base);
      if (p == make_rational(-1, 2)) return 1.0 / std::sqrt(base);
      return std::pow(base, p.get_d());
    }
    case K::Exp:
      return std::exp(eval(e.args()[0], x, theta));
    case K::Log: {
      const double v = eval(e.args()[0], x, theta);
      if (!(v > 0.0)) throw DomainError("log of a nonpositive value", e.to_string());
      return std::log(v);
    }
  }
  return 0.0;
}

Expr substitute(const Expr& e, int index, const Expr& replacement) {
  if (e.is_state_free()) return e;
  using K = Expr::Kind;
  switch (e.kind()) {
    case K::Variable:
      return e.variable_index() == index ? replacement : e;
    case K::Sum: {
      std::vector<Expr> terms;
      for (const Expr& t : e.args()) terms.push_back(substitute(t, index, replacement));
      return Expr::sum(std::move(terms));
    }
    case K::Product: {
      std::vector<Expr> fs{Expr::number(e.rational())};
      for (const Expr& f : e.args()) fs.push_back(substitute(f, index, replacement));
      return Expr::product(std::move(fs));
    }
    case K::Power:
      return Expr::power(substitute(e.args()[0], index, replacement), e.rational());
    case K::Exp:
      return Expr::exp(substitute(e.args()[0], index, replacement));
    case K::Log:
      return Expr::log(substitute(e.args()[0], index, replacement));
    default:
      return e;
  }
}

namespace {

void collect_parameters(const Expr& e, std::set<std::string>& out) {
  if (e.kind() == Expr::Kind::Parameter) out.insert(e.parameter_name());
  for (const Expr& a : e.args()) collect_parameters(a, out);
}

}  // namespace

std::set<std::string> parameters_of(const Expr& e) {
  std::set<std::string> out;
  collect_parameters(e, out);
  return out;
}

int max_variable_index(const Expr& e) {
  if (e.is_state_free()) return -1;
  if (e.kind() == Expr::Kind::Variable) return e.variable_index();
  int m = -1;
  for (const Expr& a : e.args()) m = std::max(m, max_variable_index(a));
  return m;
}

// ---------------------------------------------------------------------------
// Printing. Output is accepted by parse_expr and re-parses to an equal tree.

namespace {

enum Prec { kSum = 1, kProduct = 2, kPower = 3, kAtom = 4 };

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s = buf;
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string print(const Expr& e, int& prec);

std::string wrap(const Expr& e, int min_prec) {
  int p = kAtom;
  std::string s = print(e, p);
  return p < min_prec ? "(" + s + ")" : s;
}

std::string print(const Expr& e, int& prec) {
  using K = Expr::Kind;
  switch (e.kind()) {
    case K::Number: {
      const Rational& q = e.rational();
      prec = q < 0 ? kSum : (is_integer(q) ? kAtom : kProduct);
      return to_string(q);
    }
    case K::Float:
      prec = e.float_value() < 0 ? kSum : kAtom;
      return format_double(e.float_value());
    case K::Parameter:
      prec = kAtom;
      return e.parameter_name();
    case K::Variable:
      prec = kAtom;
      return "x" + std::to_string(e.variable_index() + 1);
    case K::Sum: {
      prec = kSum;
      std::string out;
      bool first = true;
      for (const Expr& t : e.args()) {
        const bool negative = (t.kind() == K::Number && t.rational() < 0) ||
                              (t.kind() == K::Product && t.rational() < 0);
        if (first) {
          out = wrap(t, kSum);
        } else if (negative) {
          out += " - " + wrap(-t, kProduct);
        } else {
          out += " + " + wrap(t, kSum);
        }
        first = false;
      }
      return out;
    }
    case K::Product: {
      const Rational& c = e.rational();
      std::string body;
      for (const Expr& f : e.args()) {
        if (!body.empty()) body += "*";
        body += wrap(f, kPower);
      }
      if (c == 1) {
        prec = kProduct;
        return body;
      }
      if (c == -1) {
        prec = kSum;
        return "-" + body;
      }
      prec = c < 0 ? kSum : kProduct;
      return to_string(c) + "*" + body;
    }
    case K::Power: {
      prec = kPower;
      const Rational& p = e.rational();
      if (p == make_rational(1, 2)) {
        prec = kAtom;
        int ip = kAtom;
        return "sqrt(" + print(e.args()[0], ip) + ")";
      }
      std::string ex = to_string(p);
      if (!(is_integer(p) && p > 0)) ex = "(" + ex + ")";
      return wrap(e.args()[0], kAtom) + "^" + ex;
    }
    case K::Exp: {
      prec = kAtom;
      int ip = kAtom;
      return "exp(" + print(e.args()[0], ip) + ")";
    }
    case K::Log: {
      prec = kAtom;
      int ip = kAtom;
      return "log(" + print(e.args()[0], ip) + ")";
    }
  }
  return {};
}

}  // namespace

std::string Expr::to_string() const {
  int p = kAtom;
  return print(*this, p);
}

}  // namespace difflik
