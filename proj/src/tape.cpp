#include "difflik/tape.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "difflik/errors.hpp"

namespace difflik {

namespace {

double apply_pow_int(double base, long n) {
  if (n == 2) return base * base;
  if (n == -1) return 1.0 / base;
  return std::pow(base, static_cast<double>(n));
}

}  // namespace

Tape::Tape(std::span<const Expr> outputs) {
  std::unordered_map<Expr, std::int32_t, ExprHash> seen;
  // Iterative post-order to avoid deep recursion on long sums.
  std::vector<std::pair<Expr, bool>> stack;
  auto slot = [&](const Expr& root) {
    stack.emplace_back(root, false);
    while (!stack.empty()) {
      auto [e, expanded] = stack.back();
      stack.pop_back();
      if (seen.count(e)) continue;
      if (!expanded) {
        stack.emplace_back(e, true);
        for (const Expr& a : e.args()) {
          if (!seen.count(a)) stack.emplace_back(a, false);
        }
        continue;
      }
      Instr in{Op::Const, e.is_state_free(), 0, 0, 0.0};
      using K = Expr::Kind;
      switch (e.kind()) {
        case K::Number:
          in.c = e.rational().get_d();
          break;
        case K::Float:
          in.c = e.float_value();
          break;
        case K::Parameter: {
          in.op = Op::Param;
          auto it = std::find(params_.begin(), params_.end(), e.parameter_name());
          if (it == params_.end()) it = params_.insert(params_.end(), e.parameter_name());
          in.first = static_cast<std::int32_t>(it - params_.begin());
          break;
        }
        case K::Variable:
          in.op = Op::Var;
          in.first = e.variable_index();
          max_var_ = std::max(max_var_, e.variable_index());
          break;
        case K::Sum:
        case K::Product:
          in.op = e.kind() == K::Sum ? Op::Add : Op::Mul;
          in.c = e.kind() == K::Sum ? 0.0 : e.rational().get_d();
          in.first = static_cast<std::int32_t>(args_.size());
          in.count = static_cast<std::int32_t>(e.args().size());
          for (const Expr& a : e.args()) args_.push_back(seen.at(a));
          break;
        case K::Power: {
          const Rational& p = e.rational();
          in.first = static_cast<std::int32_t>(args_.size());
          in.count = 1;
          args_.push_back(seen.at(e.args()[0]));
          in.c = p.get_d();
          if (is_integer(p)) {
            in.op = Op::PowInt;
          } else if (p == make_rational(1, 2)) {
            in.op = Op::Sqrt;
          } else if (p == make_rational(-1, 2)) {
            in.op = Op::InvSqrt;
          } else {
            in.op = Op::Pow;
          }
          break;
        }
        case K::Exp:
        case K::Log:
          in.op = e.kind() == K::Exp ? Op::Exp : Op::Log;
          in.first = static_cast<std::int32_t>(args_.size());
          in.count = 1;
          args_.push_back(seen.at(e.args()[0]));
          break;
      }
      seen.emplace(e, static_cast<std::int32_t>(ops_.size()));
      ops_.push_back(in);
      source_.push_back(e);
    }
    return seen.at(root);
  };
  for (const Expr& e : outputs) outputs_.push_back(slot(e));
  for (std::size_t i = 0; i < ops_.size(); ++i) {
    if (!ops_[i].state_free) dynamic_.push_back(static_cast<std::int32_t>(i));
  }
}

namespace {

template <class Instr, class Src>
double run_op(const Instr& in, const std::int32_t* args, const double* v, const double* params,
              std::span<const double> x, const Src& source, std::size_t index) {
  using Op = decltype(in.op);
  switch (in.op) {
    case Op::Const:
      return in.c;
    case Op::Param:
      return params[in.first];
    case Op::Var:
      return x[static_cast<std::size_t>(in.first)];
    case Op::Add: {
      double s = 0.0;
      for (std::int32_t k = 0; k < in.count; ++k) s += v[args[in.first + k]];
      return s;
    }
    case Op::Mul: {
      double p = in.c;
      for (std::int32_t k = 0; k < in.count; ++k) p *= v[args[in.first + k]];
      return p;
    }
    default:
      break;
  }
  const double a = v[args[in.first]];
  switch (in.op) {
    case Op::PowInt:
      if (a == 0.0 && in.c < 0) throw DomainError("division by zero", source[index].to_string());
      return apply_pow_int(a, static_cast<long>(in.c));
    case Op::Sqrt:
      if (a < 0.0) throw DomainError("fractional power of a negative value", source[index].to_string());
      return std::sqrt(a);
    case Op::InvSqrt:
      if (!(a > 0.0)) {
        throw DomainError(a == 0.0 ? "division by zero" : "fractional power of a negative value",
                          source[index].to_string());
      }
      return 1.0 / std::sqrt(a);
    case Op::Pow:
      if (a < 0.0) throw DomainError("fractional power of a negative value", source[index].to_string());
      if (a == 0.0 && in.c < 0) throw DomainError("division by zero", source[index].to_string());
      return std::pow(a, in.c);
    case Op::Exp:
      return std::exp(a);
    case Op::Log:
      if (!(a > 0.0)) throw DomainError("log of a nonpositive value", source[index].to_string());
      return std::log(a);
    default:
      return 0.0;
  }
}

}  // namespace

BoundTape Tape::bind(const ParameterValues& theta) const {
  std::vector<double> params(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto it = theta.find(params_[i]);
    if (it == theta.end()) throw UnboundParameter(params_[i]);
    params[i] = it->second;
  }
  BoundTape bound(this);
  bound.base_.assign(ops_.size(), 0.0);
  for (std::size_t i = 0; i < ops_.size(); ++i) {
    if (ops_[i].state_free) {
      bound.base_[i] = run_op(ops_[i], args_.data(), bound.base_.data(), params.data(), {}, source_, i);
    }
  }
  bound.work_ = bound.base_;
  return bound;
}

void BoundTape::eval(std::span<const double> x, std::span<double> out) const {
  const Tape& t = *tape_;
  if (t.max_var_ >= 0 && x.size() <= static_cast<std::size_t>(t.max_var_)) {
    throw InvalidArgument("state vector too short for compiled expressions");
  }
  double* v = work_.data();
  for (std::int32_t i : t.dynamic_) {
    v[i] = run_op(t.ops_[static_cast<std::size_t>(i)], t.args_.data(), v, nullptr, x, t.source_,
                  static_cast<std::size_t>(i));
  }
  for (std::size_t k = 0; k < t.outputs_.size(); ++k) out[k] = v[t.outputs_[k]];
}

}  // namespace difflik
