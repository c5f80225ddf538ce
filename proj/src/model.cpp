#include "difflik/model.hpp"

#include <fstream>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml++/toml.hpp>

#include "difflik/errors.hpp"
#include "difflik/parse.hpp"

namespace difflik {

void ModelSpec::validate() const {
  if (m == 0) throw InvalidArgument("model dimension must be positive");
  if (mu.size() != m) throw InvalidArgument("drift has " + std::to_string(mu.size()) + " entries, expected " + std::to_string(m));
  if (sigma.size() != m) throw InvalidArgument("dispersion must be " + std::to_string(m) + "x" + std::to_string(m));
  for (const auto& row : sigma) {
    if (row.size() != m) throw InvalidArgument("dispersion must be square");
  }
  if (state_space.size() != m) throw InvalidArgument("state space must have one interval per coordinate");
  auto check = [&](const Expr& e, const std::string& where) {
    if (max_variable_index(e) >= static_cast<int>(m)) {
      throw InvalidArgument(where + " references a state variable beyond x" + std::to_string(m));
    }
    for (const auto& p : parameters_of(e)) {
      if (std::find(params.begin(), params.end(), p) == params.end()) {
        throw InvalidArgument(where + " uses undeclared parameter '" + p + "'");
      }
    }
  };
  for (std::size_t i = 0; i < m; ++i) {
    check(mu[i], "mu_" + std::to_string(i + 1));
    for (std::size_t j = 0; j < m; ++j) check(sigma[i][j], "sigma_" + std::to_string(i + 1) + "_" + std::to_string(j + 1));
  }
  for (const auto& c : constraints) check(c.expr, "constraint '" + c.name + "'");
  for (const auto& [p, _] : bounds) {
    if (std::find(params.begin(), params.end(), p) == params.end()) {
      throw InvalidArgument("bounds given for undeclared parameter '" + p + "'");
    }
  }
  if (lamperti) {
    if (m != 1) throw InvalidArgument("a Lamperti transform is only supported for one-dimensional models");
    check(lamperti->gamma, "lamperti gamma");
    check(lamperti->gamma_inv, "lamperti gamma_inv");
  }
}

std::string ModelSpec::signature() const {
  std::string s = std::to_string(m) + "|";
  for (const auto& p : params) s += p + ",";
  for (const auto& e : mu) s += "|" + e.to_string();
  for (const auto& row : sigma) {
    for (const auto& e : row) s += "|" + e.to_string();
  }
  return s;
}

ParameterValues ModelSpec::bind(std::span<const double> theta) const {
  if (theta.size() != params.size()) {
    throw InvalidArgument("expected " + std::to_string(params.size()) + " parameter values, got " +
                          std::to_string(theta.size()));
  }
  ParameterValues out;
  for (std::size_t i = 0; i < params.size(); ++i) out[params[i]] = theta[i];
  return out;
}

std::vector<double> ModelSpec::unbind(const ParameterValues& theta) const {
  std::vector<double> out;
  for (const auto& p : params) {
    auto it = theta.find(p);
    if (it == theta.end()) throw UnboundParameter(p);
    out.push_back(it->second);
  }
  return out;
}

Interval ModelSpec::bound(const std::string& param) const {
  auto it = bounds.find(param);
  return it == bounds.end() ? Interval{} : it->second;
}

std::optional<std::string> ModelSpec::violation(const ParameterValues& theta) const {
  for (const auto& p : params) {
    auto it = theta.find(p);
    if (it == theta.end()) return "missing parameter " + p;
    const Interval b = bound(p);
    if (!(it->second >= b.lo && it->second <= b.hi) || !std::isfinite(it->second)) return "bound on " + p;
  }
  for (const auto& c : constraints) {
    if (!(eval(c.expr, {}, theta) > 0.0)) return c.name;
  }
  return std::nullopt;
}

bool ModelSpec::in_state_space(std::span<const double> x) const {
  if (x.size() != m) return false;
  for (std::size_t i = 0; i < m; ++i) {
    if (!state_space[i].contains(x[i])) return false;
  }
  return true;
}

// --- TOML -------------------------------------------------------------------

namespace {

[[noreturn]] void fail_at(const toml::node& n, const std::string& what) {
  const auto& src = n.source();
  throw ParseError(what, src.begin.line, src.begin.column);
}

const toml::node& require(const toml::table& t, std::string_view key, const toml::node& where) {
  const toml::node* n = t.get(key);
  if (!n) fail_at(where, "missing key '" + std::string(key) + "'");
  return *n;
}

Expr expr_of(const toml::node& n) {
  if (const auto* s = n.as_string()) {
    const auto& src = n.source();
    // Skip the opening quote.
    return parse_expr(s->get(), src.begin.line, src.begin.column + 1);
  }
  if (const auto* f = n.as_floating_point()) return parse_expr(std::to_string(f->get()));
  if (const auto* i = n.as_integer()) return Expr::number(static_cast<long>(i->get()));
  fail_at(n, "expected an expression string");
}

double number_of(const toml::node& n) {
  if (const auto* f = n.as_floating_point()) return f->get();
  if (const auto* i = n.as_integer()) return static_cast<double>(i->get());
  fail_at(n, "expected a number");
}

Interval interval_of(const toml::node& n) {
  const auto* a = n.as_array();
  if (!a || a->size() != 2) fail_at(n, "expected [lower, upper]");
  Interval iv{number_of(*a->get(0)), number_of(*a->get(1))};
  if (!(iv.lo < iv.hi)) fail_at(n, "empty interval");
  return iv;
}

}  // namespace

ModelSpec parse_model(std::string_view toml_text, const std::string& source) {
  toml::table root;
  try {
    root = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    throw ParseError(std::string(e.description()), e.source().begin.line, e.source().begin.column);
  }
  ModelSpec spec;
  spec.name = root["name"].value_or(std::string("model"));

  const auto& dim = require(root, "dimension", root);
  const auto* dim_i = dim.as_integer();
  if (!dim_i || dim_i->get() < 1 || dim_i->get() > 16) fail_at(dim, "dimension must be an integer in 1..16");
  spec.m = static_cast<std::size_t>(dim_i->get());

  const auto& params = require(root, "parameters", root);
  const auto* pa = params.as_array();
  if (!pa) fail_at(params, "parameters must be an array of names");
  for (const auto& p : *pa) {
    const auto* s = p.as_string();
    if (!s) fail_at(p, "parameter names must be strings");
    spec.params.push_back(s->get());
  }

  const auto* drift = root["drift"].as_table();
  if (!drift) fail_at(root, "missing [drift] table");
  const auto* disp = root["dispersion"].as_table();
  if (!disp) fail_at(root, "missing [dispersion] table");
  spec.mu.assign(spec.m, Expr());
  spec.sigma.assign(spec.m, std::vector<Expr>(spec.m, Expr()));
  for (const auto& [key, node] : *drift) {
    const std::string k(key.str());
    std::size_t i = 0;
    if (std::sscanf(k.c_str(), "mu_%zu", &i) != 1 || i < 1 || i > spec.m) fail_at(node, "unknown drift entry '" + k + "'");
    spec.mu[i - 1] = expr_of(node);
  }
  for (const auto& [key, node] : *disp) {
    const std::string k(key.str());
    std::size_t i = 0;
    std::size_t j = 0;
    if (std::sscanf(k.c_str(), "sigma_%zu_%zu", &i, &j) != 2 || i < 1 || i > spec.m || j < 1 || j > spec.m) {
      fail_at(node, "unknown dispersion entry '" + k + "'");
    }
    spec.sigma[i - 1][j - 1] = expr_of(node);
  }

  spec.state_space.assign(spec.m, Interval{});
  if (const auto* ss = root["state_space"].as_table()) {
    for (const auto& [key, node] : *ss) {
      const std::string k(key.str());
      std::size_t i = 0;
      if (std::sscanf(k.c_str(), "x%zu", &i) != 1 || i < 1 || i > spec.m) fail_at(node, "unknown state variable '" + k + "'");
      spec.state_space[i - 1] = interval_of(node);
    }
  }
  if (const auto* b = root["bounds"].as_table()) {
    for (const auto& [key, node] : *b) spec.bounds[std::string(key.str())] = interval_of(node);
  }
  if (const auto* c = root["constraints"].as_table()) {
    for (const auto& [key, node] : *c) spec.constraints.push_back({std::string(key.str()), expr_of(node)});
  }
  if (const auto* l = root["lamperti"].as_table()) {
    spec.lamperti = LampertiSpec{expr_of(require(*l, "gamma", root)), expr_of(require(*l, "gamma_inv", root))};
  }
  if (const auto* presets = root["presets"].as_table()) {
    for (const auto& [name, node] : *presets) {
      const auto* t = node.as_table();
      if (!t) fail_at(node, "preset must be a table");
      ParameterValues v;
      for (const auto& [p, val] : *t) v[std::string(p.str())] = number_of(val);
      spec.presets[std::string(name.str())] = std::move(v);
    }
  }
  spec.validate();
  return spec;
}

ModelSpec load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open model file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_model(buf.str(), path.string());
  } catch (const ParseError& e) {
    throw ParseError(e.description(), e.line(), e.column(), path.string());
  }
}

}  // namespace difflik
