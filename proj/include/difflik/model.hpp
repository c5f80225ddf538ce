#pragma once

#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "difflik/expr.hpp"

namespace difflik {

struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool contains(double v) const { return v > lo && v < hi; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// One-dimensional variance-stabilizing transform z = gamma(x) and its inverse.
/// Both are written in x1 (gamma_inv reads its argument as x1 too).
struct LampertiSpec {
  Expr gamma;
  Expr gamma_inv;
};

/// Named inequality `expr > 0` that valid parameters must satisfy.
struct Constraint {
  std::string name;
  Expr expr;
};

/// dX = mu(X; theta) dt + sigma(X; theta) dW with square sigma.
struct ModelSpec {
  std::string name;
  std::size_t m = 1;
  std::vector<std::string> params;
  std::vector<Expr> mu;
  std::vector<std::vector<Expr>> sigma;
  std::vector<Interval> state_space;
  std::map<std::string, Interval> bounds;
  std::vector<Constraint> constraints;
  std::optional<LampertiSpec> lamperti;
  std::map<std::string, ParameterValues> presets;

  /// Checks shapes and that expressions use only declared names.
  /// Throws InvalidArgument.
  void validate() const;

  /// Text that identifies the dynamics (used as a cache key).
  std::string signature() const;

  ParameterValues bind(std::span<const double> theta) const;
  std::vector<double> unbind(const ParameterValues& theta) const;
  Interval bound(const std::string& param) const;
  /// Name of the first violated constraint or bound, if any.
  std::optional<std::string> violation(const ParameterValues& theta) const;
  bool in_state_space(std::span<const double> x) const;
};

/// Parses a model file. Errors carry the line and column of the offending value.
ModelSpec parse_model(std::string_view toml_text, const std::string& source = "model");
ModelSpec load_model(const std::filesystem::path& path);

}  // namespace difflik
