#pragma once

// Closed-form small-time expansion of a diffusion transition density.
//
// With eps = sqrt(Delta) and y = D(x0)(x - x0)/eps the approximation is
//   p^(J)(Delta, x | x0) = eps^{-m} det D(x0) sum_{k<=J} q_k(y) phi_Sigma(y) eps^k,
// where each q_k is a polynomial assembled from the coefficients C_{i,r}(x0)
// and the conditional expectations of products of iterated Stratonovich
// integrals given W(1).

#include <Eigen/Dense>
#include <array>
#include <memory>
#include <span>
#include <vector>

#include "difflik/expr.hpp"
#include "difflik/ito.hpp"
#include "difflik/memo.hpp"
#include "difflik/model.hpp"
#include "difflik/poly.hpp"
#include "difflik/tape.hpp"

namespace difflik {

/// Largest supported expansion order.
inline constexpr int kMaxOrder = 8;
/// Smallest accepted det Sigma(x0).
inline constexpr double kMinDetSigma = 1e-12;

/// b_i = mu_i - 1/2 sum_{k,j} sigma_kj d(sigma_ij)/dx_k.
std::vector<Expr> drift_correction_b(const ModelSpec& model);

/// A_0 phi = sum_i b_i d(phi)/dx_i; A_j phi = sum_i sigma_ij d(phi)/dx_i for j >= 1.
std::vector<Expr> apply_operator(int j, std::span<const Expr> phi, const ModelSpec& model, std::span<const Expr> b);

/// Memoized symbolic coefficients C_{i,r} = A_{i_n}(... A_{i_2}(sigma_{r,i_1})),
/// with sigma_{.,0} = b.
class CoefficientTable {
 public:
  explicit CoefficientTable(ModelSpec model);
  const ModelSpec& model() const noexcept { return model_; }
  const std::vector<Expr>& b() const noexcept { return b_; }
  /// r is 1-based.
  Expr C(const MultiIndex& i, int r) const;

 private:
  ModelSpec model_;
  std::vector<Expr> b_;
  mutable ConcurrentMemo<std::string, Expr> memo_;
};

/// (l, r, j) with r in {1..m}^l and j a composition of k into l positive parts.
struct SkTriple {
  std::vector<int> r;
  std::vector<int> j;
  std::size_t l() const noexcept { return r.size(); }
  friend bool operator==(const SkTriple&, const SkTriple&) = default;
};

/// Ordered by l, then r, then j.
std::vector<SkTriple> enumerate_Sk(int k, int m);

/// Everything about an expansion of order J that does not depend on the
/// parameters or x0: the compiled coefficient expressions and, for every
/// order k, the exact conditional-expectation polynomials grouped by the
/// multiset of dispersion rows they are differentiated along.
class ExpansionPlan {
 public:
  struct Factor {
    int slot;  // index into the C values
    int r;     // zero-based row
  };
  struct Entry {
    std::vector<Factor> factors;
    std::vector<MultiIndex> indices;
    /// (-1)^l / prod(multiplicity!), the weight of this multiset among ordered tuples.
    Rational coefficient;
    RealPoly p;
    /// One-dimensional models only: coefficient * D^l [P(s y)] for s = +1, -1,
    /// dense in powers of y.
    std::array<std::vector<double>, 2> t;
  };
  struct Group {
    int l;
    std::vector<int> rows;  // sorted, zero-based
    std::vector<Entry> entries;
  };

  /// Cached per (model dynamics, J).
  static std::shared_ptr<const ExpansionPlan> get(const ModelSpec& model, int order);

  ExpansionPlan(const ModelSpec& model, int order);

  const ModelSpec& model() const noexcept { return table_->model(); }
  const CoefficientTable& coefficients() const noexcept { return *table_; }
  int order() const noexcept { return order_; }
  std::size_t dims() const noexcept { return model().m; }
  const std::vector<Group>& groups(int k) const { return groups_.at(static_cast<std::size_t>(k)); }
  std::size_t num_entries() const;

  /// Outputs: sigma (row-major, m*m), b (m), then one value per slot.
  const Tape& tape() const noexcept { return tape_; }
  std::size_t num_slots() const noexcept { return slot_index_.size(); }
  const MultiIndex& slot_index(std::size_t s) const { return slot_index_.at(s); }
  int slot_row(std::size_t s) const { return slot_row_.at(s); }
  /// Largest degree of any dense one-dimensional polynomial at order k.
  std::size_t max_degree(int k) const { return max_degree_.at(static_cast<std::size_t>(k)); }

 private:
  std::shared_ptr<const CoefficientTable> table_;
  int order_;
  std::vector<std::vector<Group>> groups_;
  std::vector<MultiIndex> slot_index_;
  std::vector<int> slot_row_;
  std::vector<std::size_t> max_degree_;
  Tape tape_;
};

/// Numeric quantities at (theta, x0).
class ExpansionContext {
 public:
  ExpansionContext(std::shared_ptr<const ExpansionPlan> plan, const ParameterValues& theta,
                   std::span<const double> x0);
  /// Reuses a tape already bound to theta.
  ExpansionContext(std::shared_ptr<const ExpansionPlan> plan, const BoundTape& bound, const ParameterValues& theta,
                   std::span<const double> x0);

  const ExpansionPlan& plan() const noexcept { return *plan_; }
  std::shared_ptr<const ExpansionPlan> plan_ptr() const noexcept { return plan_; }
  const ParameterValues& theta() const noexcept { return theta_; }
  const std::vector<double>& x0() const noexcept { return x0_; }
  std::size_t dims() const noexcept { return x0_.size(); }

  const Eigen::MatrixXd& sigma() const noexcept { return sigma_; }
  const Eigen::VectorXd& b() const noexcept { return b_; }
  /// Diagonal of D(x0).
  const Eigen::VectorXd& D() const noexcept { return d_; }
  const Eigen::MatrixXd& Sigma() const noexcept { return big_sigma_; }
  const Eigen::MatrixXd& Sigma_inv() const noexcept { return big_sigma_inv_; }
  /// sigma(x0)^{-1} D(x0)^{-1}, mapping y to W(1).
  const Eigen::MatrixXd& M() const noexcept { return m_; }
  double det_D() const noexcept { return det_d_; }
  double det_Sigma() const noexcept { return det_big_sigma_; }
  double slot_value(std::size_t s) const { return c_.at(s); }
  const std::vector<double>& slot_values() const noexcept { return c_; }

  /// Standardized forward point y = D(x0)(x - x0)/sqrt(delta).
  Eigen::VectorXd standardize(double delta, std::span<const double> x) const;
  double log_phi(const Eigen::VectorXd& y) const;

 private:
  void init(const BoundTape& bound);

  std::shared_ptr<const ExpansionPlan> plan_;
  ParameterValues theta_;
  std::vector<double> x0_;
  Eigen::MatrixXd sigma_;
  Eigen::VectorXd b_;
  Eigen::VectorXd d_;
  Eigen::MatrixXd big_sigma_;
  Eigen::MatrixXd big_sigma_inv_;
  Eigen::MatrixXd m_;
  double det_d_ = 1.0;
  double det_big_sigma_ = 1.0;
  double log_norm_ = 0.0;
  std::vector<double> c_;
};

/// C_{i,r}(x0) for any index (not only those in the plan). r is 1-based.
double coefficient_C(const MultiIndex& i, int r, const ExpansionContext& ctx);

/// D_r u = du/dy_r - u (Sigma^{-1} y)_r; r is zero-based.
RealPoly apply_D(const RealPoly& u, int r, const Eigen::MatrixXd& sigma_inv);

/// Q for one (l, r, j) triple, by the defining sum over index tuples.
RealPoly correction_Q(const SkTriple& triple, const ExpansionContext& ctx);

struct CorrectionTerm {
  int k;
  RealPoly q;  // multiplies phi_Sigma(y)
};

/// sum_{k>=1} L_k eps^k where sum_k L_k eps^k = log(1 + sum_{k>=1} a_k eps^k)
/// as formal power series truncated at the length of a (a[0] is ignored).
double log_series(std::span<const double> a, double eps);

class DensityExpansion {
 public:
  DensityExpansion(ExpansionContext ctx, std::vector<CorrectionTerm> terms);

  int order() const noexcept { return static_cast<int>(terms_.size()) - 1; }
  const ExpansionContext& context() const noexcept { return ctx_; }
  const std::vector<CorrectionTerm>& terms() const noexcept { return terms_; }

  /// Omega_k(y) = q_k(y) phi_Sigma(y).
  double omega(int k, const Eigen::VectorXd& y) const;
  /// The truncated density; may be negative far in the tails.
  double evaluate(double delta, std::span<const double> x) const;
  /// -m/2 log(delta) + log det D + log phi + log-series of the corrections.
  double log_density(double delta, std::span<const double> x) const;

 private:
  ExpansionContext ctx_;
  std::vector<CorrectionTerm> terms_;
};

DensityExpansion build_expansion(const ExpansionContext& ctx, int order);
double evaluate_density(const DensityExpansion& e, double delta, std::span<const double> x);

/// Convenience: plan lookup, context and expansion in one call.
DensityExpansion expand(const ModelSpec& model, const ParameterValues& theta, std::span<const double> x0, int order);

/// Dynamics of Z = gamma(X): mu_Z = (gamma' mu + gamma'' sigma^2 / 2)(gamma_inv(z)),
/// sigma_Z = (gamma' sigma)(gamma_inv(z)).
ModelSpec lamperti_model(const ModelSpec& model);

/// Density approximation for X obtained from an expansion for Z = gamma(X):
/// p_X(x) = |gamma'(x)| p_Z(gamma(x) | gamma(x0)).
class LampertiExpansion {
 public:
  LampertiExpansion(const ModelSpec& model, const ParameterValues& theta, double x0, int order);

  const DensityExpansion& z_expansion() const noexcept { return z_; }
  double evaluate(double delta, double x) const;
  double log_density(double delta, double x) const;
  double gamma(double x) const;
  double gamma_prime(double x) const;

 private:
  ParameterValues theta_;
  Expr gamma_;
  Expr gamma_prime_;
  DensityExpansion z_;
};

/// Builds the Z-side expansion around gamma(x0) after checking that gamma is
/// strictly monotone on the state space. Throws InvalidArgument.
LampertiExpansion lamperti_wrap(const ModelSpec& model, const ParameterValues& theta, double x0, int order);

}  // namespace difflik
