#pragma once

// Log-density expansion, approximate log-likelihood of a discretely observed
// path, and the simplex search that maximizes it.

#include <Eigen/Dense>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "difflik/errors.hpp"
#include "difflik/expansion.hpp"
#include "difflik/model.hpp"

namespace difflik {

/// States x(0), x(delta), ..., x(n delta).
struct ObservationSeries {
  double delta = 0.0;
  std::vector<std::vector<double>> x;

  std::size_t n() const noexcept { return x.empty() ? 0 : x.size() - 1; }
  std::size_t dims() const noexcept { return x.empty() ? 0 : x.front().size(); }
  /// Throws InvalidArgument unless n >= 1, delta > 0, shapes agree and every
  /// state lies in the model's state space.
  void validate(const ModelSpec& model) const;
};

/// CSV with header `t,x1,...,xm`; t strictly increasing with a step uniform to
/// 1e-9 relative. Throws ParseError with line and column.
ObservationSeries read_series_csv(std::istream& in, const std::string& source = "data");
ObservationSeries read_series_csv(const std::filesystem::path& path);
void write_series_csv(std::ostream& out, const ObservationSeries& series, double t0 = 0.0);

/// A DomainError raised while evaluating one transition of a series.
class TransitionError : public DomainError {
 public:
  TransitionError(std::size_t index, const std::string& what)
      : DomainError("transition " + std::to_string(index) + ": " + what), index_(index) {}
  /// One-based: transition i goes from x((i-1) delta) to x(i delta).
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// -m/2 log(delta) + log det D + log phi_Sigma(y) + sum_k Lambda_k(y) eps^k.
double log_density(const DensityExpansion& e, double delta, std::span<const double> x);

/// Order-J log transition density for a model, usable across parameter values.
/// With `lamperti` the expansion is built for Z = gamma(X) and mapped back:
/// log|gamma'(x)| + l_Z(gamma(x) | gamma(x0)). Thread-safe.
class ApproxLikelihood {
 public:
  ApproxLikelihood(const ModelSpec& model, int order, bool lamperti = false);

  const ModelSpec& model() const noexcept { return model_; }
  int order() const noexcept { return order_; }
  bool lamperti() const noexcept { return lamperti_; }

  double log_density(const ParameterValues& theta, double delta, std::span<const double> x0,
                     std::span<const double> x) const;
  /// Sum over transitions (pairwise, in index order). Throws TransitionError.
  double loglik(const ParameterValues& theta, const ObservationSeries& series) const;
  /// Per-transition log-densities.
  std::vector<double> terms(const ParameterValues& theta, const ObservationSeries& series) const;

 private:
  struct Scratch;
  Scratch scratch(const ParameterValues& theta) const;
  double transition(Scratch& s, double delta, std::span<const double> x0, std::span<const double> x) const;
  double transition_1d(Scratch& s, double delta, double x0, double x) const;

  ModelSpec model_;
  int order_;
  bool lamperti_;
  std::shared_ptr<const ExpansionPlan> plan_;  // for the expanded dynamics
  Tape transform_;                              // gamma, gamma' (Lamperti only)
};

double approx_loglik(const ModelSpec& model, const ParameterValues& theta, const ObservationSeries& series, int order,
                     bool lamperti = false);

enum class FitStatus { Converged, NotConverged, DegenerateSimplex };
std::string to_string(FitStatus s);

struct FitOptions {
  double xtol = 1e-8;   // simplex size in the unconstrained coordinates
  double ftol = 1e-10;  // spread of objective values over the simplex
  int max_iterations = 10000;
  int restarts = 0;
  bool standard_errors = true;
  double hessian_step = 1e-4;  // relative
  /// Per-parameter box; parameters not listed use the model bounds.
  std::map<std::string, Interval> box;
};

struct EstimateReport {
  std::vector<std::string> names;
  std::vector<double> theta;
  double loglik = 0.0;
  int iterations = 0;
  int evaluations = 0;
  int restarts = 0;
  FitStatus status = FitStatus::NotConverged;
  bool converged() const noexcept { return status == FitStatus::Converged; }
  std::optional<std::vector<double>> standard_errors;
  std::vector<std::string> warnings;

  ParameterValues values() const;
};

/// Raised when no vertex of the starting simplex has a finite objective.
class DegenerateSimplex : public Error {
 public:
  using Error::Error;
};

/// Maps a box to the real line: logistic for two finite ends, log for one,
/// identity for none.
class BoxTransform {
 public:
  BoxTransform(const ModelSpec& model, const std::map<std::string, Interval>& box);
  std::vector<double> to_free(std::span<const double> theta) const;
  std::vector<double> from_free(std::span<const double> u) const;
  const Interval& interval(std::size_t i) const { return box_.at(i); }
  std::size_t size() const noexcept { return box_.size(); }

 private:
  std::vector<Interval> box_;
};

/// Maximizes `objective` over the model parameters with Nelder-Mead in the
/// unconstrained coordinates. Non-finite values count as -infinity, and so
/// do parameters violating a model constraint. Deterministic.
using Objective = std::function<double(const ParameterValues&)>;
EstimateReport maximize(const ModelSpec& model, const Objective& objective, std::span<const double> start,
                        const FitOptions& options = {});

EstimateReport fit(const ModelSpec& model, const ObservationSeries& series, int order, std::span<const double> start,
                   const FitOptions& options = {}, bool lamperti = false);

/// Inverse of the negative finite-difference Hessian of `objective` at theta,
/// or nothing if that Hessian is not negative definite.
std::optional<Eigen::MatrixXd> observed_covariance(const ModelSpec& model, const Objective& objective,
                                                   std::span<const double> theta, double step = 1e-4);

/// Per-observation Fisher information of the exact transition law under the
/// stationary distribution. MROU parameters (kappa, alpha, sigma); DMROU
/// parameters (kappa11, kappa21, kappa22, alpha1, alpha2) with unit
/// dispersion. Throws InvalidArgument when the process is not stationary.
Eigen::MatrixXd fisher_information_mrou(const ParameterValues& theta, double delta);
Eigen::MatrixXd fisher_information_dmrou(const ParameterValues& theta, double delta);

/// sqrt(diag(i^{-1}) / n).
std::vector<double> asymptotic_stddev(const Eigen::MatrixXd& fisher, std::size_t n);

}  // namespace difflik
