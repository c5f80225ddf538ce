#pragma once

// The three reference models with known transition laws: exact densities,
// exact samplers, and the density-error and estimation experiments built on
// them.

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "difflik/likelihood.hpp"
#include "difflik/model.hpp"
#include "difflik/rng.hpp"

namespace difflik {

enum class BenchmarkKind { MROU, SQR, DMROU };

/// "mrou", "sqr" or "dmrou" (case-insensitive). Throws InvalidArgument.
BenchmarkKind parse_kind(std::string_view name);
std::string to_string(BenchmarkKind kind);

/// The model file text for a benchmark kind (the same text ships in models/).
std::string_view benchmark_model_toml(BenchmarkKind kind);
ModelSpec benchmark_model(BenchmarkKind kind);
/// Named preset from the model file; "benchmark" holds the reference values.
ParameterValues benchmark_preset(BenchmarkKind kind, const std::string& name = "benchmark");

/// Throws InvalidArgument for parameters outside the model's validity
/// region (nonpositive rates or scales, Feller violation for SQR).
void check_benchmark_parameters(BenchmarkKind kind, const ParameterValues& theta);

struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};
GaussianMoments mrou_moments(const ParameterValues& theta, double delta, double x0);
/// drift K(alpha - x) with K = [[kappa11, 0], [kappa21, kappa22]], unit dispersion.
GaussianMoments dmrou_moments(const ParameterValues& theta, double delta, std::span<const double> x0);
Eigen::Matrix2d dmrou_drift_matrix(const ParameterValues& theta);
/// Solves K S + S K^T = I.
Eigen::Matrix2d dmrou_stationary_cov(const ParameterValues& theta);

/// log I_nu(z) - z for z > 0, nu > -1; stays finite for large z.
double log_bessel_i_scaled(double nu, double z);

double exact_log_density(BenchmarkKind kind, const ParameterValues& theta, double delta, std::span<const double> x,
                         std::span<const double> x0);
double exact_density(BenchmarkKind kind, const ParameterValues& theta, double delta, std::span<const double> x,
                     std::span<const double> x0);
std::vector<double> exact_sample(BenchmarkKind kind, const ParameterValues& theta, double delta,
                                 std::span<const double> x0, Philox& rng);

/// Conditional mean and standard deviations of X(delta) given x0 (SQR uses
/// its exact first two moments).
GaussianMoments conditional_moments(BenchmarkKind kind, const ParameterValues& theta, double delta,
                                    std::span<const double> x0);

/// Exact-law path of n steps from x0; draws come from Philox(seed, stream).
ObservationSeries simulate(BenchmarkKind kind, const ParameterValues& theta, double delta, std::size_t n,
                           std::span<const double> x0, std::uint64_t seed, std::uint64_t stream = 0);
/// Euler scheme with `substeps` steps per observation, for any model.
/// Throws DomainError if the path leaves the state space.
ObservationSeries euler_simulate(const ModelSpec& model, const ParameterValues& theta, double delta, std::size_t n,
                                 std::size_t substeps, std::span<const double> x0, std::uint64_t seed,
                                 std::uint64_t stream = 0);

double exact_loglik(BenchmarkKind kind, const ParameterValues& theta, const ObservationSeries& series);
/// Starting point from least squares on the discretized drift (AR(1) or
/// VAR(1)), clipped into the parameter box.
std::vector<double> regression_start(BenchmarkKind kind, const ObservationSeries& series);
/// Maximizer of the exact likelihood, started at regression_start.
EstimateReport exact_mle(BenchmarkKind kind, const ObservationSeries& series, const FitOptions& options = {});

/// The long-run mean, used as the default starting state.
std::vector<double> default_x0(BenchmarkKind kind, const ParameterValues& theta);

struct ErrorGrid {
  BenchmarkKind kind;
  double delta;
  int order;
  bool lamperti;
  std::vector<double> x0;
  std::vector<std::vector<double>> points;
  std::vector<double> approx;
  std::vector<double> exact;
  double max_abs_error = 0.0;
  /// Same for log-densities.
  double max_abs_log_error = 0.0;
};

struct ErrorExperimentConfig {
  BenchmarkKind kind = BenchmarkKind::MROU;
  ParameterValues theta;
  std::vector<double> deltas{1.0 / 12, 1.0 / 52, 1.0 / 252};
  std::vector<int> orders{1, 2, 3, 4, 5, 6};
  /// SQR only: also run the Lamperti variant.
  bool lamperti = true;
  std::optional<std::vector<double>> x0;
  std::size_t points = 201;
  double width = 4.0;  // conditional standard deviations on each side
};

/// Grid of `points` per dimension over mean +- width * sd around E[X(delta) | x0].
std::vector<std::vector<double>> error_grid_points(BenchmarkKind kind, const ParameterValues& theta, double delta,
                                                   std::span<const double> x0, std::size_t points, double width);
std::vector<ErrorGrid> error_experiment(const ErrorExperimentConfig& config);
/// One row per grid: kind, delta, order, variant, max_abs_error, max_abs_log_error.
void write_error_summary_csv(std::ostream& out, const std::vector<ErrorGrid>& grids);
/// One row per grid point: delta, order, variant, x1..xm, approx, exact, error.
void write_error_points_csv(std::ostream& out, const std::vector<ErrorGrid>& grids);

struct MleExperimentConfig {
  BenchmarkKind kind = BenchmarkKind::MROU;
  ParameterValues theta;
  double delta = 1.0 / 52;
  std::size_t n = 1000;
  std::size_t replications = 500;
  std::vector<int> orders{1, 2, 3, 4, 5, 6};
  std::uint64_t seed = 20240101;
  std::optional<std::vector<double>> x0;
  FitOptions fit;
};

struct MleReplication {
  std::size_t index = 0;
  std::vector<double> exact;                // exact MLE
  std::vector<std::vector<double>> approx;  // one per order
  bool exact_ok = false;
  std::vector<bool> approx_ok;
};

struct MleExperimentResult {
  MleExperimentConfig config;
  std::vector<std::string> names;
  std::vector<MleReplication> replications;
  /// Over replications with every fit converged.
  std::size_t used = 0;
  std::size_t failures = 0;
  std::vector<double> exact_mean, exact_sd;  // of theta_hat - theta_true
  std::vector<std::vector<double>> approx_mean, approx_sd;  // of theta_hat^(J) - theta_hat, per order
  std::optional<std::vector<double>> asymptotic_sd;
};

MleExperimentResult mle_experiment(const MleExperimentConfig& config);
/// Rows: the exact-MLE block and one block per order; columns: Mean and
/// Stddev for each parameter, then the asymptotic standard deviations.
void write_mle_table_csv(std::ostream& out, const MleExperimentResult& result);
/// Every replication's estimates.
void write_mle_estimates_csv(std::ostream& out, const MleExperimentResult& result);

}  // namespace difflik
