#include "difflik/benchmarks.hpp"

#include <boost/math/special_functions/bessel.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

#include "difflik/embedded_models.hpp"
#include "difflik/parallel.hpp"

namespace difflik {

BenchmarkKind parse_kind(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "mrou") return BenchmarkKind::MROU;
  if (s == "sqr") return BenchmarkKind::SQR;
  if (s == "dmrou") return BenchmarkKind::DMROU;
  throw InvalidArgument("unknown benchmark kind '" + std::string(name) + "' (expected mrou, sqr or dmrou)");
}

std::string to_string(BenchmarkKind kind) {
  switch (kind) {
    case BenchmarkKind::MROU: return "mrou";
    case BenchmarkKind::SQR: return "sqr";
    case BenchmarkKind::DMROU: return "dmrou";
  }
  return "unknown";
}

std::string_view benchmark_model_toml(BenchmarkKind kind) {
  switch (kind) {
    case BenchmarkKind::MROU: return embedded::k_mrou_toml;
    case BenchmarkKind::SQR: return embedded::k_sqr_toml;
    case BenchmarkKind::DMROU: return embedded::k_dmrou_toml;
  }
  throw InvalidArgument("unknown benchmark kind");
}

ModelSpec benchmark_model(BenchmarkKind kind) {
  static const ModelSpec models[] = {parse_model(embedded::k_mrou_toml, "mrou.toml"),
                                     parse_model(embedded::k_sqr_toml, "sqr.toml"),
                                     parse_model(embedded::k_dmrou_toml, "dmrou.toml")};
  return models[static_cast<int>(kind)];
}

ParameterValues benchmark_preset(BenchmarkKind kind, const std::string& name) {
  const ModelSpec m = benchmark_model(kind);
  auto it = m.presets.find(name);
  if (it == m.presets.end()) throw InvalidArgument("model '" + m.name + "' has no preset '" + name + "'");
  return it->second;
}

void check_benchmark_parameters(BenchmarkKind kind, const ParameterValues& theta) {
  const ModelSpec m = benchmark_model(kind);
  for (const auto& p : m.params) {
    auto it = theta.find(p);
    if (it == theta.end()) throw InvalidArgument("missing parameter '" + p + "'");
    if (!std::isfinite(it->second)) throw InvalidArgument("parameter '" + p + "' is not finite");
  }
  if (auto v = m.violation(theta)) throw InvalidArgument("invalid parameters for " + m.name + ": " + *v);
}

// --- Gaussian kinds ---------------------------------------------------------------

GaussianMoments mrou_moments(const ParameterValues& theta, double delta, double x0) {
  const double k = theta.at("kappa"), a = theta.at("alpha"), s = theta.at("sigma");
  GaussianMoments g{Eigen::VectorXd(1), Eigen::MatrixXd(1, 1)};
  g.mean(0) = a + (x0 - a) * std::exp(-k * delta);
  // sigma^2 (1 - e^{-2 k delta}) / (2k), continuous at k = 0
  const double v = k * delta > 1e-12 ? -std::expm1(-2.0 * k * delta) / (2.0 * k) : delta * (1.0 - k * delta);
  g.cov(0, 0) = s * s * v;
  return g;
}

Eigen::Matrix2d dmrou_drift_matrix(const ParameterValues& theta) {
  Eigen::Matrix2d K;
  K << theta.at("kappa11"), 0.0, theta.at("kappa21"), theta.at("kappa22");
  return K;
}

GaussianMoments dmrou_moments(const ParameterValues& theta, double delta, std::span<const double> x0) {
  if (x0.size() != 2) throw InvalidArgument("DMROU state is two-dimensional");
  const Eigen::Matrix2d K = dmrou_drift_matrix(theta);
  const Eigen::Vector2d alpha(theta.at("alpha1"), theta.at("alpha2"));
  // Van Loan: exp([[K, I], [0, -K^T]] delta) = [[., G], [0, F^T]] with
  // F = exp(-K delta) and the transition covariance F G.
  Eigen::Matrix4d C = Eigen::Matrix4d::Zero();
  C.topLeftCorner<2, 2>() = K * delta;
  C.topRightCorner<2, 2>() = Eigen::Matrix2d::Identity() * delta;
  C.bottomRightCorner<2, 2>() = -K.transpose() * delta;
  const Eigen::Matrix4d E = C.exp();
  const Eigen::Matrix2d F = E.bottomRightCorner<2, 2>().transpose();
  const Eigen::Matrix2d V = F * E.topRightCorner<2, 2>();
  GaussianMoments g;
  g.mean = alpha + F * (Eigen::Vector2d(x0[0], x0[1]) - alpha);
  g.cov = 0.5 * (V + V.transpose());
  return g;
}

Eigen::Matrix2d dmrou_stationary_cov(const ParameterValues& theta) {
  const Eigen::Matrix2d K = dmrou_drift_matrix(theta);
  if (!(K(0, 0) > 0.0) || !(K(1, 1) > 0.0)) throw InvalidArgument("DMROU is stationary only for kappa11, kappa22 > 0");
  // (I (x) K + K (x) I) vec S = vec I
  Eigen::Matrix4d A = Eigen::Matrix4d::Zero();
  const Eigen::Matrix2d I = Eigen::Matrix2d::Identity();
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      A.block<2, 2>(2 * i, 2 * j) = I(i, j) * K + K(i, j) * I;
    }
  }
  const Eigen::Vector4d s = A.fullPivLu().solve(Eigen::Vector4d(1, 0, 0, 1));
  Eigen::Matrix2d S;
  S << s(0), s(2), s(1), s(3);
  return 0.5 * (S + S.transpose());
}

// --- SQR -------------------------------------------------------------------------------

namespace {

double log_bessel_hankel(double nu, double z) {
  const double mu = 4.0 * nu * nu;
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < 60; ++k) {
    const double odd = 2.0 * k - 1.0;
    const double next = -term * (mu - odd * odd) / (k * 8.0 * z);
    if (std::abs(next) >= std::abs(term)) break;
    term = next;
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return std::log(sum) - 0.5 * std::log(2.0 * std::numbers::pi * z);
}

// Debye uniform expansion of I_nu(nu t) for large nu, scaled by e^{-z}.
double log_bessel_debye(double nu, double z) {
  const double t = z / nu;
  const double r = std::sqrt(1.0 + t * t);
  const double p = 1.0 / r;
  const double eta = r + std::log(t / (1.0 + r));
  const double p2 = p * p;
  const double u1 = p * (3.0 - 5.0 * p2) / 24.0;
  const double u2 = p2 * (81.0 - 462.0 * p2 + 385.0 * p2 * p2) / 1152.0;
  const double u3 = p * p2 * (30375.0 - 369603.0 * p2 + 765765.0 * p2 * p2 - 425425.0 * p2 * p2 * p2) / 414720.0;
  const double u4 = p2 * p2 *
                    (4465125.0 - 94121676.0 * p2 + 349922430.0 * p2 * p2 - 446185740.0 * p2 * p2 * p2 +
                     185910725.0 * p2 * p2 * p2 * p2) /
                    39813120.0;
  const double series = 1.0 + u1 / nu + u2 / (nu * nu) + u3 / (nu * nu * nu) + u4 / (nu * nu * nu * nu);
  return nu * eta - z - 0.5 * std::log(2.0 * std::numbers::pi * nu) - 0.5 * std::log(r) + std::log(series);
}

}  // namespace

double log_bessel_i_scaled(double nu, double z) {
  if (!(z > 0.0) || !(nu > -1.0)) throw InvalidArgument("log_bessel_i_scaled needs z > 0 and nu > -1");
  if (z < 700.0) {
    const double v = boost::math::cyl_bessel_i(nu, z);
    if (v > 0.0 && std::isfinite(v)) return std::log(v) - z;
  }
  if (4.0 * nu * nu < z) return log_bessel_hankel(nu, z);
  return log_bessel_debye(nu, z);
}

namespace {

struct SqrParams {
  double k, a, s;
};

SqrParams sqr_params(const ParameterValues& theta) {
  check_benchmark_parameters(BenchmarkKind::SQR, theta);
  return {theta.at("kappa"), theta.at("alpha"), theta.at("sigma")};
}

double sqr_log_density(const ParameterValues& theta, double delta, double x, double x0) {
  const auto [k, a, s] = sqr_params(theta);
  if (!(x > 0.0) || !(x0 > 0.0)) throw DomainError("SQR states must be positive");
  const double em = std::exp(-k * delta);
  const double c = 2.0 * k / (s * s * (-std::expm1(-k * delta)));
  const double u = c * x0 * em;
  const double v = c * x;
  const double q = 2.0 * k * a / (s * s) - 1.0;
  const double z = 2.0 * std::sqrt(u * v);
  const double gap = std::sqrt(u) - std::sqrt(v);
  return std::log(c) - gap * gap + 0.5 * q * std::log(v / u) + log_bessel_i_scaled(q, z);
}

double gaussian_log_density(const GaussianMoments& g, std::span<const double> x) {
  const auto m = g.mean.size();
  Eigen::VectorXd d(m);
  for (Eigen::Index i = 0; i < m; ++i) d(i) = x[static_cast<std::size_t>(i)] - g.mean(i);
  const Eigen::LLT<Eigen::MatrixXd> llt(g.cov);
  if (llt.info() != Eigen::Success) throw DomainError("transition covariance is not positive definite");
  const Eigen::VectorXd w = llt.matrixL().solve(d);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * static_cast<double>(m) * std::log(2.0 * std::numbers::pi) - 0.5 * logdet - 0.5 * w.squaredNorm();
}

void check_dims(BenchmarkKind kind, std::span<const double> x) {
  const std::size_t m = kind == BenchmarkKind::DMROU ? 2 : 1;
  if (x.size() != m) throw InvalidArgument(to_string(kind) + " state has " + std::to_string(m) + " coordinates");
}

}  // namespace

GaussianMoments conditional_moments(BenchmarkKind kind, const ParameterValues& theta, double delta,
                                    std::span<const double> x0) {
  check_dims(kind, x0);
  switch (kind) {
    case BenchmarkKind::MROU: return mrou_moments(theta, delta, x0[0]);
    case BenchmarkKind::DMROU: return dmrou_moments(theta, delta, x0);
    case BenchmarkKind::SQR: {
      const auto [k, a, s] = sqr_params(theta);
      const double e1 = std::exp(-k * delta);
      GaussianMoments g{Eigen::VectorXd(1), Eigen::MatrixXd(1, 1)};
      g.mean(0) = a + (x0[0] - a) * e1;
      g.cov(0, 0) = x0[0] * s * s / k * (e1 - e1 * e1) + a * s * s / (2.0 * k) * (1.0 - e1) * (1.0 - e1);
      return g;
    }
  }
  throw InvalidArgument("unknown benchmark kind");
}

double exact_log_density(BenchmarkKind kind, const ParameterValues& theta, double delta, std::span<const double> x,
                         std::span<const double> x0) {
  if (!(delta > 0.0)) throw InvalidArgument("time step must be positive");
  check_dims(kind, x);
  check_dims(kind, x0);
  if (kind == BenchmarkKind::SQR) return sqr_log_density(theta, delta, x[0], x0[0]);
  check_benchmark_parameters(kind, theta);
  return gaussian_log_density(conditional_moments(kind, theta, delta, x0), x);
}

double exact_density(BenchmarkKind kind, const ParameterValues& theta, double delta, std::span<const double> x,
                     std::span<const double> x0) {
  if (kind == BenchmarkKind::SQR && !(x[0] > 0.0)) return 0.0;
  return std::exp(exact_log_density(kind, theta, delta, x, x0));
}

std::vector<double> exact_sample(BenchmarkKind kind, const ParameterValues& theta, double delta,
                                 std::span<const double> x0, Philox& rng) {
  check_dims(kind, x0);
  if (kind == BenchmarkKind::SQR) {
    const auto [k, a, s] = sqr_params(theta);
    // X = c chi'^2_d(lambda), drawn as c * 2 Gamma(d/2 + N), N ~ Poisson(lambda/2)
    const double c = s * s * (-std::expm1(-k * delta)) / (4.0 * k);
    const double d = 4.0 * k * a / (s * s);
    const double lambda = x0[0] * std::exp(-k * delta) / c;
    const auto n = rng.poisson(0.5 * lambda);
    return {2.0 * c * rng.gamma(0.5 * d + static_cast<double>(n))};
  }
  check_benchmark_parameters(kind, theta);
  const GaussianMoments g = conditional_moments(kind, theta, delta, x0);
  const Eigen::MatrixXd L = g.cov.llt().matrixL();
  Eigen::VectorXd z(g.mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  const Eigen::VectorXd x = g.mean + L * z;
  return {x.data(), x.data() + x.size()};
}

// --- paths ---------------------------------------------------------------------------

ObservationSeries simulate(BenchmarkKind kind, const ParameterValues& theta, double delta, std::size_t n,
                           std::span<const double> x0, std::uint64_t seed, std::uint64_t stream) {
  if (n < 1) throw InvalidArgument("need at least one step");
  if (!(delta > 0.0)) throw InvalidArgument("time step must be positive");
  check_benchmark_parameters(kind, theta);
  check_dims(kind, x0);
  Philox rng(seed, stream);
  ObservationSeries s;
  s.delta = delta;
  s.x.reserve(n + 1);
  s.x.emplace_back(x0.begin(), x0.end());
  for (std::size_t i = 0; i < n; ++i) s.x.push_back(exact_sample(kind, theta, delta, s.x.back(), rng));
  return s;
}

ObservationSeries euler_simulate(const ModelSpec& model, const ParameterValues& theta, double delta, std::size_t n,
                                 std::size_t substeps, std::span<const double> x0, std::uint64_t seed,
                                 std::uint64_t stream) {
  if (n < 1 || substeps < 1) throw InvalidArgument("need at least one step and one substep");
  if (!(delta > 0.0)) throw InvalidArgument("time step must be positive");
  const std::size_t m = model.m;
  if (x0.size() != m) throw InvalidArgument("x0 has the wrong dimension");
  std::vector<Expr> outs = model.mu;
  for (const auto& row : model.sigma) outs.insert(outs.end(), row.begin(), row.end());
  const Tape tape(outs);
  const BoundTape bound = tape.bind(theta);
  Philox rng(seed, stream);
  const double h = delta / static_cast<double>(substeps);
  const double sh = std::sqrt(h);
  std::vector<double> x(x0.begin(), x0.end()), vals(outs.size()), dw(m);
  ObservationSeries s;
  s.delta = delta;
  s.x.push_back(x);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < substeps; ++j) {
      bound.eval(x, vals);
      for (auto& w : dw) w = sh * rng.normal();
      for (std::size_t r = 0; r < m; ++r) {
        double inc = vals[r] * h;
        for (std::size_t c = 0; c < m; ++c) inc += vals[m + r * m + c] * dw[c];
        x[r] += inc;
      }
      if (!model.in_state_space(x)) {
        throw DomainError("Euler path left the state space at step " + std::to_string(i * substeps + j + 1));
      }
    }
    s.x.push_back(x);
  }
  return s;
}

double exact_loglik(BenchmarkKind kind, const ParameterValues& theta, const ObservationSeries& series) {
  std::vector<double> terms(series.n());
  for (std::size_t i = 0; i < terms.size(); ++i) {
    try {
      terms[i] = exact_log_density(kind, theta, series.delta, series.x[i + 1], series.x[i]);
    } catch (const DomainError& e) {
      throw TransitionError(i + 1, e.what());
    }
  }
  return pairwise_sum(terms);
}

std::vector<double> default_x0(BenchmarkKind kind, const ParameterValues& theta) {
  if (kind == BenchmarkKind::DMROU) return {theta.at("alpha1"), theta.at("alpha2")};
  return {theta.at("alpha")};
}

// --- estimation ------------------------------------------------------------------------

std::vector<double> regression_start(BenchmarkKind kind, const ObservationSeries& series) {
  const std::size_t n = series.n();
  const std::size_t m = series.dims();
  if (n < 3) throw InvalidArgument("need at least three transitions for a regression start");
  // x_i = c + B x_{i-1} + e
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m + 1));
  Eigen::MatrixXd Y(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < n; ++i) {
    const auto I = static_cast<Eigen::Index>(i);
    X(I, 0) = 1.0;
    for (std::size_t j = 0; j < m; ++j) {
      X(I, static_cast<Eigen::Index>(j + 1)) = series.x[i][j];
      Y(I, static_cast<Eigen::Index>(j)) = series.x[i + 1][j];
    }
  }
  const Eigen::MatrixXd coef = X.colPivHouseholderQr().solve(Y);
  const Eigen::MatrixXd resid = Y - X * coef;
  const double dt = series.delta;
  if (kind == BenchmarkKind::DMROU) {
    Eigen::Matrix2d B = coef.bottomRows(2).transpose();
    const Eigen::Vector2d c = coef.row(0).transpose();
    Eigen::Matrix2d K = -B.log() / dt;
    if (!K.allFinite()) K = (Eigen::Matrix2d::Identity() - B) / dt;
    const double k11 = std::max(K(0, 0), 1e-3), k22 = std::max(K(1, 1), 1e-3);
    Eigen::Matrix2d Kc;
    Kc << k11, 0.0, K(1, 0), k22;
    const Eigen::Matrix2d F = (-Kc * dt).exp();
    const Eigen::Vector2d alpha = (Eigen::Matrix2d::Identity() - F).fullPivLu().solve(c);
    return {k11, K(1, 0), k22, alpha(0), alpha(1)};
  }
  const double b = std::clamp(coef(1, 0), 1e-6, 1.0 - 1e-6);
  const double kappa = -std::log(b) / dt;
  double mean = 0.0;
  for (const auto& x : series.x) mean += x[0];
  mean /= static_cast<double>(series.x.size());
  double alpha = coef(0, 0) / (1.0 - b);
  if (!std::isfinite(alpha) || coef(1, 0) >= 1.0) alpha = mean;
  // the conditional Gaussian MLE of the innovation variance
  const double s2 = resid.squaredNorm() / static_cast<double>(n);
  const double scale = 2.0 * kappa / (1.0 - b * b);
  if (kind == BenchmarkKind::MROU) return {kappa, alpha, std::sqrt(s2 * scale)};
  alpha = std::max(alpha, 1e-8);
  double sigma = std::sqrt(s2 * scale / std::max(mean, 1e-12));
  sigma = std::min(sigma, 0.99 * std::sqrt(2.0 * kappa * alpha));
  return {kappa, alpha, sigma};
}

EstimateReport exact_mle(BenchmarkKind kind, const ObservationSeries& series, const FitOptions& options) {
  const ModelSpec model = benchmark_model(kind);
  series.validate(model);
  const std::vector<double> start = regression_start(kind, series);
  return maximize(
      model, [&](const ParameterValues& theta) { return exact_loglik(kind, theta, series); }, start, options);
}

// --- density error experiment -----------------------------------------------------------

std::vector<std::vector<double>> error_grid_points(BenchmarkKind kind, const ParameterValues& theta, double delta,
                                                   std::span<const double> x0, std::size_t points, double width) {
  if (points < 2) throw InvalidArgument("a grid needs at least two points per dimension");
  const GaussianMoments g = conditional_moments(kind, theta, delta, x0);
  const std::size_t m = static_cast<std::size_t>(g.mean.size());
  std::vector<std::vector<double>> axes(m);
  for (std::size_t d = 0; d < m; ++d) {
    const auto D = static_cast<Eigen::Index>(d);
    const double sd = std::sqrt(g.cov(D, D));
    double lo = g.mean(D) - width * sd;
    const double hi = g.mean(D) + width * sd;
    if (kind == BenchmarkKind::SQR) lo = std::max(lo, 1e-3 * g.mean(D));
    for (std::size_t i = 0; i < points; ++i) {
      axes[d].push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1));
    }
  }
  std::vector<std::vector<double>> out;
  std::vector<std::size_t> idx(m, 0);
  for (;;) {
    std::vector<double> p(m);
    for (std::size_t d = 0; d < m; ++d) p[d] = axes[d][idx[d]];
    out.push_back(std::move(p));
    std::size_t d = m;
    while (d-- > 0) {
      if (++idx[d] < points) break;
      idx[d] = 0;
      if (d == 0) return out;
    }
  }
}

std::vector<ErrorGrid> error_experiment(const ErrorExperimentConfig& config) {
  const BenchmarkKind kind = config.kind;
  check_benchmark_parameters(kind, config.theta);
  const ModelSpec model = benchmark_model(kind);
  const std::vector<double> x0 = config.x0 ? *config.x0 : default_x0(kind, config.theta);
  std::vector<ErrorGrid> grids;
  for (double delta : config.deltas) {
    const auto points = error_grid_points(kind, config.theta, delta, x0, config.points, config.width);
    std::vector<double> exact(points.size()), exact_log(points.size());
    parallel_for(points.size(), [&](std::size_t i) {
      exact_log[i] = exact_log_density(kind, config.theta, delta, points[i], x0);
      exact[i] = std::exp(exact_log[i]);
    });
    const int variants = (kind == BenchmarkKind::SQR && config.lamperti) ? 2 : 1;
    for (int order : config.orders) {
      for (int v = 0; v < variants; ++v) {
        ErrorGrid g{kind, delta, order, v == 1, x0, points, {}, exact, 0.0, 0.0};
        g.approx.resize(points.size());
        std::vector<double> approx_log(points.size());
        if (v == 1) {
          const LampertiExpansion e = lamperti_wrap(model, config.theta, x0[0], order);
          parallel_for(points.size(), [&](std::size_t i) {
            g.approx[i] = e.evaluate(delta, points[i][0]);
            approx_log[i] = e.log_density(delta, points[i][0]);
          });
        } else {
          const DensityExpansion e = expand(model, config.theta, x0, order);
          parallel_for(points.size(), [&](std::size_t i) {
            g.approx[i] = e.evaluate(delta, points[i]);
            approx_log[i] = e.log_density(delta, points[i]);
          });
        }
        for (std::size_t i = 0; i < points.size(); ++i) {
          g.max_abs_error = std::max(g.max_abs_error, std::abs(g.approx[i] - exact[i]));
          g.max_abs_log_error = std::max(g.max_abs_log_error, std::abs(approx_log[i] - exact_log[i]));
        }
        grids.push_back(std::move(g));
      }
    }
  }
  return grids;
}

namespace {

std::string num(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

void write_error_summary_csv(std::ostream& out, const std::vector<ErrorGrid>& grids) {
  out << "kind,delta,order,variant,points,max_abs_error,max_abs_log_error\n";
  for (const auto& g : grids) {
    out << to_string(g.kind) << ',' << num(g.delta) << ',' << g.order << ',' << (g.lamperti ? "lamperti" : "direct")
        << ',' << g.points.size() << ',' << num(g.max_abs_error) << ',' << num(g.max_abs_log_error) << '\n';
  }
}

void write_error_points_csv(std::ostream& out, const std::vector<ErrorGrid>& grids) {
  const std::size_t m = grids.empty() ? 1 : grids.front().x0.size();
  out << "delta,order,variant";
  for (std::size_t j = 1; j <= m; ++j) out << ",x" << j;
  out << ",approx,exact,error\n";
  for (const auto& g : grids) {
    for (std::size_t i = 0; i < g.points.size(); ++i) {
      out << num(g.delta) << ',' << g.order << ',' << (g.lamperti ? "lamperti" : "direct");
      for (double v : g.points[i]) out << ',' << num(v);
      out << ',' << num(g.approx[i]) << ',' << num(g.exact[i]) << ',' << num(g.approx[i] - g.exact[i]) << '\n';
    }
  }
}

// --- estimation experiment --------------------------------------------------------------

namespace {

void mean_sd(const std::vector<std::vector<double>>& rows, std::vector<double>& mean, std::vector<double>& sd) {
  const std::size_t p = rows.empty() ? 0 : rows.front().size();
  mean.assign(p, 0.0);
  sd.assign(p, 0.0);
  if (rows.empty()) return;
  for (std::size_t j = 0; j < p; ++j) {
    std::vector<double> col;
    for (const auto& r : rows) col.push_back(r[j]);
    mean[j] = pairwise_sum(col) / static_cast<double>(col.size());
    for (auto& v : col) v = (v - mean[j]) * (v - mean[j]);
    sd[j] = col.size() > 1 ? std::sqrt(pairwise_sum(col) / static_cast<double>(col.size() - 1)) : 0.0;
  }
}

}  // namespace

MleExperimentResult mle_experiment(const MleExperimentConfig& config) {
  const BenchmarkKind kind = config.kind;
  check_benchmark_parameters(kind, config.theta);
  if (config.replications < 1 || config.n < 3) throw InvalidArgument("need at least one replication and n >= 3");
  const ModelSpec model = benchmark_model(kind);
  const std::vector<double> x0 = config.x0 ? *config.x0 : default_x0(kind, config.theta);
  const std::vector<double> truth = model.unbind(config.theta);
  FitOptions opts = config.fit;
  opts.standard_errors = false;

  std::vector<ApproxLikelihood> liks;
  for (int J : config.orders) liks.emplace_back(model, J);

  MleExperimentResult res;
  res.config = config;
  res.names = model.params;
  res.replications.resize(config.replications);
  parallel_for(config.replications, [&](std::size_t r) {
    MleReplication& rep = res.replications[r];
    rep.index = r;
    const ObservationSeries s = simulate(kind, config.theta, config.delta, config.n, x0, config.seed, r);
    try {
      const EstimateReport ex = exact_mle(kind, s, opts);
      rep.exact = ex.theta;
      rep.exact_ok = ex.converged();
    } catch (const Error&) {
      rep.exact_ok = false;
    }
    rep.approx.assign(liks.size(), {});
    rep.approx_ok.assign(liks.size(), false);
    if (!rep.exact_ok) return;
    for (std::size_t j = 0; j < liks.size(); ++j) {
      try {
        const EstimateReport a = maximize(
            model, [&](const ParameterValues& th) { return liks[j].loglik(th, s); }, rep.exact, opts);
        rep.approx[j] = a.theta;
        rep.approx_ok[j] = a.converged();
      } catch (const Error&) {
        rep.approx_ok[j] = false;
      }
    }
  });

  std::vector<std::vector<double>> exact_dev;
  std::vector<std::vector<std::vector<double>>> approx_dev(liks.size());
  for (const auto& rep : res.replications) {
    const bool ok = rep.exact_ok && std::all_of(rep.approx_ok.begin(), rep.approx_ok.end(), [](bool b) { return b; });
    if (!ok) {
      ++res.failures;
      continue;
    }
    ++res.used;
    std::vector<double> d(truth.size());
    for (std::size_t p = 0; p < d.size(); ++p) d[p] = rep.exact[p] - truth[p];
    exact_dev.push_back(d);
    for (std::size_t j = 0; j < liks.size(); ++j) {
      for (std::size_t p = 0; p < d.size(); ++p) d[p] = rep.approx[j][p] - rep.exact[p];
      approx_dev[j].push_back(d);
    }
  }
  mean_sd(exact_dev, res.exact_mean, res.exact_sd);
  res.approx_mean.resize(liks.size());
  res.approx_sd.resize(liks.size());
  for (std::size_t j = 0; j < liks.size(); ++j) mean_sd(approx_dev[j], res.approx_mean[j], res.approx_sd[j]);
  if (kind == BenchmarkKind::MROU) {
    res.asymptotic_sd = asymptotic_stddev(fisher_information_mrou(config.theta, config.delta), config.n);
  } else if (kind == BenchmarkKind::DMROU) {
    res.asymptotic_sd = asymptotic_stddev(fisher_information_dmrou(config.theta, config.delta), config.n);
  }
  return res;
}

void write_mle_table_csv(std::ostream& out, const MleExperimentResult& r) {
  out << "delta,parameter,true,asymptotic_mean,asymptotic_stddev,exact_mean,exact_stddev";
  for (int J : r.config.orders) out << ",J" << J << "_mean,J" << J << "_stddev";
  out << ",replications_used,failures\n";
  for (std::size_t p = 0; p < r.names.size(); ++p) {
    out << num(r.config.delta) << ',' << r.names[p] << ',' << num(r.config.theta.at(r.names[p])) << ",0,"
        << (r.asymptotic_sd ? num((*r.asymptotic_sd)[p]) : "") << ',' << num(r.exact_mean.empty() ? 0.0 : r.exact_mean[p])
        << ',' << num(r.exact_sd.empty() ? 0.0 : r.exact_sd[p]);
    for (std::size_t j = 0; j < r.config.orders.size(); ++j) {
      out << ',' << num(r.approx_mean[j].empty() ? 0.0 : r.approx_mean[j][p]) << ','
          << num(r.approx_sd[j].empty() ? 0.0 : r.approx_sd[j][p]);
    }
    out << ',' << r.used << ',' << r.failures << '\n';
  }
}

void write_mle_estimates_csv(std::ostream& out, const MleExperimentResult& r) {
  out << "replication,estimator,status";
  for (const auto& n : r.names) out << ',' << n;
  out << '\n';
  for (const auto& rep : r.replications) {
    auto row = [&](const std::string& est, bool ok, const std::vector<double>& th) {
      out << rep.index << ',' << est << ',' << (ok ? "converged" : "failed");
      for (std::size_t p = 0; p < r.names.size(); ++p) out << ',' << (p < th.size() ? num(th[p]) : "");
      out << '\n';
    };
    row("exact", rep.exact_ok, rep.exact);
    for (std::size_t j = 0; j < r.config.orders.size(); ++j) {
      row("J" + std::to_string(r.config.orders[j]), rep.approx_ok.at(j), rep.approx.at(j));
    }
  }
}

}  // namespace difflik
