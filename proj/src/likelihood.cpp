#include "difflik/likelihood.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "difflik/benchmarks.hpp"
#include "difflik/parallel.hpp"
#include "difflik/quadrature.hpp"

namespace difflik {

// --- observation series ------------------------------------------------------------

void ObservationSeries::validate(const ModelSpec& model) const {
  if (x.size() < 2) throw InvalidArgument("a series needs at least two observations");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw InvalidArgument("sampling interval must be positive");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].size() != model.m) {
      throw InvalidArgument("observation " + std::to_string(i) + " has " + std::to_string(x[i].size()) +
                            " coordinates, model '" + model.name + "' has " + std::to_string(model.m));
    }
    if (!model.in_state_space(x[i])) {
      throw InvalidArgument("observation " + std::to_string(i) + " lies outside the state space");
    }
  }
}

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

ObservationSeries read_series_csv(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  std::size_t m = 0;
  std::vector<double> times;
  std::vector<std::size_t> rows;
  ObservationSeries s;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (!header) {
      if (cells.size() < 2 || trim(cells[0]) != "t") {
        throw ParseError("header must be t,x1,...,xm", lineno, 1, source);
      }
      std::size_t col = cells[0].size() + 2;
      for (std::size_t j = 1; j < cells.size(); ++j) {
        if (trim(cells[j]) != "x" + std::to_string(j)) {
          throw ParseError("expected column name x" + std::to_string(j), lineno, col, source);
        }
        col += cells[j].size() + 1;
      }
      m = cells.size() - 1;
      header = true;
      continue;
    }
    if (cells.size() != m + 1) {
      throw ParseError("expected " + std::to_string(m + 1) + " fields, found " + std::to_string(cells.size()), lineno,
                       1, source);
    }
    std::vector<double> row(m + 1);
    std::size_t col = 1;
    for (std::size_t j = 0; j <= m; ++j) {
      const std::string_view cell = trim(cells[j]);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw ParseError("not a finite number: '" + std::string(cell) + "'", lineno, col, source);
      }
      row[j] = v;
      col += cells[j].size() + 1;
    }
    if (!times.empty() && !(row[0] > times.back())) {
      throw ParseError("time stamps must be strictly increasing", lineno, 1, source);
    }
    times.push_back(row[0]);
    rows.push_back(lineno);
    s.x.emplace_back(row.begin() + 1, row.end());
  }
  if (!header) throw ParseError("empty data file", lineno + 1, 1, source);
  if (times.size() < 2) throw ParseError("need at least two observations", lineno + 1, 1, source);
  // The first step sets the interval; the first row that breaks it is reported.
  const double first = times[1] - times[0];
  for (std::size_t i = 2; i < times.size(); ++i) {
    const double step = times[i] - times[i - 1];
    if (std::abs(step - first) > 1e-9 * first) {
      throw ParseError("sampling interval is not uniform (step " + std::to_string(step) + ", expected " +
                           std::to_string(first) + ")",
                       rows[i], 1, source);
    }
  }
  s.delta = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
  return s;
}

ObservationSeries read_series_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open data file '" + path.string() + "'");
  return read_series_csv(in, path.string());
}

void write_series_csv(std::ostream& out, const ObservationSeries& series, double t0) {
  out << "t";
  for (std::size_t j = 1; j <= series.dims(); ++j) out << ",x" << j;
  out << '\n';
  std::ostringstream line;
  line.precision(17);
  for (std::size_t i = 0; i < series.x.size(); ++i) {
    line.str("");
    line << t0 + static_cast<double>(i) * series.delta;
    for (double v : series.x[i]) line << ',' << v;
    out << line.str() << '\n';
  }
}

// --- log density --------------------------------------------------------------------

double log_density(const DensityExpansion& e, double delta, std::span<const double> x) {
  return e.log_density(delta, x);
}

struct ApproxLikelihood::Scratch {
  const ParameterValues* theta;
  BoundTape plan;
  std::optional<BoundTape> transform;
  std::vector<double> values;
  std::vector<double> a;
};

ApproxLikelihood::ApproxLikelihood(const ModelSpec& model, int order, bool lamperti)
    : model_(model), order_(order), lamperti_(lamperti) {
  model_.validate();
  if (lamperti) {
    plan_ = ExpansionPlan::get(lamperti_model(model_), order);
    const Expr g = model_.lamperti->gamma;
    const std::vector<Expr> outs{g, differentiate(g, 0)};
    transform_ = Tape(outs);
  } else {
    plan_ = ExpansionPlan::get(model_, order);
  }
}

ApproxLikelihood::Scratch ApproxLikelihood::scratch(const ParameterValues& theta) const {
  Scratch s{&theta, plan_->tape().bind(theta), std::nullopt, {}, {}};
  if (lamperti_) s.transform = transform_.bind(theta);
  s.values.resize(plan_->tape().num_outputs());
  s.a.assign(static_cast<std::size_t>(order_) + 1, 0.0);
  return s;
}

// One-dimensional fast path: the dense polynomials D^l P(+-y) are stored in
// the plan, so a transition costs one tape sweep and a few Horner loops.
double ApproxLikelihood::transition_1d(Scratch& s, double delta, double x0, double x) const {
  s.plan.eval(std::span<const double>(&x0, 1), s.values);
  const double sigma = s.values[0];
  const double d = 1.0 / std::abs(sigma);
  if (!std::isfinite(d) || !std::isfinite(sigma)) throw DomainError("dispersion vanishes at x0");
  const std::size_t side = sigma > 0 ? 0 : 1;
  const double eps = std::sqrt(delta);
  const double y = d * (x - x0) / eps;
  const double* c = s.values.data() + 2;
  for (int k = 1; k <= order_; ++k) {
    double total = 0.0;
    for (const auto& g : plan_->groups(k)) {
      for (const auto& e : g.entries) {
        double w = 1.0;
        for (const auto& f : e.factors) w *= c[f.slot] * d;
        const auto& t = e.t[side];
        double h = 0.0;
        for (std::size_t p = t.size(); p-- > 0;) h = h * y + t[p];
        total += w * h;
      }
    }
    s.a[static_cast<std::size_t>(k)] = total;
  }
  const double out = -0.5 * std::log(delta) + std::log(d) - 0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * y * y +
                     log_series(s.a, eps);
  if (!std::isfinite(out)) throw DomainError("non-finite log-density");
  return out;
}

double ApproxLikelihood::transition(Scratch& s, double delta, std::span<const double> x0,
                                    std::span<const double> x) const {
  if (!model_.in_state_space(x0)) throw DomainError("x0 lies outside the state space");
  if (!model_.in_state_space(x)) throw DomainError("x lies outside the state space");
  if (lamperti_) {
    double g0[2], g1[2];
    s.transform->eval(x0, g0);
    s.transform->eval(x, g1);
    if (!(g1[1] != 0.0) || !std::isfinite(g1[1])) throw DomainError("Lamperti Jacobian vanishes at x");
    return std::log(std::abs(g1[1])) + transition_1d(s, delta, g0[0], g1[0]);
  }
  if (model_.m == 1) return transition_1d(s, delta, x0[0], x[0]);
  ExpansionContext ctx(plan_, s.plan, *s.theta, x0);
  return build_expansion(ctx, order_).log_density(delta, x);
}

double ApproxLikelihood::log_density(const ParameterValues& theta, double delta, std::span<const double> x0,
                                     std::span<const double> x) const {
  if (!(delta > 0.0)) throw InvalidArgument("time step must be positive");
  if (x0.size() != model_.m || x.size() != model_.m) throw InvalidArgument("state has the wrong dimension");
  Scratch s = scratch(theta);
  return transition(s, delta, x0, x);
}

std::vector<double> ApproxLikelihood::terms(const ParameterValues& theta, const ObservationSeries& series) const {
  series.validate(model_);
  const std::size_t n = series.n();
  std::vector<double> out(n, 0.0);
  std::vector<std::size_t> bad_index(n, 0);
  std::vector<std::string> bad_what(n);
  // first failing transition per block; the smallest wins
  parallel_blocks(n, [&](std::size_t begin, std::size_t end) {
    Scratch s = scratch(theta);
    for (std::size_t i = begin; i < end; ++i) {
      try {
        out[i] = transition(s, series.delta, series.x[i], series.x[i + 1]);
      } catch (const DomainError& e) {
        bad_index[begin] = i + 1;
        bad_what[begin] = e.what();
        return;
      }
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    if (bad_index[i] != 0) throw TransitionError(bad_index[i], bad_what[i]);
  }
  return out;
}

double ApproxLikelihood::loglik(const ParameterValues& theta, const ObservationSeries& series) const {
  return pairwise_sum(terms(theta, series));
}

double approx_loglik(const ModelSpec& model, const ParameterValues& theta, const ObservationSeries& series, int order,
                     bool lamperti) {
  return ApproxLikelihood(model, order, lamperti).loglik(theta, series);
}

// --- optimizer ------------------------------------------------------------------------

std::string to_string(FitStatus s) {
  switch (s) {
    case FitStatus::Converged: return "converged";
    case FitStatus::NotConverged: return "not_converged";
    case FitStatus::DegenerateSimplex: return "degenerate_simplex";
  }
  return "unknown";
}

ParameterValues EstimateReport::values() const {
  ParameterValues v;
  for (std::size_t i = 0; i < names.size(); ++i) v[names[i]] = theta.at(i);
  return v;
}

BoxTransform::BoxTransform(const ModelSpec& model, const std::map<std::string, Interval>& box) {
  for (const auto& name : model.params) {
    auto it = box.find(name);
    box_.push_back(it != box.end() ? it->second : model.bound(name));
    if (!(box_.back().lo < box_.back().hi)) throw InvalidArgument("empty box for parameter '" + name + "'");
  }
  for (const auto& [name, iv] : box) {
    if (std::find(model.params.begin(), model.params.end(), name) == model.params.end()) {
      throw InvalidArgument("box given for unknown parameter '" + name + "'");
    }
  }
}

std::vector<double> BoxTransform::to_free(std::span<const double> theta) const {
  if (theta.size() != box_.size()) throw InvalidArgument("parameter vector has the wrong length");
  std::vector<double> u(theta.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    const Interval& b = box_[i];
    const double t = theta[i];
    if (!b.contains(t)) {
      throw InvalidArgument("parameter " + std::to_string(i + 1) + " = " + std::to_string(t) + " is outside its box");
    }
    const bool lo = std::isfinite(b.lo), hi = std::isfinite(b.hi);
    if (lo && hi) {
      const double p = (t - b.lo) / (b.hi - b.lo);
      u[i] = std::log(p / (1.0 - p));
    } else if (lo) {
      u[i] = std::log(t - b.lo);
    } else if (hi) {
      u[i] = std::log(b.hi - t);
    } else {
      u[i] = t;
    }
  }
  return u;
}

std::vector<double> BoxTransform::from_free(std::span<const double> u) const {
  std::vector<double> theta(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    const Interval& b = box_[i];
    const bool lo = std::isfinite(b.lo), hi = std::isfinite(b.hi);
    if (lo && hi) {
      theta[i] = b.lo + (b.hi - b.lo) / (1.0 + std::exp(-u[i]));
    } else if (lo) {
      theta[i] = b.lo + std::exp(u[i]);
    } else if (hi) {
      theta[i] = b.hi - std::exp(u[i]);
    } else {
      theta[i] = u[i];
    }
  }
  return theta;
}

namespace {

struct Vertex {
  std::vector<double> u;
  double f;
};

class NelderMead {
 public:
  NelderMead(const std::function<double(const std::vector<double>&)>& f, const FitOptions& opt)
      : f_(f), opt_(opt) {}

  // Returns the status; `best` is updated in place.
  FitStatus run(Vertex& best, const std::vector<double>& steps, int& iterations) {
    const std::size_t n = best.u.size();
    std::vector<Vertex> s{best};
    for (std::size_t i = 0; i < n; ++i) {
      Vertex v = best;
      v.u[i] += steps[i];
      v.f = f_(v.u);
      s.push_back(std::move(v));
    }
    if (n == 0) return FitStatus::Converged;
    auto order = [&] {
      std::stable_sort(s.begin(), s.end(), [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
    };
    order();
    if (!std::isfinite(s.front().f)) throw DegenerateSimplex("objective is not finite anywhere on the starting simplex");
    std::vector<double> c(n), p(n);
    auto point = [&](double t, const std::vector<double>& worst) {
      for (std::size_t j = 0; j < n; ++j) p[j] = c[j] + t * (worst[j] - c[j]);
      return Vertex{p, f_(p)};
    };
    FitStatus status = FitStatus::NotConverged;
    while (iterations < opt_.max_iterations) {
      double size = 0.0;
      for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 0; j < n; ++j) size = std::max(size, std::abs(s[i].u[j] - s[0].u[j]));
      }
      const double spread = s[n].f - s[0].f;
      if (size <= opt_.xtol && spread <= opt_.ftol) {
        status = FitStatus::Converged;
        break;
      }
      if (size <= 1e-6 * opt_.xtol) {
        status = FitStatus::DegenerateSimplex;
        break;
      }
      ++iterations;
      std::fill(c.begin(), c.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) c[j] += s[i].u[j] / static_cast<double>(n);
      }
      const std::vector<double> worst = s[n].u;
      Vertex r = point(-1.0, worst);
      if (r.f < s[0].f) {
        Vertex e = point(-2.0, worst);
        s[n] = e.f < r.f ? std::move(e) : std::move(r);
      } else if (r.f < s[n - 1].f) {
        s[n] = std::move(r);
      } else {
        const bool outside = r.f < s[n].f;
        Vertex k = point(outside ? -0.5 : 0.5, worst);
        if (outside ? k.f <= r.f : k.f < s[n].f) {
          s[n] = std::move(k);
        } else {
          for (std::size_t i = 1; i <= n; ++i) {
            for (std::size_t j = 0; j < n; ++j) s[i].u[j] = s[0].u[j] + 0.5 * (s[i].u[j] - s[0].u[j]);
            s[i].f = f_(s[i].u);
          }
        }
      }
      order();
    }
    best = s.front();
    return status;
  }

 private:
  const std::function<double(const std::vector<double>&)>& f_;
  const FitOptions& opt_;
};

}  // namespace

EstimateReport maximize(const ModelSpec& model, const Objective& objective, std::span<const double> start,
                        const FitOptions& options) {
  const BoxTransform box(model, options.box);
  EstimateReport report;
  report.names = model.params;
  int evaluations = 0;
  const std::function<double(const std::vector<double>&)> f = [&](const std::vector<double>& u) {
    ++evaluations;
    const std::vector<double> theta = box.from_free(u);
    const ParameterValues pv = model.bind(theta);
    if (model.violation(pv)) return std::numeric_limits<double>::infinity();
    double v;
    try {
      v = objective(pv);
    } catch (const DomainError&) {
      return std::numeric_limits<double>::infinity();
    }
    return std::isfinite(v) ? -v : std::numeric_limits<double>::infinity();
  };
  Vertex best{box.to_free(start), 0.0};
  best.f = f(best.u);
  std::vector<double> steps(best.u.size());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const Interval& b = box.interval(i);
    if (std::isfinite(b.lo) || std::isfinite(b.hi)) {
      steps[i] = 0.05;
    } else {
      steps[i] = best.u[i] != 0.0 ? 0.05 * best.u[i] : 0.00025;
    }
  }
  NelderMead nm(f, options);
  int iterations = 0;
  FitStatus status = nm.run(best, steps, iterations);
  for (int r = 0; r < options.restarts && status == FitStatus::Converged; ++r) {
    const double before = best.f;
    status = nm.run(best, steps, iterations);
    ++report.restarts;
    if (before - best.f <= options.ftol) break;
  }
  report.theta = box.from_free(best.u);
  report.loglik = -best.f;
  report.iterations = iterations;
  report.status = status;
  if (status == FitStatus::NotConverged) {
    report.warnings.push_back("iteration limit " + std::to_string(options.max_iterations) + " reached");
  } else if (status == FitStatus::DegenerateSimplex) {
    report.warnings.push_back("simplex collapsed before the objective converged");
  }
  if (options.standard_errors && status == FitStatus::Converged) {
    if (auto cov = observed_covariance(model, objective, report.theta, options.hessian_step)) {
      std::vector<double> se(report.theta.size());
      for (std::size_t i = 0; i < se.size(); ++i) se[i] = std::sqrt((*cov)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));
      report.standard_errors = std::move(se);
    } else {
      report.warnings.push_back("observed information is not positive definite; standard errors omitted");
    }
  }
  report.evaluations = evaluations;
  return report;
}

std::optional<Eigen::MatrixXd> observed_covariance(const ModelSpec& model, const Objective& objective,
                                                   std::span<const double> theta, double step) {
  const std::size_t n = theta.size();
  std::vector<double> h(n);
  for (std::size_t i = 0; i < n; ++i) h[i] = step * (theta[i] != 0.0 ? std::abs(theta[i]) : 1.0);
  auto f = [&](std::vector<double> t) {
    const ParameterValues pv = model.bind(t);
    if (model.violation(pv)) return std::numeric_limits<double>::quiet_NaN();
    try {
      return objective(pv);
    } catch (const DomainError&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  const std::vector<double> t0(theta.begin(), theta.end());
  const double f0 = f(t0);
  Eigen::MatrixXd info(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  auto shifted = [&](std::size_t i, double a, std::size_t j, double b) {
    std::vector<double> t = t0;
    t[i] += a * h[i];
    t[j] += b * h[j];
    return f(t);
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto I = static_cast<Eigen::Index>(i);
    info(I, I) = -(shifted(i, 1, i, 0) - 2 * f0 + shifted(i, -1, i, 0)) / (h[i] * h[i]);
    for (std::size_t j = 0; j < i; ++j) {
      const auto J = static_cast<Eigen::Index>(j);
      info(I, J) = info(J, I) = -(shifted(i, 1, j, 1) - shifted(i, 1, j, -1) - shifted(i, -1, j, 1) +
                                  shifted(i, -1, j, -1)) /
                                (4 * h[i] * h[j]);
    }
  }
  if (!info.allFinite()) return std::nullopt;
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success) return std::nullopt;
  return Eigen::MatrixXd(llt.solve(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))));
}

EstimateReport fit(const ModelSpec& model, const ObservationSeries& series, int order, std::span<const double> start,
                   const FitOptions& options, bool lamperti) {
  series.validate(model);
  const ApproxLikelihood lik(model, order, lamperti);
  EstimateReport r = maximize(
      model, [&](const ParameterValues& theta) { return lik.loglik(theta, series); }, start, options);
  if (order < static_cast<int>(model.m)) {
    r.warnings.push_back("order " + std::to_string(order) + " is below the dimension " + std::to_string(model.m) +
                         "; the approximate estimator may not approach the exact one as delta shrinks");
  }
  return r;
}

// --- Fisher information -----------------------------------------------------------------

Eigen::MatrixXd fisher_information_mrou(const ParameterValues& theta, double delta) {
  const double k = theta.at("kappa"), s = theta.at("sigma");
  if (!(k > 0.0)) throw InvalidArgument("Fisher information needs kappa > 0 (stationarity)");
  if (!(s > 0.0) || !(delta > 0.0)) throw InvalidArgument("sigma and delta must be positive");
  const double e1 = std::exp(-k * delta), e2 = e1 * e1;
  const double v = s * s * (1.0 - e2) / (2.0 * k);
  const double dv_k = s * s * (2.0 * delta * e2 * k - (1.0 - e2)) / (2.0 * k * k);
  const double dv_s = 2.0 * v / s;
  const double stat = s * s / (2.0 * k);
  Eigen::MatrixXd i = Eigen::MatrixXd::Zero(3, 3);
  i(0, 0) = delta * delta * e2 * stat / v + 0.5 * dv_k * dv_k / (v * v);
  i(1, 1) = (1.0 - e1) * (1.0 - e1) / v;
  i(2, 2) = 0.5 * dv_s * dv_s / (v * v);
  i(0, 2) = i(2, 0) = 0.5 * dv_k * dv_s / (v * v);
  return i;
}

Eigen::MatrixXd fisher_information_dmrou(const ParameterValues& theta, double delta) {
  static const std::vector<std::string> names{"kappa11", "kappa21", "kappa22", "alpha1", "alpha2"};
  if (!(theta.at("kappa11") > 0.0) || !(theta.at("kappa22") > 0.0)) {
    throw InvalidArgument("Fisher information needs kappa11, kappa22 > 0 (stationarity)");
  }
  if (!(delta > 0.0)) throw InvalidArgument("delta must be positive");
  const Eigen::Vector2d alpha(theta.at("alpha1"), theta.at("alpha2"));
  const Eigen::Matrix2d S = dmrou_stationary_cov(theta);
  const Eigen::Matrix2d L = S.llt().matrixL();
  const GaussianMoments base = dmrou_moments(theta, delta, std::vector<double>{alpha(0), alpha(1)});
  const Eigen::MatrixXd vinv = base.cov.inverse();

  // The mean is affine in x0: mu = g + G (x0 - alpha). Differentiate g, G
  // and V by central differences.
  struct Deriv {
    Eigen::Vector2d g;
    Eigen::Matrix2d G;
    Eigen::Matrix2d V;
  };
  auto affine = [&](const ParameterValues& th) {
    Deriv d;
    const GaussianMoments m0 = dmrou_moments(th, delta, std::vector<double>{alpha(0), alpha(1)});
    d.g = m0.mean;
    d.V = m0.cov;
    for (int j = 0; j < 2; ++j) {
      std::vector<double> x{alpha(0), alpha(1)};
      x[static_cast<std::size_t>(j)] += 1.0;
      d.G.col(j) = dmrou_moments(th, delta, x).mean - m0.mean;
    }
    return d;
  };
  std::vector<Deriv> der;
  for (const auto& name : names) {
    const double h = 1e-5 * std::max(1.0, std::abs(theta.at(name)));
    ParameterValues up = theta, dn = theta;
    up[name] += h;
    dn[name] -= h;
    const Deriv a = affine(up), b = affine(dn);
    der.push_back({(a.g - b.g) / (2 * h), (a.G - b.G) / (2 * h), (a.V - b.V) / (2 * h)});
  }
  const GaussHermite gh = gauss_hermite(12);
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(5, 5);
  for (std::size_t p = 0; p < gh.nodes.size(); ++p) {
    for (std::size_t q = 0; q < gh.nodes.size(); ++q) {
      const Eigen::Vector2d dev = L * Eigen::Vector2d(gh.nodes[p], gh.nodes[q]);
      const double w = gh.weights[p] * gh.weights[q];
      std::vector<Eigen::Vector2d> dmu;
      for (const auto& d : der) dmu.push_back(d.g + d.G * dev);
      for (Eigen::Index a = 0; a < 5; ++a) {
        for (Eigen::Index b = 0; b < 5; ++b) {
          info(a, b) += w * dmu[static_cast<std::size_t>(a)].dot(vinv * dmu[static_cast<std::size_t>(b)]);
        }
      }
    }
  }
  for (Eigen::Index a = 0; a < 5; ++a) {
    for (Eigen::Index b = 0; b < 5; ++b) {
      info(a, b) += 0.5 * (vinv * der[static_cast<std::size_t>(a)].V * vinv * der[static_cast<std::size_t>(b)].V).trace();
    }
  }
  return 0.5 * (info + info.transpose());
}

std::vector<double> asymptotic_stddev(const Eigen::MatrixXd& fisher, std::size_t n) {
  const Eigen::MatrixXd inv = fisher.inverse();
  std::vector<double> sd(static_cast<std::size_t>(fisher.rows()));
  for (std::size_t i = 0; i < sd.size(); ++i) {
    sd[i] = std::sqrt(inv(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) / static_cast<double>(n));
  }
  return sd;
}

}  // namespace difflik
