#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "difflik/benchmarks.hpp"
#include "difflik/likelihood.hpp"
#include "doctest.h"
#include "support/models.hpp"

using namespace difflik;
using difflik::testing::model;
using difflik::testing::preset;

namespace {

std::span<const double> one(const double& v) { return {&v, 1}; }

ObservationSeries mrou_path(std::size_t n, double delta, std::uint64_t seed = 7) {
  const ParameterValues th = benchmark_preset(BenchmarkKind::MROU);
  const std::vector<double> x0{0.06};
  return simulate(BenchmarkKind::MROU, th, delta, n, x0, seed);
}

}  // namespace

TEST_CASE("log-density of the leading term is the Euler Gaussian") {
  const ModelSpec m = model("mrou");
  const ParameterValues th = preset(m);
  const ApproxLikelihood lik(m, 0);
  const double x0 = 0.07, delta = 1.0 / 52;
  for (double x : {0.05, 0.07, 0.1}) {
    const double v = 0.03 * 0.03 * delta;
    const double expect = -0.5 * std::log(2 * std::numbers::pi * v) - 0.5 * (x - x0) * (x - x0) / v;
    CHECK(lik.log_density(th, delta, one(x0), one(x)) == doctest::Approx(expect).epsilon(1e-13));
  }
}

TEST_CASE("fast path agrees with the assembled expansion") {
  for (const char* name : {"mrou", "sqr"}) {
    CAPTURE(name);
    const ModelSpec m = model(name);
    const ParameterValues th = preset(m);
    const double x0 = 0.05, delta = 1.0 / 52;
    for (int J = 0; J <= 6; ++J) {
      const ApproxLikelihood lik(m, J);
      const auto e = expand(m, th, one(x0), J);
      for (double x : {0.03, 0.05, 0.062, 0.08}) {
        CHECK(lik.log_density(th, delta, one(x0), one(x)) ==
              doctest::Approx(log_density(e, delta, one(x))).epsilon(1e-12));
      }
    }
  }
  const ModelSpec sqr = model("sqr");
  const ParameterValues th = preset(sqr);
  for (int J = 1; J <= 6; ++J) {
    const ApproxLikelihood lik(sqr, J, true);
    const auto w = lamperti_wrap(sqr, th, 0.05, J);
    for (double x : {0.03, 0.05, 0.08}) {
      CHECK(lik.log_density(th, 1.0 / 52, one(0.05), one(x)) == doctest::Approx(w.log_density(1.0 / 52, x)).epsilon(1e-12));
    }
  }
}

// The two forms agree up to the truncation order, so their gap shrinks at
// least like delta^((J+1)/2) and is tiny once the step is small.
TEST_CASE("log form matches the density near the mode") {
  struct Case {
    const char* name;
    std::vector<double> x0;
  };
  // points within half a conditional standard deviation of x0
  auto gap = [](const DensityExpansion& e, const std::vector<double>& x0, double delta) {
    double worst = 0.0;
    for (double t : {-0.5, 0.0, 0.3}) {
      std::vector<double> x = x0;
      for (std::size_t i = 0; i < x.size(); ++i)
        x[i] += t * std::sqrt(delta) / e.context().D()(static_cast<Eigen::Index>(i));
      const double p = e.evaluate(delta, x);
      worst = std::max(worst, std::abs(std::exp(e.log_density(delta, x)) - p) / p);
    }
    return worst;
  };
  for (const Case& c : {Case{"mrou", {0.06}}, Case{"sqr", {0.06}}, Case{"dmrou", {0.1, -0.1}}}) {
    CAPTURE(c.name);
    const ModelSpec m = model(c.name);
    const ParameterValues th = preset(m);
    for (int J = 0; J <= 4; ++J) {
      CAPTURE(J);
      const auto e = expand(m, th, c.x0, J);
      const double coarse = gap(e, c.x0, 1.0 / 208);
      const double fine = gap(e, c.x0, 1.0 / 832);
      CHECK(fine <= 1.3 * coarse / std::pow(2.0, J + 1) + 1e-12);
      if (J == 4) CHECK(fine <= 1e-6);
    }
  }
}

TEST_CASE("approximate log-likelihood of MROU approaches the exact one") {
  const ObservationSeries s = mrou_path(1000, 1.0 / 52);
  const ParameterValues th = benchmark_preset(BenchmarkKind::MROU);
  const double exact = exact_loglik(BenchmarkKind::MROU, th, s);
  const double approx = approx_loglik(benchmark_model(BenchmarkKind::MROU), th, s, 6);
  CHECK(std::abs(approx - exact) / 1000.0 <= 1e-4);
}

TEST_CASE("log-likelihood structure") {
  const ModelSpec m = model("mrou");
  const ParameterValues th = preset(m);
  const ObservationSeries s = mrou_path(40, 1.0 / 52);
  const ApproxLikelihood lik(m, 3);
  ObservationSeries one_step{s.delta, {s.x[0], s.x[1]}};
  CHECK(lik.loglik(th, one_step) == lik.log_density(th, s.delta, s.x[0], s.x[1]));
  ObservationSeries a{s.delta, {s.x.begin(), s.x.begin() + 21}};
  ObservationSeries b{s.delta, {s.x.begin() + 20, s.x.end()}};
  CHECK(lik.loglik(th, s) == doctest::Approx(lik.loglik(th, a) + lik.loglik(th, b)).epsilon(1e-14));

  ObservationSeries bad = s;
  bad.x[5] = {0.1, 0.2};
  CHECK_THROWS_AS(lik.loglik(th, bad), InvalidArgument);
  CHECK_THROWS_AS(lik.loglik(th, ObservationSeries{s.delta, {s.x[0]}}), InvalidArgument);
}

TEST_CASE("domain errors name the transition") {
  const ModelSpec geo = parse_model(R"toml(
name = "linear-noise"
dimension = 1
parameters = ["s"]
[drift]
mu_1 = "-x1"
[dispersion]
sigma_1_1 = "s*x1"
)toml");
  const ObservationSeries s{0.1, {{1.0}, {0.5}, {0.0}, {0.2}, {0.0}, {0.3}}};
  try {
    approx_loglik(geo, {{"s", 0.3}}, s, 2);
    FAIL("expected a transition error");
  } catch (const TransitionError& e) {
    CHECK(e.index() == 3);
    CHECK(std::string(e.what()).find("transition 3") != std::string::npos);
  }
}

TEST_CASE("log-likelihood stays finite around the truth") {
  for (auto kind : {BenchmarkKind::MROU, BenchmarkKind::SQR, BenchmarkKind::DMROU}) {
    CAPTURE(to_string(kind));
    const ParameterValues th = benchmark_preset(kind);
    const ObservationSeries s = simulate(kind, th, 1.0 / 52, 60, default_x0(kind, th), 3);
    const ModelSpec m = benchmark_model(kind);
    const int top = kind == BenchmarkKind::DMROU ? 4 : 6;
    for (int J = 1; J <= top; J += (kind == BenchmarkKind::DMROU ? 3 : 1)) {
      const ApproxLikelihood lik(m, J);
      for (const auto& p : m.params) {
        for (double f : {0.8, 0.9, 1.1, 1.2}) {
          ParameterValues t = th;
          t[p] = th.at(p) == 0.0 ? f - 1.0 : th.at(p) * f;
          if (m.violation(t)) continue;
          CHECK(std::isfinite(lik.loglik(t, s)));
        }
      }
    }
  }
}

TEST_CASE("log-density is invariant under relabeling coordinates") {
  const ModelSpec a = parse_model(R"toml(
name = "coupled"
dimension = 2
parameters = ["k", "c", "s"]
[drift]
mu_1 = "-k*x1 + c*x2"
mu_2 = "-2*k*x2 + x1*c"
[dispersion]
sigma_1_1 = "s*(1 + x1^2/4)"
sigma_1_2 = "s/3"
sigma_2_2 = "s*(1 + x2^2/9)"
)toml");
  const ModelSpec b = parse_model(R"toml(
name = "coupled-swapped"
dimension = 2
parameters = ["k", "c", "s"]
[drift]
mu_1 = "-2*k*x1 + x2*c"
mu_2 = "-k*x2 + c*x1"
[dispersion]
sigma_1_1 = "s*(1 + x1^2/9)"
sigma_2_1 = "s/3"
sigma_2_2 = "s*(1 + x2^2/4)"
)toml");
  const ParameterValues th{{"k", 1.5}, {"c", 0.4}, {"s", 0.8}};
  for (int J = 1; J <= 3; ++J) {
    const ApproxLikelihood la(a, J), lb(b, J);
    const std::vector<double> x0{0.3, -0.2}, x{0.35, -0.1};
    const std::vector<double> y0{-0.2, 0.3}, y{-0.1, 0.35};
    CHECK(la.log_density(th, 0.02, x0, x) == doctest::Approx(lb.log_density(th, 0.02, y0, y)).epsilon(1e-12));
  }
}

TEST_CASE("box transform round trip") {
  const ModelSpec m = model("sqr");
  std::map<std::string, Interval> box{{"alpha", {0.0, 1.0}}};
  const BoxTransform bt(m, box);
  const std::vector<double> th{0.5, 0.06, 0.15};
  const auto back = bt.from_free(bt.to_free(th));
  for (std::size_t i = 0; i < th.size(); ++i) CHECK(back[i] == doctest::Approx(th[i]).epsilon(1e-14));
  CHECK_THROWS_AS(bt.to_free(std::vector<double>{0.5, 1.5, 0.1}), InvalidArgument);
  CHECK_THROWS_AS(BoxTransform(m, {{"beta", {0.0, 1.0}}}), InvalidArgument);
}

TEST_CASE("simplex search") {
  const ModelSpec m = parse_model(R"toml(
name = "quad"
dimension = 1
parameters = ["a", "b"]
[drift]
mu_1 = "-x1"
[dispersion]
sigma_1_1 = "1"
[bounds]
b = [0.0, inf]
)toml");
  const Objective f = [](const ParameterValues& t) {
    const double a = t.at("a"), b = t.at("b");
    return -(a - 1.0) * (a - 1.0) - 4.0 * (std::log(b) - 0.5) * (std::log(b) - 0.5) - 0.5 * a * std::log(b);
  };
  const EstimateReport r = maximize(m, f, std::vector<double>{0.0, 1.0});
  CHECK(r.converged());
  // stationary point of the objective
  const double u = 3.5 / 7.875;
  const double a = 1.0 - 0.25 * u;
  CHECK(r.theta[0] == doctest::Approx(a).epsilon(1e-6));
  CHECK(std::log(r.theta[1]) == doctest::Approx(u).epsilon(1e-6));
  REQUIRE(r.standard_errors);

  FitOptions few;
  few.max_iterations = 5;
  const EstimateReport cut = maximize(m, f, std::vector<double>{0.0, 1.0}, few);
  CHECK(cut.status == FitStatus::NotConverged);
  CHECK(!cut.warnings.empty());

  const Objective nowhere = [](const ParameterValues&) { return std::nan(""); };
  CHECK_THROWS_AS(maximize(m, nowhere, std::vector<double>{0.0, 1.0}), DegenerateSimplex);
}

TEST_CASE("leading-order fit recovers the Euler volatility estimate") {
  const ObservationSeries s = mrou_path(500, 1.0 / 52, 11);
  const ModelSpec m = benchmark_model(BenchmarkKind::MROU);
  // kappa and alpha do not enter the leading term; pin them in tiny boxes
  FitOptions opt;
  opt.box = {{"kappa", {0.49, 0.51}}, {"alpha", {0.059, 0.061}}};
  const EstimateReport r = fit(m, s, 0, std::vector<double>{0.5, 0.06, 0.05}, opt);
  double ss = 0.0;
  for (std::size_t i = 1; i < s.x.size(); ++i) ss += (s.x[i][0] - s.x[i - 1][0]) * (s.x[i][0] - s.x[i - 1][0]);
  const double sigma = std::sqrt(ss / (500 * s.delta));
  CHECK(r.converged());
  CHECK(std::abs(r.theta[2] - sigma) <= 1e-6 * sigma);
  CHECK(!r.warnings.empty());  // order below dimension
}

TEST_CASE("exact fits: closed form, stationarity and determinism") {
  const ObservationSeries s = mrou_path(1000, 1.0 / 52, 5);
  const EstimateReport ex = exact_mle(BenchmarkKind::MROU, s);
  CHECK(ex.converged());
  const auto ar = regression_start(BenchmarkKind::MROU, s);
  for (std::size_t i = 0; i < 3; ++i) CHECK(ex.theta[i] == doctest::Approx(ar[i]).epsilon(1e-6));

  const ModelSpec m = benchmark_model(BenchmarkKind::MROU);
  const Objective f = [&](const ParameterValues& t) { return exact_loglik(BenchmarkKind::MROU, t, s); };
  const EstimateReport again = maximize(m, f, ex.theta);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(again.theta[i] - ex.theta[i]) <= 1e-6 * std::abs(ex.theta[i]));

  const EstimateReport a = fit(m, s, 3, ex.theta);
  const EstimateReport b = fit(m, s, 3, ex.theta);
  CHECK(a.theta == b.theta);
  CHECK(a.loglik == b.loglik);
  CHECK(a.iterations == b.iterations);
  REQUIRE(a.standard_errors);
  // observed-information errors are close to the asymptotic ones
  const auto asym = asymptotic_stddev(fisher_information_mrou(benchmark_preset(BenchmarkKind::MROU), 1.0 / 52), 1000);
  CHECK((*a.standard_errors)[1] == doctest::Approx(asym[1]).epsilon(0.5));
  CHECK((*a.standard_errors)[2] == doctest::Approx(asym[2]).epsilon(0.2));
}

TEST_CASE("restarts never lose ground") {
  const ObservationSeries s = mrou_path(300, 1.0 / 52, 9);
  const ModelSpec m = benchmark_model(BenchmarkKind::MROU);
  FitOptions opt;
  opt.restarts = 2;
  opt.standard_errors = false;
  const EstimateReport a = fit(m, s, 2, std::vector<double>{0.3, 0.05, 0.05});
  const EstimateReport b = fit(m, s, 2, std::vector<double>{0.3, 0.05, 0.05}, opt);
  CHECK(b.loglik >= a.loglik - 1e-10);
  CHECK(b.restarts >= 1);
}

TEST_CASE("Fisher information") {
  const ParameterValues th = benchmark_preset(BenchmarkKind::MROU);
  const auto w = asymptotic_stddev(fisher_information_mrou(th, 1.0 / 52), 1000);
  CHECK(w[0] == doctest::Approx(0.229136).epsilon(1e-4 / 0.229136));
  CHECK(w[1] == doctest::Approx(0.013682).epsilon(1e-6 / 0.013682));
  CHECK(w[2] == doctest::Approx(0.000674).epsilon(1e-6 / 0.000674));
  const auto q = asymptotic_stddev(fisher_information_mrou(th, 1.0 / 12), 1000);
  CHECK(q[0] == doctest::Approx(0.111867).epsilon(1e-6 / 0.111867));
  CHECK(q[1] == doctest::Approx(0.006573).epsilon(1e-6 / 0.006573));
  CHECK(q[2] == doctest::Approx(0.000685).epsilon(1e-6 / 0.000685));
  ParameterValues bad = th;
  bad["kappa"] = -0.1;
  CHECK_THROWS_AS(fisher_information_mrou(bad, 0.1), InvalidArgument);

  const ParameterValues d = benchmark_preset(BenchmarkKind::DMROU);
  const Eigen::MatrixXd i = fisher_information_dmrou(d, 1.0 / 52);
  CHECK((i - i.transpose()).norm() == 0.0);
  CHECK(i.llt().info() == Eigen::Success);

  // with no coupling the first factor is an MROU with unit dispersion
  ParameterValues dec = d;
  dec["kappa21"] = 0.0;
  dec["alpha1"] = 0.3;
  const Eigen::MatrixXd id = fisher_information_dmrou(dec, 0.1);
  const Eigen::MatrixXd im = fisher_information_mrou({{"kappa", 5.0}, {"alpha", 0.3}, {"sigma", 1.0}}, 0.1);
  CHECK(id(0, 0) == doctest::Approx(im(0, 0)).epsilon(1e-6));
  CHECK(id(3, 3) == doctest::Approx(im(1, 1)).epsilon(1e-6));
  CHECK(std::abs(id(0, 3)) < 1e-6 * im(0, 0));
}

TEST_CASE("observation CSV") {
  std::istringstream ok("t,x1,x2\n0,1,2\n0.5,1.5,2.5\n1.0,2,3\n");
  const ObservationSeries s = read_series_csv(ok);
  CHECK(s.delta == 0.5);
  CHECK(s.n() == 2);
  CHECK(s.x[2] == std::vector<double>{2.0, 3.0});
  std::ostringstream out;
  write_series_csv(out, s);
  std::istringstream back(out.str());
  CHECK(read_series_csv(back).x == s.x);

  auto error_at = [](const std::string& text) {
    std::istringstream in(text);
    try {
      read_series_csv(in);
    } catch (const ParseError& e) {
      return std::pair{e.line(), e.column()};
    }
    return std::pair<std::size_t, std::size_t>{0, 0};
  };
  CHECK(error_at("time,x1\n0,1\n1,2\n") == std::pair<std::size_t, std::size_t>{1, 1});
  CHECK(error_at("t,x1\n0,1\n1,abc\n") == std::pair<std::size_t, std::size_t>{3, 3});
  CHECK(error_at("t,x1\n0,1\n1,2\n2.5,3\n") == std::pair<std::size_t, std::size_t>{4, 1});
  CHECK(error_at("t,x1\n0,1\n0,2\n") == std::pair<std::size_t, std::size_t>{3, 1});
  CHECK(error_at("t,x1,x3\n") == std::pair<std::size_t, std::size_t>{1, 6});
}
