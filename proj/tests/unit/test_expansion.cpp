#include <cmath>
#include <numbers>
#include <vector>

#include "difflik/errors.hpp"
#include "difflik/expansion.hpp"
#include "difflik/quadrature.hpp"
#include "doctest.h"
#include "support/models.hpp"

using namespace difflik;
using difflik::testing::model;
using difflik::testing::preset;

namespace {

double at(const Expr& e, double x, const ParameterValues& theta) { return eval(e, std::span<const double>(&x, 1), theta); }

// E[q(Y)] for Y ~ N(0, Sigma), tensor Gauss-Hermite with n nodes per axis.
double gaussian_mean(const RealPoly& q, const Eigen::MatrixXd& sigma, std::size_t n = 64) {
  const GaussHermite gh = gauss_hermite(n);
  const Eigen::MatrixXd L = sigma.llt().matrixL();
  const std::size_t m = static_cast<std::size_t>(sigma.rows());
  std::vector<std::size_t> idx(m, 0);
  double total = 0.0;
  for (;;) {
    Eigen::VectorXd z(static_cast<Eigen::Index>(m));
    double w = 1.0;
    for (std::size_t d = 0; d < m; ++d) {
      z(static_cast<Eigen::Index>(d)) = gh.nodes[idx[d]];
      w *= gh.weights[idx[d]];
    }
    const Eigen::VectorXd y = L * z;
    total += w * q.eval(std::span<const double>(y.data(), m));
    std::size_t d = 0;
    while (d < m && ++idx[d] == n) idx[d++] = 0;
    if (d == m) break;
  }
  return total;
}

double max_coeff_diff(const RealPoly& a, const RealPoly& b) {
  double worst = 0.0;
  const RealPoly d = a - b;
  for (const auto& [e, c] : d.terms()) worst = std::max(worst, std::abs(c));
  return worst;
}

double max_coeff(const RealPoly& a) {
  double worst = 0.0;
  for (const auto& [e, c] : a.terms()) worst = std::max(worst, std::abs(c));
  return worst;
}

const ModelSpec kIdentityLamperti = parse_model(R"toml(
name = "mrou-id"
dimension = 1
parameters = ["kappa", "alpha", "sigma"]
[drift]
mu_1 = "kappa*(alpha - x1)"
[dispersion]
sigma_1_1 = "sigma"
[lamperti]
gamma = "x1"
gamma_inv = "x1"
)toml");

}  // namespace

TEST_CASE("drift correction") {
  const ModelSpec sqr = model("sqr");
  const ParameterValues th = preset(sqr);
  const auto b = drift_correction_b(sqr);
  for (double x : {0.01, 0.06, 0.3}) {
    CHECK(at(b[0], x, th) == doctest::Approx(0.5 * (0.06 - x) - 0.15 * 0.15 / 4).epsilon(1e-14));
  }
  const ModelSpec mrou = model("mrou");
  CHECK(drift_correction_b(mrou)[0] == mrou.mu[0]);
  const ModelSpec dm = model("dmrou");
  const auto bd = drift_correction_b(dm);
  CHECK(bd[0] == dm.mu[0]);
  CHECK(bd[1] == dm.mu[1]);
}

TEST_CASE("generator operators") {
  const ModelSpec mrou = model("mrou");
  const auto b = drift_correction_b(mrou);
  const Expr x = Expr::variable(0);
  CHECK(apply_operator(1, std::span<const Expr>(&x, 1), mrou, b)[0] == Expr::parameter("sigma"));
  CHECK(apply_operator(0, std::span<const Expr>(&x, 1), mrou, b)[0] == mrou.mu[0]);
  const ModelSpec sqr = model("sqr");
  const auto bs = drift_correction_b(sqr);
  const Expr s = sqr.sigma[0][0];
  const Expr a1 = apply_operator(1, std::span<const Expr>(&s, 1), sqr, bs)[0];
  CHECK(a1 == Expr::parameter("sigma") * Expr::parameter("sigma") / Expr::number(2));
  CHECK_THROWS_AS(apply_operator(2, std::span<const Expr>(&s, 1), sqr, bs), InvalidArgument);
}

TEST_CASE("coefficients C") {
  const ModelSpec mrou = model("mrou");
  const ParameterValues th = preset(mrou);
  const double x0 = 0.1;
  ExpansionContext ctx(ExpansionPlan::get(mrou, 2), th, std::span<const double>(&x0, 1));
  CHECK(coefficient_C(MultiIndex{1}, 1, ctx) == doctest::Approx(0.03));
  CHECK(coefficient_C(MultiIndex{0}, 1, ctx) == doctest::Approx(0.5 * (0.06 - 0.1)));
  CHECK(coefficient_C(MultiIndex{0, 0}, 1, ctx) == doctest::Approx(-0.5 * 0.5 * (0.06 - 0.1)));
  CHECK(coefficient_C(MultiIndex{1, 1}, 1, ctx) == 0.0);

  const ModelSpec sqr = model("sqr");
  const double s0 = 0.06;
  ExpansionContext cs(ExpansionPlan::get(sqr, 2), preset(sqr), std::span<const double>(&s0, 1));
  CHECK(coefficient_C(MultiIndex{1, 1}, 1, cs) == doctest::Approx(0.01125).epsilon(1e-14));

  // nested finite differences of A_0 A_1 sigma for SQR
  const double k = 0.5, a = 0.06, sg = 0.15;
  auto sig = [&](double x) { return sg * std::sqrt(x); };
  auto b = [&](double x) { return k * (a - x) - sg * sg / 4; };
  auto a1 = [&](double x) {
    const double h = 1e-5;
    return sig(x) * (sig(x + h) - sig(x - h)) / (2 * h);
  };
  const double h = 1e-4;
  const double fd = b(s0) * (a1(s0 + h) - a1(s0 - h)) / (2 * h);
  CHECK(coefficient_C(MultiIndex{1, 1, 0}, 1, cs) == doctest::Approx(fd).epsilon(1e-5));
}

TEST_CASE("index sets S_k") {
  const auto s1 = enumerate_Sk(1, 2);
  REQUIRE(s1.size() == 2);
  CHECK(s1[0] == SkTriple{{1}, {1}});
  CHECK(s1[1] == SkTriple{{2}, {1}});
  const auto s2 = enumerate_Sk(2, 1);
  REQUIRE(s2.size() == 2);
  CHECK(s2[0] == SkTriple{{1}, {2}});
  CHECK(s2[1] == SkTriple{{1, 1}, {1, 1}});
  CHECK(enumerate_Sk(2, 2).size() == 6);
  // brute force count: sum over compositions of m^l = m (m+1)^{k-1}
  for (int m = 1; m <= 3; ++m) {
    for (int k = 1; k <= 5; ++k) {
      CHECK(enumerate_Sk(k, m).size() == static_cast<std::size_t>(m * std::pow(m + 1, k - 1)));
    }
  }
  CHECK_THROWS_AS(enumerate_Sk(0, 1), InvalidArgument);
}

TEST_CASE("leading term") {
  const ModelSpec mrou = model("mrou");
  const double x0 = 0.06;
  const auto e = expand(mrou, preset(mrou), std::span<const double>(&x0, 1), 0);
  const double delta = 1.0 / 52;
  const double peak = e.evaluate(delta, std::span<const double>(&x0, 1));
  CHECK(peak == doctest::Approx(1.0 / (0.03 * std::sqrt(2 * std::numbers::pi * delta))).epsilon(1e-14));
  // the rounded reference value 95.87 is good to about three parts in 1e4
  CHECK(peak == doctest::Approx(95.87).epsilon(1e-3));
  for (double h : {0.001, 0.004, 0.01}) {
    const double up = x0 + h, dn = x0 - h;
    CHECK(e.evaluate(delta, std::span<const double>(&up, 1)) ==
          doctest::Approx(e.evaluate(delta, std::span<const double>(&dn, 1))).epsilon(1e-12));
  }

  // two dimensions against a direct quadratic form
  const ModelSpec sk = parse_model(R"toml(
name = "skewed"
dimension = 2
parameters = ["a", "c"]
[drift]
mu_1 = "-x1"
mu_2 = "-a*x2"
[dispersion]
sigma_1_1 = "1"
sigma_1_2 = "c"
sigma_2_2 = "2"
)toml");
  const ParameterValues th{{"a", 2.0}, {"c", 0.7}};
  const std::vector<double> z0{0.1, -0.2};
  const auto e2 = expand(sk, th, z0, 0);
  const auto& ctx = e2.context();
  Eigen::Matrix2d s;
  s << 1, 0.7, 0, 2;
  const Eigen::Vector2d d(1 / std::hypot(1, 0.7), 0.5);
  const Eigen::Matrix2d cov = d.asDiagonal() * s * s.transpose() * d.asDiagonal();
  for (auto [u, v] : {std::pair{0.0, 0.0}, {0.5, -1.2}, {2.0, 1.0}}) {
    Eigen::VectorXd y(2);
    y << u, v;
    const double direct = std::exp(-0.5 * y.dot(cov.inverse() * y)) / (2 * std::numbers::pi * std::sqrt(cov.determinant()));
    CHECK(std::abs(e2.omega(0, y) - direct) < 1e-14);
  }
  CHECK(std::abs(ctx.Sigma()(0, 0) - 1.0) < 1e-15);
}

TEST_CASE("unit dispersion gives identity Sigma and D") {
  const ModelSpec dm = model("dmrou");
  const std::vector<double> x0{0.3, -0.1};
  ExpansionContext ctx(ExpansionPlan::get(dm, 1), preset(dm), x0);
  CHECK(ctx.Sigma() == Eigen::MatrixXd::Identity(2, 2));
  CHECK(ctx.D() == Eigen::VectorXd::Ones(2));
  CHECK(ctx.det_Sigma() == 1.0);
}

TEST_CASE("degenerate covariance is refused") {
  const ModelSpec deg = parse_model(R"toml(
name = "degenerate"
dimension = 2
parameters = ["s"]
[drift]
mu_1 = "-x1"
mu_2 = "-x2"
[dispersion]
sigma_1_1 = "s"
sigma_1_2 = "s"
sigma_2_1 = "s"
sigma_2_2 = "s"
)toml");
  const std::vector<double> x0{0.0, 0.0};
  CHECK_THROWS_AS(expand(deg, {{"s", 1.0}}, x0, 1), DomainError);
  const ModelSpec sqr = model("sqr");
  const double bad = -0.1;
  CHECK_THROWS_AS(expand(sqr, preset(sqr), std::span<const double>(&bad, 1), 1), DomainError);
}

TEST_CASE("plan terms equal the defining sum over S_k") {
  struct Case {
    const char* name;
    std::vector<double> x0;
    int order;
  };
  for (const Case& c : {Case{"mrou", {0.1}, 5}, Case{"sqr", {0.08}, 5}, Case{"dmrou", {0.2, -0.3}, 3}}) {
    CAPTURE(c.name);
    const ModelSpec md = model(c.name);
    ParameterValues th = preset(md);
    if (std::string(c.name) == "dmrou") th["alpha1"] = 0.4;
    const auto e = expand(md, th, c.x0, c.order);
    for (int k = 1; k <= c.order; ++k) {
      CAPTURE(k);
      RealPoly sum(md.m);
      for (const auto& t : enumerate_Sk(k, static_cast<int>(md.m))) sum += correction_Q(t, e.context());
      const RealPoly& q = e.terms()[static_cast<std::size_t>(k)].q;
      CHECK(max_coeff_diff(sum, q) <= 1e-12 * std::max(1.0, max_coeff(sum)));
    }
  }
}

TEST_CASE("one-dimensional fast path matches the general path") {
  const ModelSpec sqr = model("sqr");
  const double x0 = 0.05;
  const auto e = expand(sqr, preset(sqr), std::span<const double>(&x0, 1), 6);
  const auto& ctx = e.context();
  const ExpansionPlan& plan = ctx.plan();
  for (int k = 1; k <= 6; ++k) {
    RealPoly general(1);
    for (const auto& g : plan.groups(k)) {
      RealPoly r(1);
      for (const auto& en : g.entries) {
        double w = en.coefficient.get_d();
        for (const auto& f : en.factors) w *= ctx.slot_value(static_cast<std::size_t>(f.slot)) * ctx.D()(f.r);
        r += en.p * w;
      }
      RealPoly u = r.compose_linear({{ctx.M()(0, 0)}});
      for (int row : g.rows) u = apply_D(u, row, ctx.Sigma_inv());
      general += u;
    }
    CHECK(max_coeff_diff(general, e.terms()[static_cast<std::size_t>(k)].q) <= 1e-12 * max_coeff(general));
  }
}

TEST_CASE("corrections carry zero mass") {
  struct Case {
    const char* name;
    std::vector<double> x0;
    int order;
  };
  for (const Case& c : {Case{"mrou", {0.1}, 6}, Case{"sqr", {0.06}, 6}, Case{"dmrou", {0.2, -0.3}, 4}}) {
    CAPTURE(c.name);
    const ModelSpec md = model(c.name);
    const auto e = expand(md, preset(md), c.x0, c.order);
    CHECK(gaussian_mean(e.terms()[0].q, e.context().Sigma()) == doctest::Approx(1.0).epsilon(1e-14));
    for (int k = 1; k <= c.order; ++k) {
      CAPTURE(k);
      CHECK(std::abs(gaussian_mean(e.terms()[static_cast<std::size_t>(k)].q, e.context().Sigma())) < 1e-8);
    }
  }
}

TEST_CASE("log series agrees with the logarithm") {
  const std::vector<double> a{0.0, 0.3, -0.2, 0.5, 0.1};
  for (double eps : {1e-3, 1e-2}) {
    double s = 0.0, p = 1.0;
    for (std::size_t k = 1; k < a.size(); ++k) s += a[k] * (p *= eps);
    CHECK(std::abs(log_series(a, eps) - std::log1p(s)) < 10 * std::pow(eps, 5));
  }
  CHECK(log_series(std::vector<double>{0.0}, 0.5) == 0.0);
  CHECK(log_series(std::vector<double>{0.0, 0.7}, 0.5) == doctest::Approx(0.35));
}

TEST_CASE("Brownian time scaling leaves the density unchanged") {
  const ModelSpec sqr = model("sqr");
  const double x0 = 0.06, delta = 1.0 / 52, c = 4.0;
  const ParameterValues th = preset(sqr);
  ParameterValues scaled = th;
  scaled["kappa"] /= c;
  scaled["sigma"] /= std::sqrt(c);
  const auto e = expand(sqr, th, std::span<const double>(&x0, 1), 4);
  const auto es = expand(sqr, scaled, std::span<const double>(&x0, 1), 4);
  for (double x : {0.04, 0.055, 0.06, 0.07, 0.09}) {
    const double a = e.evaluate(delta, std::span<const double>(&x, 1));
    const double b = es.evaluate(c * delta, std::span<const double>(&x, 1));
    CHECK(std::abs(a - b) <= 1e-12 * std::abs(a));
  }
}

TEST_CASE("Lamperti wrapper") {
  const ModelSpec mrou = model("mrou");
  const ParameterValues th = preset(mrou);
  const double x0 = 0.1, delta = 1.0 / 52;
  for (int J = 0; J <= 4; ++J) {
    const auto direct = expand(mrou, th, std::span<const double>(&x0, 1), J);
    const auto id = lamperti_wrap(kIdentityLamperti, th, x0, J);
    const auto scaled = lamperti_wrap(mrou, th, x0, J);
    for (double x : {0.05, 0.08, 0.1, 0.11, 0.15}) {
      const double p = direct.evaluate(delta, std::span<const double>(&x, 1));
      CHECK(id.evaluate(delta, x) == p);
      CHECK(std::abs(scaled.evaluate(delta, x) - p) <= 1e-12 * std::abs(p));
      CHECK(scaled.log_density(delta, x) == doctest::Approx(direct.log_density(delta, std::span<const double>(&x, 1))).epsilon(1e-12));
    }
  }

  const ModelSpec sqr = model("sqr");
  const ParameterValues ts = preset(sqr);
  const auto zm = lamperti_model(sqr);
  // dZ = ((2 kappa alpha / sigma^2 - 1/2)/Z - kappa Z / 2) dt + dW
  for (double z : {0.5, 2.0, 3.3}) {
    const double expect = (2 * 0.5 * 0.06 / (0.15 * 0.15) - 0.5) / z - 0.5 * z / 2;
    CHECK(at(zm.mu[0], z, ts) == doctest::Approx(expect).epsilon(1e-13));
    CHECK(at(zm.sigma[0][0], z, ts) == doctest::Approx(1.0).epsilon(1e-13));
  }
  const double s0 = 0.06;
  const auto w = lamperti_wrap(sqr, ts, s0, 4);
  // integrate over (0, 0.2) with Gauss-Legendre-free composite Simpson
  const int n = 4000;
  const double lo = 1e-6, hi = 0.2, h = (hi - lo) / n;
  double mass = w.evaluate(delta, lo) + w.evaluate(delta, hi);
  for (int i = 1; i < n; ++i) mass += (i % 2 ? 4 : 2) * w.evaluate(delta, lo + i * h);
  mass *= h / 3;
  CHECK(std::abs(mass - 1.0) < 1e-3);

  const ModelSpec bad = parse_model(R"toml(
name = "bent"
dimension = 1
parameters = ["s"]
[drift]
mu_1 = "-x1"
[dispersion]
sigma_1_1 = "s"
[lamperti]
gamma = "x1^2"
gamma_inv = "sqrt(x1)"
)toml");
  CHECK_THROWS_AS(lamperti_wrap(bad, {{"s", 1.0}}, 0.5, 2), InvalidArgument);
  CHECK_THROWS_AS(lamperti_wrap(model("dmrou"), preset(model("dmrou")), 0.0, 2), InvalidArgument);
}

TEST_CASE("plans are cached and orders validated") {
  const ModelSpec mrou = model("mrou");
  CHECK(ExpansionPlan::get(mrou, 3) == ExpansionPlan::get(mrou, 3));
  CHECK_THROWS_AS(ExpansionPlan(mrou, kMaxOrder + 1), InvalidArgument);
  const double x0 = 0.06;
  ExpansionContext ctx(ExpansionPlan::get(mrou, 2), preset(mrou), std::span<const double>(&x0, 1));
  CHECK_THROWS_AS(build_expansion(ctx, 3), InvalidArgument);
  // only (j), (0^a) and (0^a, j) survive for a linear model with constant dispersion
  const auto& plan = *ExpansionPlan::get(mrou, 5);
  for (std::size_t s = 0; s < plan.num_slots(); ++s) {
    const auto& i = plan.slot_index(s);
    for (std::size_t p = 0; p + 1 < i.size(); ++p) CHECK(i[p] == 0);
  }
}
