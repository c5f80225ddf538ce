#include "difflik/expansion.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include "difflik/errors.hpp"
#include "difflik/parallel.hpp"

namespace difflik {

std::vector<Expr> drift_correction_b(const ModelSpec& model) {
  const std::size_t m = model.m;
  std::vector<Expr> b(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<Expr> corr;
    for (std::size_t k = 0; k < m; ++k) {
      for (std::size_t j = 0; j < m; ++j) {
        corr.push_back(model.sigma[k][j] * differentiate(model.sigma[i][j], static_cast<int>(k)));
      }
    }
    b[i] = model.mu[i] - Expr::number(make_rational(1, 2)) * Expr::sum(std::move(corr));
  }
  return b;
}

std::vector<Expr> apply_operator(int j, std::span<const Expr> phi, const ModelSpec& model, std::span<const Expr> b) {
  if (j < 0 || j > static_cast<int>(model.m)) throw InvalidArgument("operator index out of range");
  std::vector<Expr> out;
  out.reserve(phi.size());
  for (const Expr& f : phi) {
    std::vector<Expr> terms;
    for (std::size_t i = 0; i < model.m; ++i) {
      const Expr& coeff = j == 0 ? b[i] : model.sigma[i][static_cast<std::size_t>(j - 1)];
      if (coeff.is_zero()) continue;
      terms.push_back(coeff * differentiate(f, static_cast<int>(i)));
    }
    out.push_back(Expr::sum(std::move(terms)));
  }
  return out;
}

CoefficientTable::CoefficientTable(ModelSpec model) : model_(std::move(model)) {
  model_.validate();
  b_ = drift_correction_b(model_);
}

Expr CoefficientTable::C(const MultiIndex& i, int r) const {
  if (i.empty()) throw InvalidArgument("C needs a nonempty multi-index");
  if (r < 1 || r > static_cast<int>(model_.m)) throw InvalidArgument("row index out of range");
  if (static_cast<std::size_t>(i.max_entry()) > model_.m) throw InvalidArgument("multi-index exceeds dimension");
  const std::string key = i.key() + '\xff' + static_cast<char>(r);
  if (auto hit = memo_.find(key)) return *hit;
  Expr value;
  if (i.size() == 1) {
    value = i[0] == 0 ? b_[static_cast<std::size_t>(r - 1)]
                      : model_.sigma[static_cast<std::size_t>(r - 1)][static_cast<std::size_t>(i[0] - 1)];
  } else {
    std::vector<int> head = i.entries();
    const int last = head.back();
    head.pop_back();
    const Expr inner = C(MultiIndex(head), r);
    value = apply_operator(last, std::span<const Expr>(&inner, 1), model_, b_)[0];
  }
  return memo_.insert(key, std::move(value));
}

std::vector<SkTriple> enumerate_Sk(int k, int m) {
  if (k < 1) throw InvalidArgument("S_k needs k >= 1");
  if (m < 1) throw InvalidArgument("dimension must be positive");
  std::vector<SkTriple> out;
  for (int l = 1; l <= k; ++l) {
    // compositions of k into l parts, lexicographic
    std::vector<std::vector<int>> comps;
    std::vector<int> cur;
    std::function<void(int)> rec = [&](int left) {
      if (static_cast<int>(cur.size()) == l) {
        if (left == 0) comps.push_back(cur);
        return;
      }
      const int slots = l - static_cast<int>(cur.size());
      for (int v = 1; v <= left - (slots - 1); ++v) {
        cur.push_back(v);
        rec(left - v);
        cur.pop_back();
      }
    };
    rec(k);
    std::vector<int> r(static_cast<std::size_t>(l), 1);
    for (;;) {
      for (const auto& c : comps) out.push_back({r, c});
      int p = l - 1;
      while (p >= 0 && r[static_cast<std::size_t>(p)] == m) r[static_cast<std::size_t>(p--)] = 1;
      if (p < 0) break;
      ++r[static_cast<std::size_t>(p)];
    }
  }
  return out;
}

// --- plan ---------------------------------------------------------------------

namespace {

std::vector<double> dense(const RationalPoly& p) {
  std::vector<double> out(p.degree() + 1, 0.0);
  for (const auto& [e, c] : p.terms()) out[e[0]] = c.get_d();
  return out;
}

}  // namespace

ExpansionPlan::ExpansionPlan(const ModelSpec& model, int order)
    : table_(std::make_shared<CoefficientTable>(model)), order_(order) {
  if (order < 0 || order > kMaxOrder) {
    throw InvalidArgument("expansion order must be in 0.." + std::to_string(kMaxOrder));
  }
  const std::size_t m = model.m;
  std::vector<Expr> outputs;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) outputs.push_back(model.sigma[i][j]);
  }
  for (const Expr& e : table_->b()) outputs.push_back(e);

  struct Pair {
    MultiIndex i;
    int r;
    int j;
    int slot;
  };
  std::vector<Pair> pairs;
  for (int n = 2; n <= order + 1; ++n) {
    for (const MultiIndex& i : indices_with_norm(n, static_cast<int>(m))) {
      for (int r = 0; r < static_cast<int>(m); ++r) {
        Expr c = table_->C(i, r + 1);
        if (c.is_zero()) continue;
        const int slot = static_cast<int>(slot_index_.size());
        slot_index_.push_back(i);
        slot_row_.push_back(r);
        outputs.push_back(std::move(c));
        pairs.push_back({i, r, n - 1, slot});
      }
    }
  }
  tape_ = Tape(outputs);

  groups_.assign(static_cast<std::size_t>(order) + 1, {});
  max_degree_.assign(static_cast<std::size_t>(order) + 1, 0);
  const RationalPoly y = RationalPoly::variable(1, 0);
  for (int k = 1; k <= order; ++k) {
    std::map<std::pair<int, std::vector<int>>, std::vector<Entry>> buckets;
    std::vector<std::size_t> chosen;
    std::function<void(std::size_t, int)> rec = [&](std::size_t start, int left) {
      if (left == 0) {
        Entry entry;
        std::vector<int> rows;
        Rational denom = 1;
        std::size_t run = 0;
        for (std::size_t w = 0; w < chosen.size(); ++w) {
          const Pair& p = pairs[chosen[w]];
          entry.factors.push_back({p.slot, p.r});
          entry.indices.push_back(p.i);
          rows.push_back(p.r);
          run = (w > 0 && chosen[w] == chosen[w - 1]) ? run + 1 : 1;
          denom *= static_cast<long>(run);
        }
        const int l = static_cast<int>(chosen.size());
        entry.coefficient = Rational(l % 2 ? -1 : 1) / denom;
        const RationalPoly p = conditional_product_expectation(entry.indices, m);
        if (p.is_zero()) return;
        entry.p = p.convert<double>();
        if (m == 1) {
          for (int s = 0; s < 2; ++s) {
            RationalPoly u = p.compose_linear({{Rational(s == 0 ? 1 : -1)}});
            for (int w = 0; w < l; ++w) u = u.diff(0) - u * y;
            u *= entry.coefficient;
            entry.t[static_cast<std::size_t>(s)] = dense(u);
            max_degree_[static_cast<std::size_t>(k)] = std::max<std::size_t>(max_degree_[static_cast<std::size_t>(k)], u.degree());
          }
        }
        std::sort(rows.begin(), rows.end());
        buckets[{l, rows}].push_back(std::move(entry));
        return;
      }
      for (std::size_t q = start; q < pairs.size(); ++q) {
        if (pairs[q].j > left) continue;
        chosen.push_back(q);
        rec(q, left - pairs[q].j);
        chosen.pop_back();
      }
    };
    rec(0, k);
    for (auto& [key, entries] : buckets) {
      groups_[static_cast<std::size_t>(k)].push_back({key.first, key.second, std::move(entries)});
    }
  }
}

std::size_t ExpansionPlan::num_entries() const {
  std::size_t n = 0;
  for (const auto& gs : groups_) {
    for (const auto& g : gs) n += g.entries.size();
  }
  return n;
}

std::shared_ptr<const ExpansionPlan> ExpansionPlan::get(const ModelSpec& model, int order) {
  static ConcurrentMemo<std::string, std::shared_ptr<const ExpansionPlan>> cache;
  const std::string key = model.signature() + "#" + std::to_string(order);
  if (auto hit = cache.find(key)) return *hit;
  return cache.insert(key, std::make_shared<const ExpansionPlan>(model, order));
}

// --- context --------------------------------------------------------------------

ExpansionContext::ExpansionContext(std::shared_ptr<const ExpansionPlan> plan, const ParameterValues& theta,
                                   std::span<const double> x0)
    : plan_(std::move(plan)), theta_(theta), x0_(x0.begin(), x0.end()) {
  init(plan_->tape().bind(theta_));
}

ExpansionContext::ExpansionContext(std::shared_ptr<const ExpansionPlan> plan, const BoundTape& bound,
                                   const ParameterValues& theta, std::span<const double> x0)
    : plan_(std::move(plan)), theta_(theta), x0_(x0.begin(), x0.end()) {
  init(bound);
}

void ExpansionContext::init(const BoundTape& bound) {
  const std::size_t m = plan_->dims();
  if (x0_.size() != m) throw InvalidArgument("x0 has the wrong dimension");
  if (!plan_->model().in_state_space(x0_)) throw DomainError("x0 lies outside the state space");
  std::vector<double> vals(bound.num_outputs());
  bound.eval(x0_, vals);
  sigma_.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  b_.resize(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) sigma_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = vals[i * m + j];
    b_(static_cast<Eigen::Index>(i)) = vals[m * m + i];
  }
  c_.assign(vals.begin() + static_cast<std::ptrdiff_t>(m * m + m), vals.end());

  d_ = sigma_.rowwise().norm().cwiseInverse();
  for (Eigen::Index i = 0; i < d_.size(); ++i) {
    if (!std::isfinite(d_(i))) throw DomainError("dispersion row " + std::to_string(i + 1) + " vanishes at x0");
  }
  det_d_ = d_.prod();
  big_sigma_ = d_.asDiagonal() * sigma_ * sigma_.transpose() * d_.asDiagonal();
  det_big_sigma_ = big_sigma_.determinant();
  if (!(det_big_sigma_ >= kMinDetSigma)) {
    throw DomainError("covariance of the leading Gaussian term is degenerate at x0 (det " +
                      std::to_string(det_big_sigma_) + "); the dispersion matrix must be nonsingular");
  }
  big_sigma_inv_ = big_sigma_.inverse();
  m_ = sigma_.inverse() * d_.cwiseInverse().asDiagonal();
  log_norm_ = -0.5 * static_cast<double>(m) * std::log(2.0 * std::numbers::pi) - 0.5 * std::log(det_big_sigma_);
}

Eigen::VectorXd ExpansionContext::standardize(double delta, std::span<const double> x) const {
  if (!(delta > 0.0)) throw InvalidArgument("time step must be positive");
  if (x.size() != x0_.size()) throw InvalidArgument("x has the wrong dimension");
  Eigen::VectorXd y(static_cast<Eigen::Index>(x.size()));
  const double eps = std::sqrt(delta);
  for (std::size_t i = 0; i < x.size(); ++i) y(static_cast<Eigen::Index>(i)) = d_(static_cast<Eigen::Index>(i)) * (x[i] - x0_[i]) / eps;
  return y;
}

double ExpansionContext::log_phi(const Eigen::VectorXd& y) const {
  return log_norm_ - 0.5 * y.dot(big_sigma_inv_ * y);
}

double coefficient_C(const MultiIndex& i, int r, const ExpansionContext& ctx) {
  return eval(ctx.plan().coefficients().C(i, r), ctx.x0(), ctx.theta());
}

RealPoly apply_D(const RealPoly& u, int r, const Eigen::MatrixXd& sigma_inv) {
  const std::size_t m = u.dims();
  RealPoly lin(m);
  for (std::size_t j = 0; j < m; ++j) {
    lin += RealPoly::variable(m, j) * sigma_inv(r, static_cast<Eigen::Index>(j));
  }
  return u.diff(static_cast<std::size_t>(r)) - u * lin;
}

namespace {

std::vector<std::vector<double>> matrix_rows(const Eigen::MatrixXd& a) {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(a.rows()), std::vector<double>(static_cast<std::size_t>(a.cols())));
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = a(i, j);
  }
  return rows;
}

}  // namespace

RealPoly correction_Q(const SkTriple& triple, const ExpansionContext& ctx) {
  const std::size_t m = ctx.dims();
  const std::size_t l = triple.l();
  if (l == 0 || triple.j.size() != l) throw InvalidArgument("malformed S_k triple");
  std::vector<std::vector<MultiIndex>> choices;
  for (std::size_t w = 0; w < l; ++w) {
    const int r = triple.r[w];
    if (r < 1 || r > static_cast<int>(m)) throw InvalidArgument("row index out of range");
    choices.push_back(indices_with_norm(triple.j[w] + 1, static_cast<int>(m)));
  }
  RealPoly acc(m);
  std::vector<std::size_t> pick(l, 0);
  for (;;) {
    double weight = 1.0;
    std::vector<MultiIndex> idx;
    for (std::size_t w = 0; w < l && weight != 0.0; ++w) {
      const MultiIndex& i = choices[w][pick[w]];
      weight *= coefficient_C(i, triple.r[w], ctx) * ctx.D()(triple.r[w] - 1);
      idx.push_back(i);
    }
    if (weight != 0.0) acc += conditional_product_expectation(idx, m).convert<double>() * weight;
    std::size_t w = 0;
    while (w < l && pick[w] + 1 == choices[w].size()) pick[w++] = 0;
    if (w == l) break;
    ++pick[w];
  }
  RealPoly u = acc.compose_linear(matrix_rows(ctx.M()));
  for (std::size_t w = l; w-- > 0;) u = apply_D(u, triple.r[w] - 1, ctx.Sigma_inv());
  double scale = (l % 2) ? -1.0 : 1.0;
  for (std::size_t w = 2; w <= l; ++w) scale /= static_cast<double>(w);
  return u * scale;
}

// --- expansion ------------------------------------------------------------------

double log_series(std::span<const double> a, double eps) {
  const std::size_t n = a.size();
  if (n <= 1) return 0.0;
  std::vector<double> lam(n, 0.0);
  double total = 0.0;
  double power = 1.0;
  for (std::size_t k = 1; k < n; ++k) {
    double s = a[k];
    for (std::size_t j = 1; j < k; ++j) s -= static_cast<double>(j) * lam[j] * a[k - j] / static_cast<double>(k);
    lam[k] = s;
    power *= eps;
    total += s * power;
  }
  return total;
}

DensityExpansion::DensityExpansion(ExpansionContext ctx, std::vector<CorrectionTerm> terms)
    : ctx_(std::move(ctx)), terms_(std::move(terms)) {}

double DensityExpansion::omega(int k, const Eigen::VectorXd& y) const {
  const RealPoly& q = terms_.at(static_cast<std::size_t>(k)).q;
  return q.eval(std::span<const double>(y.data(), static_cast<std::size_t>(y.size()))) * std::exp(ctx_.log_phi(y));
}

double DensityExpansion::evaluate(double delta, std::span<const double> x) const {
  const Eigen::VectorXd y = ctx_.standardize(delta, x);
  const std::span<const double> ys(y.data(), static_cast<std::size_t>(y.size()));
  const double eps = std::sqrt(delta);
  double s = 0.0;
  double power = 1.0;
  for (const auto& t : terms_) {
    s += t.q.eval(ys) * power;
    power *= eps;
  }
  const double m = static_cast<double>(ctx_.dims());
  return std::pow(delta, -0.5 * m) * ctx_.det_D() * std::exp(ctx_.log_phi(y)) * s;
}

double DensityExpansion::log_density(double delta, std::span<const double> x) const {
  const Eigen::VectorXd y = ctx_.standardize(delta, x);
  const std::span<const double> ys(y.data(), static_cast<std::size_t>(y.size()));
  std::vector<double> a(terms_.size(), 0.0);
  for (std::size_t k = 1; k < terms_.size(); ++k) a[k] = terms_[k].q.eval(ys);
  const double m = static_cast<double>(ctx_.dims());
  return -0.5 * m * std::log(delta) + std::log(ctx_.det_D()) + ctx_.log_phi(y) + log_series(a, std::sqrt(delta));
}

DensityExpansion build_expansion(const ExpansionContext& ctx, int order) {
  const ExpansionPlan& plan = ctx.plan();
  if (order < 0 || order > plan.order()) {
    throw InvalidArgument("order " + std::to_string(order) + " exceeds the plan order " + std::to_string(plan.order()));
  }
  const std::size_t m = ctx.dims();
  std::vector<CorrectionTerm> terms;
  terms.push_back({0, RealPoly::constant(m, 1.0)});
  const auto& c = ctx.slot_values();
  const Eigen::VectorXd& d = ctx.D();
  auto weight = [&](const ExpansionPlan::Entry& e) {
    double w = 1.0;
    for (const auto& f : e.factors) w *= c[static_cast<std::size_t>(f.slot)] * d(f.r);
    return w;
  };
  const auto mrows = matrix_rows(ctx.M());
  for (int k = 1; k <= order; ++k) {
    const auto& groups = plan.groups(k);
    RealPoly q(m);
    if (m == 1) {
      const std::size_t s = ctx.M()(0, 0) > 0 ? 0 : 1;
      std::vector<double> coeffs(plan.max_degree(k) + 1, 0.0);
      for (const auto& g : groups) {
        for (const auto& e : g.entries) {
          const double w = weight(e);
          const auto& t = e.t[s];
          for (std::size_t p = 0; p < t.size(); ++p) coeffs[p] += w * t[p];
        }
      }
      for (std::size_t p = 0; p < coeffs.size(); ++p) q.add_term(Exponents{static_cast<std::uint16_t>(p)}, coeffs[p]);
    } else {
      std::vector<RealPoly> parts(groups.size(), RealPoly(m));
      parallel_for(groups.size(), [&](std::size_t gi) {
        const auto& g = groups[gi];
        RealPoly r(m);
        for (const auto& e : g.entries) r += e.p * (e.coefficient.get_d() * weight(e));
        if (r.is_zero()) return;
        RealPoly u = r.compose_linear(mrows);
        for (auto it = g.rows.rbegin(); it != g.rows.rend(); ++it) u = apply_D(u, *it, ctx.Sigma_inv());
        parts[gi] = std::move(u);
      });
      for (const auto& p : parts) q += p;
    }
    terms.push_back({k, std::move(q)});
  }
  return DensityExpansion(ctx, std::move(terms));
}

double evaluate_density(const DensityExpansion& e, double delta, std::span<const double> x) {
  return e.evaluate(delta, x);
}

DensityExpansion expand(const ModelSpec& model, const ParameterValues& theta, std::span<const double> x0, int order) {
  auto plan = ExpansionPlan::get(model, order);
  return build_expansion(ExpansionContext(plan, theta, x0), order);
}

// --- Lamperti ---------------------------------------------------------------------

ModelSpec lamperti_model(const ModelSpec& model) {
  if (!model.lamperti) throw InvalidArgument("model '" + model.name + "' declares no Lamperti transform");
  if (model.m != 1) throw InvalidArgument("a Lamperti transform is only supported for one-dimensional models");
  const Expr& g = model.lamperti->gamma;
  const Expr gp = differentiate(g, 0);
  const Expr gpp = differentiate(gp, 0);
  const Expr& mu = model.mu[0];
  const Expr& s = model.sigma[0][0];
  const Expr drift = gp * mu + Expr::number(make_rational(1, 2)) * gpp * s * s;
  const Expr disp = gp * s;
  ModelSpec z = model;
  z.name = model.name + "-lamperti";
  z.mu = {substitute(drift, 0, model.lamperti->gamma_inv)};
  z.sigma = {{substitute(disp, 0, model.lamperti->gamma_inv)}};
  z.state_space = {Interval{}};
  z.lamperti.reset();
  return z;
}

LampertiExpansion::LampertiExpansion(const ModelSpec& model, const ParameterValues& theta, double x0, int order)
    : theta_(theta),
      gamma_(model.lamperti ? model.lamperti->gamma : throw InvalidArgument("model declares no Lamperti transform")),
      gamma_prime_(differentiate(gamma_, 0)),
      z_([&] {
        if (!model.in_state_space(std::span<const double>(&x0, 1))) throw DomainError("x0 lies outside the state space");
        const double z0 = eval(gamma_, std::span<const double>(&x0, 1), theta);
        return expand(lamperti_model(model), theta, std::span<const double>(&z0, 1), order);
      }()) {}

double LampertiExpansion::gamma(double x) const { return eval(gamma_, std::span<const double>(&x, 1), theta_); }
double LampertiExpansion::gamma_prime(double x) const {
  return eval(gamma_prime_, std::span<const double>(&x, 1), theta_);
}

double LampertiExpansion::evaluate(double delta, double x) const {
  const double z = gamma(x);
  return std::abs(gamma_prime(x)) * z_.evaluate(delta, std::span<const double>(&z, 1));
}

double LampertiExpansion::log_density(double delta, double x) const {
  const double z = gamma(x);
  return std::log(std::abs(gamma_prime(x))) + z_.log_density(delta, std::span<const double>(&z, 1));
}

LampertiExpansion lamperti_wrap(const ModelSpec& model, const ParameterValues& theta, double x0, int order) {
  if (!model.lamperti) throw InvalidArgument("model '" + model.name + "' declares no Lamperti transform");
  const Expr gp = differentiate(model.lamperti->gamma, 0);
  const Interval iv = model.state_space.at(0);
  int sign = 0;
  for (int k = 1; k < 128; ++k) {
    const double u = k / 128.0;
    double x = 0.0;
    if (std::isfinite(iv.lo) && std::isfinite(iv.hi)) {
      x = iv.lo + u * (iv.hi - iv.lo);
    } else if (std::isfinite(iv.lo)) {
      x = iv.lo + u / (1.0 - u);
    } else if (std::isfinite(iv.hi)) {
      x = iv.hi - u / (1.0 - u);
    } else {
      x = std::log(u / (1.0 - u));
    }
    double v = 0.0;
    try {
      v = eval(gp, std::span<const double>(&x, 1), theta);
    } catch (const DomainError&) {
      throw InvalidArgument("Lamperti transform is not differentiable on the state space");
    }
    const int s = v > 0 ? 1 : (v < 0 ? -1 : 0);
    if (s == 0 || (sign != 0 && s != sign)) {
      throw InvalidArgument("Lamperti transform is not strictly monotone on the state space");
    }
    sign = s;
  }
  return LampertiExpansion(model, theta, x0, order);
}

}  // namespace difflik
