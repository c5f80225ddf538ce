#include "difflik/ito.hpp"

#include <algorithm>
#include <functional>

#include "difflik/errors.hpp"
#include "difflik/memo.hpp"

namespace difflik {

// --- MultiIndex -------------------------------------------------------------

MultiIndex::MultiIndex(std::initializer_list<int> entries)
    : MultiIndex(std::span<const int>(entries.begin(), entries.size())) {}

MultiIndex::MultiIndex(std::span<const int> entries) {
  data_.reserve(entries.size());
  for (int k : entries) {
    if (k < 0 || k > 250) throw InvalidArgument("multi-index entry out of range");
    data_.push_back(static_cast<char>(k));
  }
}

std::vector<int> MultiIndex::entries() const {
  std::vector<int> out(size());
  for (std::size_t k = 0; k < size(); ++k) out[k] = (*this)[k];
  return out;
}

int MultiIndex::norm() const noexcept {
  int n = 0;
  for (char c : data_) n += c == 0 ? 2 : 1;
  return n;
}

MultiIndex MultiIndex::minus() const {
  MultiIndex r;
  if (!data_.empty()) r.data_ = data_.substr(1);
  return r;
}

MultiIndex MultiIndex::prepend(int k) const {
  MultiIndex r;
  r.data_.reserve(data_.size() + 1);
  r.data_.push_back(static_cast<char>(k));
  r.data_ += data_;
  return r;
}

int MultiIndex::count(int k) const noexcept {
  return static_cast<int>(std::count(data_.begin(), data_.end(), static_cast<char>(k)));
}

int MultiIndex::max_entry() const noexcept {
  int m = 0;
  for (std::size_t k = 0; k < size(); ++k) m = std::max(m, (*this)[k]);
  return m;
}

std::string MultiIndex::to_string() const {
  std::string s = "(";
  for (std::size_t k = 0; k < size(); ++k) {
    if (k) s += ",";
    s += std::to_string((*this)[k]);
  }
  return s + ")";
}

// --- IntegralCombination ----------------------------------------------------

Rational IntegralCombination::coefficient(const MultiIndex& i) const {
  auto it = terms_.find(i);
  return it == terms_.end() ? Rational(0) : it->second;
}

void IntegralCombination::add(const MultiIndex& i, const Rational& c) {
  if (c == 0) return;
  auto [it, inserted] = terms_.try_emplace(i, c);
  if (!inserted) {
    it->second += c;
    if (it->second == 0) terms_.erase(it);
  }
}

IntegralCombination& IntegralCombination::operator+=(const IntegralCombination& o) {
  for (const auto& [i, c] : o.terms_) add(i, c);
  return *this;
}

IntegralCombination& IntegralCombination::operator*=(const Rational& s) {
  if (s == 0) {
    terms_.clear();
    return *this;
  }
  for (auto& [i, c] : terms_) c *= s;
  return *this;
}

IntegralCombination IntegralCombination::prepend(int k) const {
  IntegralCombination r(flavor_);
  for (const auto& [i, c] : terms_) r.terms_.emplace(i.prepend(k), c);
  return r;
}

std::string IntegralCombination::to_string() const {
  if (terms_.empty()) return "0";
  const char* sym = flavor_ == Flavor::Ito ? "I" : "J";
  std::string s;
  for (const auto& [i, c] : terms_) {
    if (!s.empty()) s += c < 0 ? " - " : " + ";
    else if (c < 0) s += "-";
    const Rational mag = abs(c);
    if (mag != 1) s += difflik::to_string(mag) + "*";
    s += sym + i.to_string();
  }
  return s;
}

// --- conversions and products -----------------------------------------------

IntegralCombination strat_to_ito(const MultiIndex& i) {
  static ConcurrentMemo<std::string, IntegralCombination> memo;
  if (auto hit = memo.find(i.key())) return *hit;
  IntegralCombination r(Flavor::Ito);
  if (i.size() <= 1) {
    r.add(i, Rational(1));
  } else {
    r = strat_to_ito(i.minus()).prepend(i.front());
    if (i[0] == i[1] && i[0] != 0) {
      IntegralCombination corr = strat_to_ito(i.minus().minus()).prepend(0);
      corr *= make_rational(1, 2);
      r += corr;
    }
  }
  return memo.insert(i.key(), std::move(r));
}

IntegralCombination ito_product(const MultiIndex& a, const MultiIndex& b) {
  IntegralCombination r(Flavor::Ito);
  if (a.empty()) {
    r.add(b, Rational(1));
    return r;
  }
  if (b.empty()) {
    r.add(a, Rational(1));
    return r;
  }
  static ConcurrentMemo<std::string, IntegralCombination> memo;
  // Symmetric; store under the ordered pair.
  const bool swap = b < a;
  const std::string key = (swap ? b : a).key() + '\xff' + (swap ? a : b).key();
  if (auto hit = memo.find(key)) return *hit;
  r += ito_product(a, b.minus()).prepend(b.front());
  r += ito_product(a.minus(), b).prepend(a.front());
  if (a.front() == b.front() && a.front() != 0) r += ito_product(a.minus(), b.minus()).prepend(0);
  return memo.insert(key, std::move(r));
}

IntegralCombination ito_product(const IntegralCombination& a, const IntegralCombination& b) {
  IntegralCombination r(Flavor::Ito);
  for (const auto& [i, ci] : a.terms()) {
    for (const auto& [j, cj] : b.terms()) {
      IntegralCombination p = ito_product(i, j);
      p *= ci * cj;
      r += p;
    }
  }
  return r;
}

IntegralCombination ito_product_n(std::span<const MultiIndex> factors) {
  if (factors.empty()) throw InvalidArgument("ito_product_n needs at least one factor");
  IntegralCombination acc(Flavor::Ito);
  acc.add(factors[0], Rational(1));
  for (std::size_t k = 1; k < factors.size(); ++k) {
    IntegralCombination f(Flavor::Ito);
    f.add(factors[k], Rational(1));
    acc = ito_product(acc, f);
  }
  return acc;
}

Rational unconditional_expectation(const IntegralCombination& c) {
  Rational e = 0;
  for (const auto& [i, coeff] : c.terms()) {
    if (i.count(0) == static_cast<int>(i.size())) e += coeff / factorial(static_cast<unsigned>(i.size()));
  }
  return e;
}

// --- moments ------------------------------------------------------------------

namespace {

std::string multiset_key(const std::vector<MultiIndex>& sorted) {
  std::string key;
  for (const MultiIndex& i : sorted) {
    key += i.key();
    key += '\xff';
  }
  return key;
}

Rational moment(std::vector<MultiIndex> f);

Rational moment_sorted(const std::vector<MultiIndex>& f) {
  if (f.empty()) return Rational(1);
  int norm = 0;
  int top = 0;
  for (const MultiIndex& i : f) {
    norm += i.norm();
    top = std::max(top, i.max_entry());
  }
  if (norm % 2) return Rational(0);
  for (int k = 1; k <= top; ++k) {
    int c = 0;
    for (const MultiIndex& i : f) c += i.count(k);
    if (c % 2) return Rational(0);
  }

  static ConcurrentMemo<std::string, Rational> memo;
  const std::string key = multiset_key(f);
  if (auto hit = memo.find(key)) return *hit;

  // d(prod I_r) has drift sum_{r: a_r1 = 0} prod(r shortened)
  // + sum_{r<s: a_r1 = a_s1 != 0} prod(r, s shortened); each of these
  // expectations scales as t^{(N-2)/2}, and integrating gives the factor 2/N.
  Rational total = 0;
  for (std::size_t r = 0; r < f.size(); ++r) {
    if (f[r].front() == 0) {
      std::vector<MultiIndex> g = f;
      g[r] = g[r].minus();
      total += moment(std::move(g));
    }
    for (std::size_t s = r + 1; s < f.size(); ++s) {
      if (f[r].front() != 0 && f[r].front() == f[s].front()) {
        std::vector<MultiIndex> g = f;
        g[r] = g[r].minus();
        g[s] = g[s].minus();
        total += moment(std::move(g));
      }
    }
  }
  total *= Rational(2, norm);
  total.canonicalize();
  return memo.insert(key, std::move(total));
}

Rational moment(std::vector<MultiIndex> f) {
  std::erase_if(f, [](const MultiIndex& i) { return i.empty(); });
  std::sort(f.begin(), f.end());
  return moment_sorted(f);
}

RationalPoly monomial(std::size_t m, const std::vector<int>& exps, const Rational& c) {
  RationalPoly p(m);
  Exponents e(m);
  for (std::size_t k = 0; k < m; ++k) e[k] = static_cast<std::uint16_t>(exps[k]);
  p.add_term(e, c);
  return p;
}

void check_dimension(const MultiIndex& i, std::size_t m) {
  if (static_cast<std::size_t>(i.max_entry()) > m) {
    throw InvalidArgument("multi-index " + i.to_string() + " exceeds dimension " + std::to_string(m));
  }
}

}  // namespace

Rational product_expectation(std::vector<MultiIndex> factors) { return moment(std::move(factors)); }

const RationalPoly& hermite(unsigned n) {
  static const std::vector<RationalPoly> table = [] {
    std::vector<RationalPoly> h;
    const RationalPoly z = RationalPoly::variable(1, 0);
    h.push_back(RationalPoly::constant(1, Rational(1)));
    h.push_back(z);
    for (unsigned k = 1; k < 40; ++k) h.push_back(z * h[k] - h[k - 1] * Rational(k));
    return h;
  }();
  if (n >= table.size()) throw InvalidArgument("Hermite degree too large");
  return table[n];
}

// --- conditional expectations -------------------------------------------------

RationalPoly bridge_conditional_expectation(const MultiIndex& i, std::size_t m) {
  check_dimension(i, m);
  static ConcurrentMemo<std::string, RationalPoly> memo;
  const std::string key = i.key() + '\xff' + static_cast<char>(m);
  if (auto hit = memo.find(key)) return *hit;

  std::vector<std::size_t> noise;
  for (std::size_t k = 0; k < i.size(); ++k) {
    if (i[k] != 0) noise.push_back(k);
  }
  RationalPoly out(m);
  // Each dW_k integrator becomes dB_k (choice 0), -B_k(1) dt (choice 1) or
  // z_k dt (choice 2). B(1) factors out of the time integral.
  std::vector<int> choice(noise.size(), 0);
  for (;;) {
    std::vector<int> entries = i.entries();
    std::vector<int> zexp(m, 0);
    std::vector<MultiIndex> factors;
    bool negative = false;
    for (std::size_t p = 0; p < noise.size(); ++p) {
      const int k = entries[noise[p]];
      if (choice[p] == 1) {
        factors.push_back(MultiIndex{k});
        negative = !negative;
        entries[noise[p]] = 0;
      } else if (choice[p] == 2) {
        ++zexp[static_cast<std::size_t>(k - 1)];
        entries[noise[p]] = 0;
      }
    }
    factors.push_back(MultiIndex(entries));
    Rational e = unconditional_expectation(ito_product_n(factors));
    if (e != 0) out += monomial(m, zexp, negative ? Rational(-e) : e);

    std::size_t p = 0;
    while (p < choice.size() && choice[p] == 2) choice[p++] = 0;
    if (p == choice.size()) break;
    ++choice[p];
  }
  return memo.insert(key, std::move(out));
}

namespace {

std::string tuple_key(std::vector<MultiIndex> sorted, std::size_t m) {
  std::sort(sorted.begin(), sorted.end());
  return multiset_key(sorted) + static_cast<char>(m);
}

}  // namespace

RationalPoly conditional_product_expectation(std::span<const MultiIndex> strat, std::size_t m) {
  if (strat.empty()) throw InvalidArgument("conditional_product_expectation needs at least one index");
  for (const MultiIndex& i : strat) check_dimension(i, m);
  static ConcurrentMemo<std::string, RationalPoly> memo;
  const std::string key = tuple_key({strat.begin(), strat.end()}, m);
  if (auto hit = memo.find(key)) return *hit;

  std::vector<std::vector<std::pair<MultiIndex, Rational>>> combos;
  for (const MultiIndex& i : strat) {
    const IntegralCombination c = strat_to_ito(i);
    combos.emplace_back(c.terms().begin(), c.terms().end());
  }
  std::vector<int> counts(m, 0);
  for (const MultiIndex& i : strat) {
    for (std::size_t k = 0; k < m; ++k) counts[k] += i.count(static_cast<int>(k + 1));
  }

  // E[X | W(1) = z] = sum_a E[X He_a(W(1))] / a! He_a(z), and
  // He_n(W_k(1)) = n! I_(k,...,k)(1), so the coefficient is E[X prod_k I_(k^a_k)(1)].
  RationalPoly out(m);
  std::vector<int> alpha(m);
  for (std::size_t k = 0; k < m; ++k) alpha[k] = counts[k] % 2;
  for (;;) {
    std::vector<MultiIndex> extra;
    for (std::size_t k = 0; k < m; ++k) {
      if (alpha[k] > 0) extra.emplace_back(std::vector<int>(static_cast<std::size_t>(alpha[k]), static_cast<int>(k + 1)));
    }
    Rational coeff = 0;
    std::vector<std::size_t> pick(combos.size(), 0);
    for (;;) {
      Rational weight = 1;
      std::vector<MultiIndex> factors = extra;
      for (std::size_t w = 0; w < combos.size(); ++w) {
        weight *= combos[w][pick[w]].second;
        factors.push_back(combos[w][pick[w]].first);
      }
      coeff += weight * moment(std::move(factors));
      std::size_t w = 0;
      while (w < pick.size() && pick[w] + 1 == combos[w].size()) pick[w++] = 0;
      if (w == pick.size()) break;
      ++pick[w];
    }
    if (coeff != 0) {
      RationalPoly h = RationalPoly::constant(m, coeff);
      for (std::size_t k = 0; k < m; ++k) {
        std::vector<std::vector<Rational>> embed{std::vector<Rational>(m, Rational(0))};
        embed[0][k] = 1;
        h = h * hermite(static_cast<unsigned>(alpha[k])).compose_linear(embed);
      }
      out += h;
    }
    std::size_t k = 0;
    while (k < m && alpha[k] + 2 > counts[k]) alpha[k] = counts[k] % 2, ++k;
    if (k == m) break;
    alpha[k] += 2;
  }
  return memo.insert(key, std::move(out));
}

RationalPoly conditional_product_expectation_by_bridge(std::span<const MultiIndex> strat, std::size_t m) {
  if (strat.empty()) throw InvalidArgument("conditional_product_expectation needs at least one index");
  for (const MultiIndex& i : strat) check_dimension(i, m);
  IntegralCombination acc = strat_to_ito(strat[0]);
  for (std::size_t w = 1; w < strat.size(); ++w) acc = ito_product(acc, strat_to_ito(strat[w]));
  RationalPoly out(m);
  for (const auto& [i, c] : acc.terms()) out += bridge_conditional_expectation(i, m) * c;
  return out;
}

std::vector<MultiIndex> indices_with_norm(int norm, int m) {
  std::vector<MultiIndex> out;
  std::vector<int> cur;
  std::function<void(int)> rec = [&](int left) {
    if (left == 0) {
      out.emplace_back(cur);
      return;
    }
    for (int k = 0; k <= m; ++k) {
      const int cost = k == 0 ? 2 : 1;
      if (cost > left) continue;
      cur.push_back(k);
      rec(left - cost);
      cur.pop_back();
    }
  };
  if (norm >= 0) rec(norm);
  return out;
}

}  // namespace difflik
