#include "mc_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "difflik/parallel.hpp"
#include "difflik/rng.hpp"

namespace difflik::testing {

namespace {

constexpr std::size_t kBatch = 64;            // paths advanced together
constexpr std::size_t kBatchesPerChunk = 16;  // fixed reduction grouping
constexpr std::size_t kLane = 16;             // paths kept in registers during an update

void words_with_norm_at_most(int m, int max_norm, std::vector<int>& cur, int norm, std::vector<MultiIndex>& out) {
  if (!cur.empty()) out.emplace_back(std::span<const int>(cur));
  for (int j = 0; j <= m; ++j) {
    const int w = j == 0 ? 2 : 1;
    if (norm + w > max_norm) continue;
    cur.push_back(j);
    words_with_norm_at_most(m, max_norm, cur, norm + w, out);
    cur.pop_back();
  }
}

double g_value(int g, double z1, double z2) {
  switch (g) {
    case 0:
      return 1.0;
    case 1:
      return z1;
    case 2:
      return z1 * z1;
    default:
      return z1 * z2;
  }
}

}  // namespace

IteratedIntegralOracle::IteratedIntegralOracle(int m, int max_norm) : m_(m) {
  if (m < 1 || m > 2) throw std::invalid_argument("oracle supports m = 1 or 2");
  std::vector<int> cur;
  words_with_norm_at_most(m, max_norm, cur, 0, words_);
  std::stable_sort(words_.begin(), words_.end(),
                   [](const MultiIndex& a, const MultiIndex& b) { return a.size() > b.size(); });
  for (std::size_t i = 0; i < words_.size(); ++i) id_[words_[i].key()] = static_cast<int>(i);

  splits_.resize(words_.size());
  parent_.assign(words_.size(), -1);
  for (std::size_t i = 0; i < words_.size(); ++i) {
    const std::vector<int> e = words_[i].entries();
    const std::size_t n = e.size();
    if (n > 1) parent_[i] = id_.at(MultiIndex(std::span<const int>(e.data(), n - 1)).key());
    for (std::size_t k = 1; k < n; ++k) {
      const int prefix = id_.at(MultiIndex(std::span<const int>(e.data(), k)).key());
      const int suffix = id_.at(MultiIndex(std::span<const int>(e.data() + k, n - k)).key());
      splits_[i].push_back({prefix, suffix});
    }
  }
  for (std::size_t i = words_.size(); i-- > 0;) shortest_first_.push_back(static_cast<int>(i));
  sum_.assign(words_.size() * kTestFunctions, 0.0);
  sumsq_.assign(words_.size() * kTestFunctions, 0.0);
}

void IteratedIntegralOracle::run(std::uint64_t paths, int log2_steps, std::uint64_t seed) {
  const std::size_t W = words_.size();
  const std::size_t steps = std::size_t{1} << log2_steps;
  const double h = 1.0 / static_cast<double>(steps);
  const double sh = std::sqrt(h);
  const std::size_t batches = static_cast<std::size_t>((paths + kBatch - 1) / kBatch);
  const std::size_t chunks = (batches + kBatchesPerChunk - 1) / kBatchesPerChunk;
  const int z1 = id_.at(MultiIndex{1}.key());
  const int z2 = m_ >= 2 ? id_.at(MultiIndex{2}.key()) : -1;
  // last entry and length of every word, for the segment integrals
  std::vector<int> last(W);
  std::vector<double> inv_len(W);
  for (std::size_t i = 0; i < W; ++i) {
    last[i] = words_[i][words_[i].size() - 1];
    inv_len[i] = 1.0 / static_cast<double>(words_[i].size());
  }

  std::vector<std::vector<double>> chunk_sum(chunks), chunk_sq(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    std::vector<double> J(W * kBatch), S(W * kBatch), d((static_cast<std::size_t>(m_) + 1) * kBatch);
    std::vector<double> acc(W * kTestFunctions, 0.0), acc2(W * kTestFunctions, 0.0);
    std::fill(d.begin(), d.begin() + kBatch, h);
    const std::size_t first = c * kBatchesPerChunk;
    const std::size_t end = std::min(batches, first + kBatchesPerChunk);
    for (std::size_t bi = first; bi < end; ++bi) {
      const std::size_t live = std::min<std::uint64_t>(kBatch, paths - bi * kBatch);
      Philox rng(seed, bi);
      std::fill(J.begin(), J.end(), 0.0);
      for (std::size_t step = 0; step < steps; ++step) {
        for (int j = 1; j <= m_; ++j) {
          double* dj = d.data() + static_cast<std::size_t>(j) * kBatch;
          for (std::size_t b = 0; b < kBatch; ++b) dj[b] = sh * rng.normal();
        }
        // integrals of the straight segment: prod of increments / length!
        for (int w : shortest_first_) {
          double* __restrict s = S.data() + static_cast<std::size_t>(w) * kBatch;
          const double* __restrict dl = d.data() + static_cast<std::size_t>(last[w]) * kBatch;
          const double f = inv_len[w];
          if (parent_[w] < 0) {
            for (std::size_t b = 0; b < kBatch; ++b) s[b] = dl[b];
          } else {
            const double* __restrict sp = S.data() + static_cast<std::size_t>(parent_[w]) * kBatch;
            for (std::size_t b = 0; b < kBatch; ++b) s[b] = sp[b] * dl[b] * f;
          }
        }
        // Chen: longest words first so their suffixes still hold the old values
        for (std::size_t w = 0; w < W; ++w) {
          double* jw = J.data() + w * kBatch;
          const double* sw = S.data() + w * kBatch;
          for (std::size_t b0 = 0; b0 < kBatch; b0 += kLane) {
            double t[kLane];
            for (std::size_t k = 0; k < kLane; ++k) t[k] = jw[b0 + k] + sw[b0 + k];
            for (const Split& sp : splits_[w]) {
              const double* a = S.data() + static_cast<std::size_t>(sp.prefix) * kBatch + b0;
              const double* u = J.data() + static_cast<std::size_t>(sp.suffix) * kBatch + b0;
              for (std::size_t k = 0; k < kLane; ++k) t[k] += a[k] * u[k];
            }
            for (std::size_t k = 0; k < kLane; ++k) jw[b0 + k] = t[k];
          }
        }
      }
      for (std::size_t b = 0; b < live; ++b) {
        const double v1 = J[static_cast<std::size_t>(z1) * kBatch + b];
        const double v2 = z2 >= 0 ? J[static_cast<std::size_t>(z2) * kBatch + b] : 0.0;
        for (int g = 0; g < kTestFunctions; ++g) {
          const double gv = g_value(g, v1, v2);
          for (std::size_t w = 0; w < W; ++w) {
            const double v = J[w * kBatch + b] * gv;
            acc[w * kTestFunctions + static_cast<std::size_t>(g)] += v;
            acc2[w * kTestFunctions + static_cast<std::size_t>(g)] += v * v;
          }
        }
      }
    }
    chunk_sum[c] = std::move(acc);
    chunk_sq[c] = std::move(acc2);
  });
  for (std::size_t c = 0; c < chunks; ++c) {
    for (std::size_t k = 0; k < sum_.size(); ++k) {
      sum_[k] += chunk_sum[c][k];
      sumsq_[k] += chunk_sq[c][k];
    }
  }
  n_ += paths;
}

McEstimate IteratedIntegralOracle::estimate(const MultiIndex& w, TestFunction g) const {
  if (g == TestFunction::Z1Z2 && m_ < 2) throw std::invalid_argument("z1*z2 needs m = 2");
  const std::size_t k = static_cast<std::size_t>(id_.at(w.key())) * kTestFunctions + static_cast<std::size_t>(g);
  const double n = static_cast<double>(n_);
  const double mean = sum_[k] / n;
  const double var = std::max(0.0, sumsq_[k] / n - mean * mean) * n / (n - 1.0);
  return {mean, std::sqrt(var / n)};
}

Rational gaussian_moment(const Exponents& e) {
  Rational out = 1;
  for (auto k : e) {
    if (k % 2 != 0) return 0;
    for (unsigned j = k; j > 1; j -= 2) out *= j - 1;
  }
  return out;
}

Rational integrate_against_gaussian(const RationalPoly& p, TestFunction g) {
  Rational out = 0;
  for (const auto& [e, c] : p.terms()) {
    Exponents f = e;
    if (f.size() < 2 && g == TestFunction::Z1Z2) throw std::invalid_argument("z1*z2 needs m = 2");
    switch (g) {
      case TestFunction::One:
        break;
      case TestFunction::Z1:
        f[0] += 1;
        break;
      case TestFunction::Z1Squared:
        f[0] += 2;
        break;
      case TestFunction::Z1Z2:
        f[0] += 1;
        f[1] += 1;
        break;
    }
    out += c * gaussian_moment(f);
  }
  return out;
}

}  // namespace difflik::testing
