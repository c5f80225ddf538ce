#pragma once

// Monte Carlo reference values for iterated Stratonovich integrals on [0, 1].
//
// Each path is a piecewise-linear interpolation of Brownian motion on a
// uniform grid. Over one step the integrals of a straight segment are known in
// closed form (product of increments over k!), and Chen's identity glues the
// steps together, so every integral of bounded weight is carried along the
// path exactly for the interpolated path. The interpolation converges to the
// Stratonovich integrals as the step shrinks.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "difflik/ito.hpp"

namespace difflik::testing {

/// g(W(1)) factors the oracle averages against.
enum class TestFunction { One, Z1, Z1Squared, Z1Z2 };
inline constexpr int kTestFunctions = 4;

struct McEstimate {
  double mean = 0.0;
  double se = 0.0;  // standard error of the mean
};

class IteratedIntegralOracle {
 public:
  /// All multi-indices over {0, ..., m} with 1 <= norm <= max_norm.
  IteratedIntegralOracle(int m, int max_norm);

  /// Adds `paths` paths with 2^log2_steps steps each. Paths are simulated in
  /// fixed batches with one random stream per batch, so the result depends
  /// only on (paths, log2_steps, seed).
  void run(std::uint64_t paths, int log2_steps, std::uint64_t seed);

  int dims() const noexcept { return m_; }
  std::uint64_t paths() const noexcept { return n_; }
  const std::vector<MultiIndex>& words() const noexcept { return words_; }
  /// E[J_w(1) g(W(1))].
  McEstimate estimate(const MultiIndex& w, TestFunction g) const;

 private:
  struct Split {
    int prefix;  // outer part, integrated over the new step
    int suffix;  // inner part, integrated up to the start of the step
  };

  int m_;
  std::vector<MultiIndex> words_;  // longest first
  std::map<std::string, int> id_;
  std::vector<std::vector<Split>> splits_;
  std::vector<int> shortest_first_;
  std::vector<int> parent_;  // word without its last entry, or -1
  std::vector<double> sum_;
  std::vector<double> sumsq_;
  std::uint64_t n_ = 0;
};

/// E[z^e] under the standard m-variate normal, exactly.
Rational gaussian_moment(const Exponents& e);

/// Integral of P(z) g(z) phi(z), exactly.
Rational integrate_against_gaussian(const RationalPoly& p, TestFunction g);

}  // namespace difflik::testing
