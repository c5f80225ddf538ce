#pragma once

#include <cstddef>
#include <vector>

namespace difflik {

/// Gauss-Hermite rule for the standard normal weight: sum_i w_i f(x_i)
/// approximates E[f(Z)], Z ~ N(0, 1). Nodes ascend; weights sum to 1.
struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> weights;
};

GaussHermite gauss_hermite(std::size_t n);

}  // namespace difflik
