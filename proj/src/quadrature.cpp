#include "difflik/quadrature.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "difflik/errors.hpp"

namespace difflik {

// Golub-Welsch on the Jacobi matrix of the monic probabilists' Hermite
// polynomials (off-diagonal sqrt(k)).
GaussHermite gauss_hermite(std::size_t n) {
  if (n == 0) throw InvalidArgument("Gauss-Hermite rule needs at least one node");
  const auto N = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(N, N);
  for (Eigen::Index k = 1; k < N; ++k) {
    jac(k, k - 1) = jac(k - 1, k) = std::sqrt(static_cast<double>(k));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
  GaussHermite rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (Eigen::Index i = 0; i < N; ++i) {
    rule.nodes[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
    const double v = es.eigenvectors()(0, i);
    rule.weights[static_cast<std::size_t>(i)] = v * v;
  }
  // symmetrize to remove eigensolver noise
  for (std::size_t i = 0; i < n / 2; ++i) {
    const std::size_t j = n - 1 - i;
    const double x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
    const double w = 0.5 * (rule.weights[i] + rule.weights[j]);
    rule.nodes[i] = -x;
    rule.nodes[j] = x;
    rule.weights[i] = rule.weights[j] = w;
  }
  if (n % 2) rule.nodes[n / 2] = 0.0;
  return rule;
}

}  // namespace difflik
