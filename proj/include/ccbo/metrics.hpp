#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace ccbo {

/// Particles are the rows of an N x d matrix.
using Positions = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::VectorXd ensemble_mean(const Positions& x) {
  if (x.rows() == 0) throw std::invalid_argument("ensemble_mean: empty ensemble");
  return x.colwise().mean().transpose();
}

/// (1/(2N)) sum_i |X_i - mean|^2. The factor 1/2 is part of the reported quantity.
inline double ensemble_variance(const Positions& x) {
  const Eigen::RowVectorXd mean = ensemble_mean(x).transpose();
  return 0.5 * (x.rowwise() - mean).rowwise().squaredNorm().mean();
}

/// Squared 2-Wasserstein distance between the empirical measure and a Dirac at
/// x_star, i.e. the mean squared distance to x_star.
inline double w2_to_dirac(const Positions& x, std::span<const double> x_star) {
  if (static_cast<std::size_t>(x.cols()) != x_star.size())
    throw std::invalid_argument("w2_to_dirac: dimension mismatch");
  if (x.rows() == 0) throw std::invalid_argument("w2_to_dirac: empty ensemble");
  const Eigen::Map<const Eigen::RowVectorXd> target(x_star.data(), x.cols());
  return (x.rowwise() - target).rowwise().squaredNorm().mean();
}

struct EnsembleStats {
  Eigen::VectorXd mean;
  double variance = 0.0;
  std::optional<double> w2sq;
};

inline EnsembleStats ensemble_stats(const Positions& x,
                                    const std::optional<std::vector<double>>& x_star) {
  EnsembleStats s{ensemble_mean(x), ensemble_variance(x), std::nullopt};
  if (x_star) s.w2sq = w2_to_dirac(x, *x_star);
  return s;
}

}  // namespace ccbo
