#include "kalibr/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace kalibr {

GaussianState::GaussianState(Vector m, Matrix c) : mean(std::move(m)), cov(std::move(c)) {}

void GaussianState::validate() const {
  if (mean.size() == 0) throw std::invalid_argument("GaussianState: empty mean");
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
    throw std::invalid_argument("GaussianState: covariance is " + std::to_string(cov.rows()) + "x" +
                                std::to_string(cov.cols()) + ", mean has length " +
                                std::to_string(mean.size()));
  }
  const double scale = std::max(cov.cwiseAbs().maxCoeff(), 1e-300);
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw std::invalid_argument("GaussianState: covariance is not symmetric");
  }
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("GaussianState: covariance is not positive definite");
  }
}

UnscentedWeights unscented_weights(int n_theta, double kappa) {
  if (n_theta < 1) throw std::invalid_argument("unscented_weights: n_theta must be >= 1");
  UnscentedWeights w;
  w.n_theta = n_theta;
  w.kappa = kappa;
  const double n = static_cast<double>(n_theta);
  w.a = std::min(std::sqrt(4.0 / (n + kappa)), 1.0);
  w.lambda = w.a * w.a * (n + kappa) - n;
  w.c = std::sqrt(n + w.lambda);
  w.w_c = 1.0 / (2.0 * (n + w.lambda));
  return w;
}

Matrix symmetrized(const Matrix& c) { return 0.5 * (c + c.transpose()); }

Matrix cholesky_lower(const Matrix& cov, const SigmaPointOptions& opts, const std::string& context) {
  Matrix sym = symmetrized(cov);
  if (opts.nugget > 0.0) {
    std::clog << "[kalibr] adding diagonal nugget " << opts.nugget
              << (context.empty() ? "" : " at " + context) << '\n';
    sym.diagonal().array() += opts.nugget;
  }
  Eigen::LLT<Matrix> llt(sym);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("Cholesky factorization failed" +
                              (context.empty() ? std::string{} : " at " + context) +
                              ": covariance is not positive definite");
  }
  return llt.matrixL();
}

SigmaEnsemble sigma_points(const GaussianState& state, const SigmaPointOptions& opts,
                           const std::string& context) {
  const int n = state.dim();
  if (n < 1 || state.cov.rows() != n || state.cov.cols() != n) {
    throw std::invalid_argument("sigma_points: inconsistent GaussianState dimensions");
  }
  SigmaEnsemble ens;
  ens.weights = unscented_weights(n, opts.kappa);
  const Matrix l = cholesky_lower(state.cov, opts, context);

  ens.points.resize(2 * n + 1);
  ens.points[0] = state.mean;
  for (int j = 0; j < n; ++j) {
    const Vector offset = ens.weights.c * l.col(j);
    ens.points[1 + j] = state.mean + offset;
    ens.points[1 + j + n] = state.mean - offset;
  }
  return ens;
}

MomentEstimate estimate_moments(const SigmaEnsemble& ensemble, const std::vector<Vector>& evals_a,
                                const std::vector<Vector>& evals_b) {
  const std::size_t n_points = ensemble.size();
  if (evals_a.size() != n_points || evals_b.size() != n_points) {
    throw std::invalid_argument("estimate_moments: expected " + std::to_string(n_points) +
                                " evaluations, got " + std::to_string(evals_a.size()) + " and " +
                                std::to_string(evals_b.size()));
  }
  const Vector& mean_a = evals_a[0];
  const Vector& mean_b = evals_b[0];
  Matrix cross = Matrix::Zero(mean_a.size(), mean_b.size());
  for (std::size_t j = 1; j < n_points; ++j) {
    if (evals_a[j].size() != mean_a.size() || evals_b[j].size() != mean_b.size()) {
      throw std::invalid_argument("estimate_moments: evaluation " + std::to_string(j) +
                                  " has inconsistent length");
    }
    cross.noalias() += ensemble.weights.w_c * (evals_a[j] - mean_a) * (evals_b[j] - mean_b).transpose();
  }
  return {mean_a, cross};
}

}  // namespace kalibr
