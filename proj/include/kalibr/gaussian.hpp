#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace kalibr {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised when a covariance fails Cholesky factorization.
class NotPositiveDefinite : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Gaussian approximation N(mean, cov) of a parameter distribution.
struct GaussianState {
  Vector mean;
  Matrix cov;

  GaussianState() = default;
  GaussianState(Vector m, Matrix c);

  int dim() const { return static_cast<int>(mean.size()); }

  /// Throws std::invalid_argument on shape errors or asymmetry beyond 1e-12
  /// relative, NotPositiveDefinite when the covariance has no Cholesky factor.
  void validate() const;
};

/// Constant weights of the modified (first-order mean) unscented transform.
struct UnscentedWeights {
  int n_theta = 0;
  double kappa = 0.0;
  double a = 1.0;
  double lambda = 0.0;
  double c = 1.0;        // point spread, identical for every j
  double w_c = 0.5;      // covariance weight, identical for every j >= 1
};

/// kappa is exposed but the calibration drivers always pass 0.
UnscentedWeights unscented_weights(int n_theta, double kappa = 0.0);

/// 2N+1 deterministic symmetric quadrature nodes.
struct SigmaEnsemble {
  std::vector<Vector> points;
  UnscentedWeights weights;

  int n_theta() const { return weights.n_theta; }
  std::size_t size() const { return points.size(); }
};

struct SigmaPointOptions {
  /// Spread parameter of the transform; the drivers keep it at 0.
  double kappa = 0.0;
  /// Diagonal nugget added before factorization; 0 disables it.
  double nugget = 0.0;
};

/// (C + C^T) / 2
Matrix symmetrized(const Matrix& c);

/// Lower-triangular Cholesky factor of the symmetrized covariance.
/// `context` is embedded in the error message (e.g. "iteration 7").
Matrix cholesky_lower(const Matrix& cov, const SigmaPointOptions& opts = {},
                      const std::string& context = {});

SigmaEnsemble sigma_points(const GaussianState& state,
                           const SigmaPointOptions& opts = {},
                           const std::string& context = {});

struct MomentEstimate {
  Vector mean_a;
  Matrix cross_cov;
};

/// First-order mean of `evals_a` (its central entry) and the weighted cross
/// covariance between the a- and b-evaluations. Both lists must be aligned
/// with the sigma points.
MomentEstimate estimate_moments(const SigmaEnsemble& ensemble,
                                const std::vector<Vector>& evals_a,
                                const std::vector<Vector>& evals_b);

}  // namespace kalibr
