#pragma once

#include "kalibr/evaluation_pool.hpp"
#include "kalibr/forward_model.hpp"
#include "kalibr/gaussian.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace kalibr {

/// y = G(theta) + eta, eta ~ N(0, sigma_eta), with an improper uniform prior.
class InverseProblem {
 public:
  InverseProblem(std::shared_ptr<const ForwardModel> forward, Vector y, Matrix sigma_eta);

  const ForwardModel& forward() const { return *forward_; }
  std::shared_ptr<const ForwardModel> forward_ptr() const { return forward_; }
  const Vector& y() const { return y_; }
  const Matrix& sigma_eta() const { return sigma_eta_; }
  /// Lower Cholesky factor of sigma_eta.
  const Matrix& noise_factor() const { return noise_factor_; }
  int n_y() const { return static_cast<int>(y_.size()); }
  int n_theta() const { return forward_->n_theta(); }

 private:
  std::shared_ptr<const ForwardModel> forward_;
  Vector y_;
  Matrix sigma_eta_;
  Matrix noise_factor_;
};

/// 1/2 |sigma_eta^{-1/2} (y - g)|^2, by triangular solve.
double misfit(const InverseProblem& problem, const Vector& g_of_theta);

/// Evaluates G(theta) and returns its misfit. Throws ForwardError.
double misfit_at(const InverseProblem& problem, const Vector& theta);

// ----------------------------------------------------------------------------
// Unscented Kalman inversion

struct UkiOptions {
  int n_max = 15;
  /// Stop when |m_{n+1} - m_n| <= tol (1 + |m_n|); 0 disables early stop.
  double tol = 1e-6;
  SigmaPointOptions sigma;
};

struct UkiStepDiagnostics {
  Matrix predicted_cov;             // C_hat = 2 C_n
  std::vector<Vector> sigma_points;
  std::vector<Vector> predictions;  // y_hat^j = G(theta_hat^j)
  double phi_center = 0.0;          // misfit of the central point, i.e. of m_n
};

struct UkiStepResult {
  GaussianState state;
  UkiStepDiagnostics diagnostics;
};

/// One iteration of UKI with Sigma_omega = C_n and Sigma_nu = 2 Sigma_eta.
/// `iteration` only labels error messages.
UkiStepResult uki_step(const GaussianState& state, const InverseProblem& problem,
                       const EvaluationPool& pool = EvaluationPool(1), const UkiOptions& opts = {},
                       int iteration = 0);

struct UkiIterate {
  int index = 0;
  GaussianState state;
  double phi = 0.0;
  /// Sigma-point predictions of the step that started from this iterate;
  /// empty for the final iterate.
  std::vector<Vector> predictions;
};

struct UkiTrace {
  std::vector<UkiIterate> iterations;
  bool converged = false;
  /// Hyperparameter policy, recorded for reproducibility.
  std::string sigma_nu_policy = "2*Sigma_eta";
  std::string sigma_omega_policy = "C_n";

  const GaussianState& final_state() const { return iterations.back().state; }
};

/// A failure inside an iterative driver; keeps everything recorded so far.
class CalibrationError : public std::runtime_error {
 public:
  CalibrationError(const std::string& what, UkiTrace partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const UkiTrace& partial_trace() const { return partial_; }

 private:
  UkiTrace partial_;
};

UkiTrace uki_run(const InverseProblem& problem, const GaussianState& init, const UkiOptions& opts,
                 const EvaluationPool& pool = EvaluationPool(1));

// ----------------------------------------------------------------------------
// Ensemble transform Kalman inversion

struct EnsembleState {
  std::vector<Vector> members;

  int size() const { return static_cast<int>(members.size()); }
  Vector mean() const;
  Matrix covariance() const;

  static EnsembleState draw(const GaussianState& dist, int size, std::uint64_t seed);
};

class DegenerateEnsemble : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Deterministic square-root analysis against (y, 2 Sigma_eta) after the
/// sqrt(2) anomaly inflation that mirrors Sigma_omega = C_n.
EnsembleState etki_step(const EnsembleState& ens, const InverseProblem& problem,
                        const EvaluationPool& pool = EvaluationPool(1));

struct EtkiIterate {
  int index = 0;
  Vector mean;
  Matrix cov;
  double phi = 0.0;  // misfit at the ensemble mean
};

struct EtkiTrace {
  std::vector<EtkiIterate> iterations;
  EnsembleState final_ensemble;
};

EtkiTrace etki_run(const InverseProblem& problem, const GaussianState& init, int ensemble_size,
                   std::uint64_t seed, int n_max, const EvaluationPool& pool = EvaluationPool(1));

// ----------------------------------------------------------------------------
// Finite-difference quasi-Newton baseline

struct QuasiNewtonOptions {
  int n_max = 100;
  double relative_step = 1e-6;
  double gradient_tol = 1e-10;
};

struct QuasiNewtonTrace {
  std::vector<Vector> iterates;
  std::vector<double> values;
  bool converged = false;
  bool line_search_failed = false;
};

using Objective = std::function<double(const Vector&)>;

/// BFGS with central finite-difference gradients and Armijo backtracking.
QuasiNewtonTrace fd_quasi_newton(const Objective& objective, const Vector& theta0,
                                 const QuasiNewtonOptions& opts = {});

}  // namespace kalibr
