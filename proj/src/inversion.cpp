#include "kalibr/inversion.hpp"

#include <cmath>
#include <limits>

namespace kalibr {

InverseProblem::InverseProblem(std::shared_ptr<const ForwardModel> forward, Vector y, Matrix sigma_eta)
    : forward_(std::move(forward)), y_(std::move(y)), sigma_eta_(std::move(sigma_eta)) {
  if (!forward_) throw std::invalid_argument("InverseProblem: null forward model");
  if (y_.size() < 1) throw std::invalid_argument("InverseProblem: empty observation vector");
  if (y_.size() != forward_->n_y()) {
    throw std::invalid_argument("InverseProblem: observation length " + std::to_string(y_.size()) +
                                " does not match model output length " +
                                std::to_string(forward_->n_y()));
  }
  if (sigma_eta_.rows() != y_.size() || sigma_eta_.cols() != y_.size()) {
    throw std::invalid_argument("InverseProblem: Sigma_eta must be " + std::to_string(y_.size()) +
                                "x" + std::to_string(y_.size()));
  }
  noise_factor_ = cholesky_lower(sigma_eta_, {}, "Sigma_eta");
}

double misfit(const InverseProblem& problem, const Vector& g_of_theta) {
  if (g_of_theta.size() != problem.n_y()) {
    throw std::invalid_argument("misfit: prediction length " + std::to_string(g_of_theta.size()) +
                                " != observation length " + std::to_string(problem.n_y()));
  }
  const Vector whitened =
      problem.noise_factor().triangularView<Eigen::Lower>().solve(problem.y() - g_of_theta);
  return 0.5 * whitened.squaredNorm();
}

double misfit_at(const InverseProblem& problem, const Vector& theta) {
  return misfit(problem, problem.forward().evaluate(theta));
}

UkiStepResult uki_step(const GaussianState& state, const InverseProblem& problem,
                       const EvaluationPool& pool, const UkiOptions& opts, int iteration) {
  if (state.dim() != problem.n_theta() || state.cov.rows() != state.dim() ||
      state.cov.cols() != state.dim()) {
    throw std::invalid_argument("uki_step: state dimension does not match the problem");
  }
  const std::string where = "iteration " + std::to_string(iteration);

  // Prediction with Sigma_omega = C_n.
  const GaussianState predicted(state.mean, 2.0 * state.cov);
  const SigmaEnsemble sigma = sigma_points(predicted, opts.sigma, where);

  std::vector<Vector> predictions = pool.evaluate(problem.forward(), sigma.points);

  // Analysis with Sigma_nu = 2 Sigma_eta.
  const Vector& y_hat = predictions[0];
  const Matrix c_theta_p = estimate_moments(sigma, sigma.points, predictions).cross_cov;
  Matrix c_pp = estimate_moments(sigma, predictions, predictions).cross_cov;
  c_pp += 2.0 * problem.sigma_eta();

  Eigen::LLT<Matrix> llt(symmetrized(c_pp));
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("uki_step: predicted observation covariance is not SPD at " + where);
  }
  const Matrix gain_t = llt.solve(c_theta_p.transpose());  // C_pp^{-1} C_theta_p^T

  UkiStepResult out;
  out.state.mean = predicted.mean + gain_t.transpose() * (problem.y() - y_hat);
  out.state.cov = symmetrized(predicted.cov - c_theta_p * gain_t);

  Eigen::LLT<Matrix> check(out.state.cov);
  if (check.info() != Eigen::Success || !out.state.mean.allFinite()) {
    throw NotPositiveDefinite("uki_step: updated covariance is not SPD after " + where);
  }

  out.diagnostics.predicted_cov = predicted.cov;
  out.diagnostics.sigma_points = sigma.points;
  out.diagnostics.phi_center = misfit(problem, y_hat);
  out.diagnostics.predictions = std::move(predictions);
  return out;
}

UkiTrace uki_run(const InverseProblem& problem, const GaussianState& init, const UkiOptions& opts,
                 const EvaluationPool& pool) {
  if (opts.n_max < 1) throw std::invalid_argument("uki_run: n_max must be >= 1");
  init.validate();

  UkiTrace trace;
  trace.iterations.push_back({0, init, std::numeric_limits<double>::quiet_NaN(), {}});

  for (int n = 0; n < opts.n_max; ++n) {
    UkiStepResult step;
    try {
      step = uki_step(trace.iterations.back().state, problem, pool, opts, n);
    } catch (const std::exception& e) {
      throw CalibrationError("UKI failed at iteration " + std::to_string(n) + ": " + e.what(),
                             trace);
    }
    UkiIterate& current = trace.iterations.back();
    current.phi = step.diagnostics.phi_center;
    current.predictions = std::move(step.diagnostics.predictions);

    const Vector previous_mean = current.state.mean;
    trace.iterations.push_back({n + 1, std::move(step.state), std::numeric_limits<double>::quiet_NaN(), {}});

    const Vector& next_mean = trace.iterations.back().state.mean;
    if (opts.tol > 0.0 &&
        (next_mean - previous_mean).norm() <= opts.tol * (1.0 + previous_mean.norm())) {
      trace.converged = true;
      break;
    }
  }

  try {
    trace.iterations.back().phi = misfit_at(problem, trace.iterations.back().state.mean);
  } catch (const std::exception& e) {
    throw CalibrationError(std::string("UKI final misfit evaluation failed: ") + e.what(), trace);
  }
  return trace;
}

}  // namespace kalibr
