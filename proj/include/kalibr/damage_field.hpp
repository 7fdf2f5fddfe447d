#pragma once

#include "kalibr/inversion.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace kalibr::damage {

/// Truncated Karhunen-Loeve expansion of a log-Gaussian field on [0, 1] with
/// covariance (-Laplacian + tau^2)^{-d} (Neumann, mean-zero functions).
struct KLField {
  double tau = 2.0;
  double d = 1.0;
  Vector coefficients;  // theta_(1..n_modes)

  int n_modes() const { return static_cast<int>(coefficients.size()); }
};

struct Eigenpair {
  double lambda = 0.0;
  double psi = 0.0;  // psi_l(y)
};

/// lambda_l = (pi^2 l^2 + tau^2)^{-d}, psi_l(y) = sqrt(2) cos(pi l y).
Eigenpair kl_eigenpair(int l, const KLField& field, double y);

/// sqrt(lambda_l) psi_l(y) for l = 1..n_modes.
Vector kl_basis(int n_modes, double tau, double d, double y);

double log_a(double y, const KLField& field);

/// Damage bounds; hardening below zero, softening above.
struct DamageMap {
  double omega_min = -0.1;
  double omega_max = 0.9;

  void validate() const;
};

/// Sigmoid map from log a to omega in (omega_min, omega_max); log a = 0 gives 0.
double omega_from_log_a(double log_a_value, const DamageMap& map);

double damage_omega(double y, const KLField& field, const DamageMap& map);

// ----------------------------------------------------------------------------
// Synthetic field calibration

enum class FieldObservation {
  /// omega sampled through a Gaussian smoothing kernel at equispaced sensors.
  smoothed_omega,
  /// The KL coefficients themselves.
  identity_coefficients,
};

struct FieldInversionConfig {
  int n_modes_truth = 10;
  int n_modes_inferred = 5;
  /// Relative (multiplicative) observation noise level.
  double noise = 0.05;
  std::uint64_t seed = 0;
  int n_iterations = 15;
  FieldObservation observation = FieldObservation::smoothed_omega;
  int n_sensors = 12;
  /// Gaussian kernel standard deviation; 0 selects the sensor spacing.
  double kernel_width = 0.0;
  /// Assumed noise standard deviation in Sigma_eta = sigma^2 I.
  double sigma_eta = 0.1;
  double tau = 2.0;
  double d = 1.0;
  DamageMap map;
  int report_points = 101;
};

/// Observations of omega(theta) through the configured operator.
class FieldObservationModel final : public ForwardModel {
 public:
  FieldObservationModel(int n_modes, const FieldInversionConfig& cfg);

  Vector evaluate(const Vector& theta) const override;
  int n_theta() const override { return n_modes_; }
  int n_y() const override;

  const std::vector<double>& sensors() const { return sensors_; }

 private:
  int n_modes_;
  FieldInversionConfig cfg_;
  std::vector<double> sensors_;
  std::vector<double> quad_nodes_;
  Matrix smoothing_;  // n_sensors x n_quad, rows sum to 1
  Matrix basis_;      // n_quad x n_modes, sqrt(lambda_l) psi_l(z_q)
};

struct FieldEnvelope {
  std::vector<double> y;
  std::vector<double> omega_est;
  std::vector<double> omega_lo;
  std::vector<double> omega_hi;
  std::vector<double> omega_truth;

  /// Fraction of grid points with omega_lo <= omega_truth <= omega_hi.
  double coverage() const;
};

/// Pointwise 2-sigma band of omega under theta ~ N(mean, cov). log a is linear
/// in theta and omega is monotone in log a, so the band maps exactly.
FieldEnvelope field_envelope(const GaussianState& posterior, const KLField& truth,
                             const FieldInversionConfig& cfg);

/// Seeded truth field, its noisy observations and the reduced-mode problem.
struct FieldProblem {
  KLField truth;
  Vector observations;
  std::shared_ptr<const InverseProblem> problem;
};

FieldProblem make_field_problem(const FieldInversionConfig& cfg);

struct FieldInversionReport {
  KLField truth;
  Vector observations;
  UkiTrace trace;
  FieldEnvelope envelope;
  std::vector<double> misfit_history;
};

FieldInversionReport synthetic_field_inversion(const FieldInversionConfig& cfg,
                                               const EvaluationPool& pool = EvaluationPool(1));

}  // namespace kalibr::damage
