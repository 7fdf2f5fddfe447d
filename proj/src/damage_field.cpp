#include "kalibr/damage_field.hpp"

#include "kalibr/random.hpp"

#include <cmath>
#include <numbers>

namespace kalibr::damage {

using std::numbers::pi;

Eigenpair kl_eigenpair(int l, const KLField& field, double y) {
  if (l < 1) throw std::invalid_argument("kl_eigenpair: mode index must be >= 1");
  const double k = pi * l;
  return {std::pow(k * k + field.tau * field.tau, -field.d), std::numbers::sqrt2 * std::cos(k * y)};
}

Vector kl_basis(int n_modes, double tau, double d, double y) {
  Vector phi(n_modes);
  const KLField f{tau, d, {}};
  for (int l = 1; l <= n_modes; ++l) {
    const Eigenpair e = kl_eigenpair(l, f, y);
    phi[l - 1] = std::sqrt(e.lambda) * e.psi;
  }
  return phi;
}

double log_a(double y, const KLField& field) {
  if (field.n_modes() == 0) return 0.0;
  return kl_basis(field.n_modes(), field.tau, field.d, y).dot(field.coefficients);
}

void DamageMap::validate() const {
  if (!(omega_min < 0.0 && omega_max > 0.0)) {
    throw std::invalid_argument("DamageMap: need omega_min < 0 < omega_max");
  }
}

double omega_from_log_a(double log_a_value, const DamageMap& map) {
  map.validate();
  return (map.omega_max - map.omega_min) /
             (1.0 - (map.omega_max / map.omega_min) * std::exp(log_a_value)) +
         map.omega_min;
}

double damage_omega(double y, const KLField& field, const DamageMap& map) {
  return omega_from_log_a(log_a(y, field), map);
}

// ----------------------------------------------------------------------------

namespace {

constexpr int kQuadraturePoints = 201;

std::vector<double> linspace(int n) {
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = n == 1 ? 0.5 : static_cast<double>(i) / (n - 1);
  return out;
}

}  // namespace

FieldObservationModel::FieldObservationModel(int n_modes, const FieldInversionConfig& cfg)
    : n_modes_(n_modes), cfg_(cfg) {
  if (n_modes_ < 1) throw std::invalid_argument("FieldObservationModel: need at least one mode");
  cfg_.map.validate();
  if (cfg_.observation == FieldObservation::identity_coefficients) return;
  if (cfg_.n_sensors < 1 || !(cfg_.kernel_width >= 0.0)) {
    throw std::invalid_argument("FieldObservationModel: invalid sensor layout");
  }
  if (cfg_.kernel_width == 0.0) cfg_.kernel_width = cfg_.n_sensors > 1 ? 1.0 / (cfg_.n_sensors - 1) : 1.0;
  sensors_ = linspace(cfg_.n_sensors);
  quad_nodes_ = linspace(kQuadraturePoints);

  smoothing_.resize(cfg_.n_sensors, kQuadraturePoints);
  for (int k = 0; k < cfg_.n_sensors; ++k) {
    for (int q = 0; q < kQuadraturePoints; ++q) {
      const double r = (sensors_[k] - quad_nodes_[q]) / cfg_.kernel_width;
      const double trapezoid = (q == 0 || q == kQuadraturePoints - 1) ? 0.5 : 1.0;
      smoothing_(k, q) = trapezoid * std::exp(-0.5 * r * r);
    }
    smoothing_.row(k) /= smoothing_.row(k).sum();
  }
  basis_.resize(kQuadraturePoints, n_modes_);
  for (int q = 0; q < kQuadraturePoints; ++q) {
    basis_.row(q) = kl_basis(n_modes_, cfg_.tau, cfg_.d, quad_nodes_[q]).transpose();
  }
}

int FieldObservationModel::n_y() const {
  return cfg_.observation == FieldObservation::identity_coefficients ? n_modes_ : cfg_.n_sensors;
}

Vector FieldObservationModel::evaluate(const Vector& theta) const {
  if (theta.size() != n_modes_) {
    throw ForwardError("FieldObservationModel: expected " + std::to_string(n_modes_) + " coefficients",
                       theta);
  }
  if (cfg_.observation == FieldObservation::identity_coefficients) return theta;
  const Vector log_a_values = basis_ * theta;
  const Vector omega =
      log_a_values.unaryExpr([this](double v) { return omega_from_log_a(v, cfg_.map); });
  return smoothing_ * omega;
}

double FieldEnvelope::coverage() const {
  if (y.empty()) return 0.0;
  int inside = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (omega_lo[i] <= omega_truth[i] && omega_truth[i] <= omega_hi[i]) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(y.size());
}

FieldEnvelope field_envelope(const GaussianState& posterior, const KLField& truth,
                             const FieldInversionConfig& cfg) {
  FieldEnvelope env;
  env.y = linspace(cfg.report_points);
  for (double y : env.y) {
    const Vector phi = kl_basis(posterior.dim(), cfg.tau, cfg.d, y);
    const double mu = phi.dot(posterior.mean);
    const double sd = std::sqrt(std::max(0.0, phi.dot(posterior.cov * phi)));
    env.omega_est.push_back(omega_from_log_a(mu, cfg.map));
    // omega decreases with log a.
    env.omega_lo.push_back(omega_from_log_a(mu + 2.0 * sd, cfg.map));
    env.omega_hi.push_back(omega_from_log_a(mu - 2.0 * sd, cfg.map));
    env.omega_truth.push_back(damage_omega(y, truth, cfg.map));
  }
  return env;
}

FieldProblem make_field_problem(const FieldInversionConfig& cfg) {
  if (cfg.n_modes_inferred < 1 || cfg.n_modes_inferred > cfg.n_modes_truth) {
    throw std::invalid_argument("synthetic_field_inversion: need 1 <= n_modes_inferred <= n_modes_truth");
  }
  if (cfg.observation == FieldObservation::identity_coefficients &&
      cfg.n_modes_inferred != cfg.n_modes_truth) {
    throw std::invalid_argument(
        "synthetic_field_inversion: identity observation needs equal truth and inferred modes");
  }
  if (!(cfg.noise >= 0.0) || !(cfg.sigma_eta > 0.0)) {
    throw std::invalid_argument("synthetic_field_inversion: invalid noise settings");
  }

  // Truth coefficients first, then the multiplicative noise, from one stream.
  Philox4x32 rng(cfg.seed);
  FieldProblem fp;
  fp.truth = {cfg.tau, cfg.d, Vector(cfg.n_modes_truth)};
  for (int l = 0; l < cfg.n_modes_truth; ++l) fp.truth.coefficients[l] = rng.normal();

  const FieldObservationModel truth_model(cfg.n_modes_truth, cfg);
  const Vector clean = truth_model.evaluate(fp.truth.coefficients);
  fp.observations = clean;
  for (Eigen::Index k = 0; k < clean.size(); ++k) fp.observations[k] += cfg.noise * clean[k] * rng.normal();

  auto model = std::make_shared<FieldObservationModel>(cfg.n_modes_inferred, cfg);
  const int n_y = model->n_y();
  fp.problem = std::make_shared<InverseProblem>(model, fp.observations,
                                                cfg.sigma_eta * cfg.sigma_eta * Matrix::Identity(n_y, n_y));
  return fp;
}

FieldInversionReport synthetic_field_inversion(const FieldInversionConfig& cfg, const EvaluationPool& pool) {
  FieldProblem fp = make_field_problem(cfg);
  FieldInversionReport report;
  report.truth = fp.truth;
  report.observations = fp.observations;

  // No damage, unit covariance.
  const GaussianState init(Vector::Zero(cfg.n_modes_inferred),
                           Matrix::Identity(cfg.n_modes_inferred, cfg.n_modes_inferred));
  UkiOptions opts;
  opts.n_max = cfg.n_iterations;
  opts.tol = 0.0;
  report.trace = uki_run(*fp.problem, init, opts, pool);

  for (const auto& it : report.trace.iterations) report.misfit_history.push_back(it.phi);
  report.envelope = field_envelope(report.trace.final_state(), report.truth, cfg);
  return report;
}

}  // namespace kalibr::damage
