#include "kalibr/inversion.hpp"
#include "kalibr/random.hpp"

#include <cmath>

namespace kalibr {

Vector EnsembleState::mean() const {
  if (members.empty()) throw std::invalid_argument("EnsembleState: empty ensemble");
  Vector m = Vector::Zero(members.front().size());
  for (const auto& x : members) m += x;
  return m / static_cast<double>(members.size());
}

Matrix EnsembleState::covariance() const {
  if (members.size() < 2) throw std::invalid_argument("EnsembleState: need at least 2 members");
  const Vector m = mean();
  Matrix c = Matrix::Zero(m.size(), m.size());
  for (const auto& x : members) c.noalias() += (x - m) * (x - m).transpose();
  return c / static_cast<double>(members.size() - 1);
}

EnsembleState EnsembleState::draw(const GaussianState& dist, int size, std::uint64_t seed) {
  if (size < 2) throw std::invalid_argument("EnsembleState: ensemble size must be >= 2");
  const Matrix l = cholesky_lower(dist.cov);
  Philox4x32 rng(seed);
  EnsembleState ens;
  ens.members.reserve(size);
  for (int j = 0; j < size; ++j) {
    Vector xi(dist.dim());
    for (int i = 0; i < dist.dim(); ++i) xi[i] = rng.normal();
    ens.members.push_back(dist.mean + l * xi);
  }
  return ens;
}

EnsembleState etki_step(const EnsembleState& ens, const InverseProblem& problem,
                        const EvaluationPool& pool) {
  const int j_size = ens.size();
  if (j_size < 2) throw std::invalid_argument("etki_step: ensemble size must be >= 2");
  const int n_theta = problem.n_theta();
  const double scale = std::sqrt(static_cast<double>(j_size - 1));

  const Vector m = ens.mean();
  Matrix x(n_theta, j_size);
  for (int j = 0; j < j_size; ++j) x.col(j) = (ens.members[j] - m) / scale;
  if (x.cwiseAbs().maxCoeff() == 0.0) {
    throw DegenerateEnsemble("etki_step: ensemble has zero spread");
  }

  // Prediction: inflate anomalies so that C_hat = 2 C_n.
  x *= std::sqrt(2.0);
  std::vector<Vector> predicted(j_size);
  for (int j = 0; j < j_size; ++j) predicted[j] = m + scale * x.col(j);

  const std::vector<Vector> outputs = pool.evaluate(problem.forward(), predicted);
  Vector y_mean = Vector::Zero(problem.n_y());
  for (const auto& g : outputs) y_mean += g;
  y_mean /= static_cast<double>(j_size);

  Matrix y_anom(problem.n_y(), j_size);
  for (int j = 0; j < j_size; ++j) y_anom.col(j) = (outputs[j] - y_mean) / scale;

  // Whiten against Sigma_nu = 2 Sigma_eta.
  const auto l_nu = (std::sqrt(2.0) * problem.noise_factor()).eval();
  const Matrix s = l_nu.triangularView<Eigen::Lower>().solve(y_anom);
  const Vector innovation = l_nu.triangularView<Eigen::Lower>().solve(problem.y() - y_mean);

  Matrix t_inv = Matrix::Identity(j_size, j_size) + s.transpose() * s;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(t_inv));
  if (eig.info() != Eigen::Success) throw DegenerateEnsemble("etki_step: transform eigensolve failed");
  const Vector inv_vals = eig.eigenvalues().cwiseInverse();
  const Matrix t = eig.eigenvectors() * inv_vals.asDiagonal() * eig.eigenvectors().transpose();
  const Matrix t_sqrt =
      eig.eigenvectors() * inv_vals.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();

  const Vector new_mean = m + x * (t * (s.transpose() * innovation));
  const Matrix new_anom = x * t_sqrt;

  EnsembleState out;
  out.members.resize(j_size);
  for (int j = 0; j < j_size; ++j) out.members[j] = new_mean + scale * new_anom.col(j);
  return out;
}

EtkiTrace etki_run(const InverseProblem& problem, const GaussianState& init, int ensemble_size,
                   std::uint64_t seed, int n_max, const EvaluationPool& pool) {
  if (n_max < 1) throw std::invalid_argument("etki_run: n_max must be >= 1");
  init.validate();
  EtkiTrace trace;
  EnsembleState ens = EnsembleState::draw(init, ensemble_size, seed);

  auto record = [&](int index) {
    const Vector mean = ens.mean();
    trace.iterations.push_back({index, mean, ens.covariance(), misfit_at(problem, mean)});
  };
  record(0);
  for (int n = 0; n < n_max; ++n) {
    ens = etki_step(ens, problem, pool);
    record(n + 1);
  }
  trace.final_ensemble = std::move(ens);
  return trace;
}

}  // namespace kalibr
