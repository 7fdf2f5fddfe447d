#include "kalibr/mcmc.hpp"

#include "kalibr/random.hpp"

#include <cmath>
#include <limits>

namespace kalibr {

void ChainConfig::validate() const {
  if (!(step_size > 0.0)) throw std::invalid_argument("ChainConfig: step_size must be > 0");
  if (burn_in < 0 || burn_in >= n_samples) {
    throw std::invalid_argument("ChainConfig: need 0 <= burn_in < n_samples");
  }
}

ChainResult rwm_sample_potential(const std::function<double(const Vector&)>& potential,
                                 const Vector& theta0, const ChainConfig& cfg) {
  cfg.validate();
  double current_phi = potential(theta0);
  if (!std::isfinite(current_phi)) {
    throw std::invalid_argument("rwm_sample: potential is not finite at the starting point");
  }

  Philox4x32 rng(cfg.seed);
  ChainResult result;
  result.samples.reserve(cfg.n_samples - cfg.burn_in);
  Vector current = theta0;
  Vector proposal(theta0.size());

  for (int i = 0; i < cfg.n_samples; ++i) {
    for (Eigen::Index k = 0; k < proposal.size(); ++k) {
      proposal[k] = current[k] + cfg.step_size * rng.normal();
    }
    const double phi = potential(proposal);
    // The uniform is drawn for every proposal so the stream layout does not
    // depend on the accept/reject history.
    const double u = rng.uniform();
    ++result.proposals;
    if (std::isfinite(phi) && std::log(u) < current_phi - phi) {
      current = proposal;
      current_phi = phi;
      ++result.accepted;
    }
    if (i >= cfg.burn_in) result.samples.push_back(current);
  }
  result.acceptance_rate =
      static_cast<double>(result.accepted) / static_cast<double>(result.proposals);
  return result;
}

ChainResult rwm_sample(const InverseProblem& problem, const Vector& theta0, const ChainConfig& cfg) {
  if (theta0.size() != problem.n_theta()) {
    throw std::invalid_argument("rwm_sample: theta0 has the wrong dimension");
  }
  double phi0 = std::numeric_limits<double>::quiet_NaN();
  try {
    phi0 = misfit_at(problem, theta0);
  } catch (const ForwardError& e) {
    throw std::invalid_argument(std::string("rwm_sample: forward model fails at theta0: ") + e.what());
  }
  if (!std::isfinite(phi0)) throw std::invalid_argument("rwm_sample: misfit is not finite at theta0");

  return rwm_sample_potential(
      [&problem](const Vector& theta) {
        try {
          return misfit_at(problem, theta);
        } catch (const ForwardError&) {
          return std::numeric_limits<double>::infinity();
        }
      },
      theta0, cfg);
}

PosteriorStats posterior_stats(const ChainResult& result) {
  const auto& s = result.samples;
  if (s.size() < 2) throw std::invalid_argument("posterior_stats: need at least 2 samples");
  const Eigen::Index n = s.front().size();
  PosteriorStats out{Vector::Zero(n), Matrix::Zero(n, n)};
  for (const auto& x : s) out.mean += x;
  out.mean /= static_cast<double>(s.size());
  for (const auto& x : s) out.cov.noalias() += (x - out.mean) * (x - out.mean).transpose();
  out.cov /= static_cast<double>(s.size() - 1);
  return out;
}

}  // namespace kalibr
