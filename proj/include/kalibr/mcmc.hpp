#pragma once

#include "kalibr/inversion.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace kalibr {

struct ChainConfig {
  double step_size = 1e-2;
  /// Total proposals including burn-in.
  int n_samples = 50000;
  int burn_in = 10000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ChainResult {
  std::vector<Vector> samples;  // post burn-in
  double acceptance_rate = 0.0;
  long accepted = 0;
  long proposals = 0;
};

/// Random-walk Metropolis with isotropic N(0, step^2 I) proposals on a
/// target exp(-potential). Non-finite potentials reject the proposal.
ChainResult rwm_sample_potential(const std::function<double(const Vector&)>& potential,
                                 const Vector& theta0, const ChainConfig& cfg);

/// Random-walk Metropolis on exp(-Phi) with the improper uniform prior.
/// Forward failures at a proposal count as rejections.
ChainResult rwm_sample(const InverseProblem& problem, const Vector& theta0, const ChainConfig& cfg);

struct PosteriorStats {
  Vector mean;
  Matrix cov;  // unbiased
};

PosteriorStats posterior_stats(const ChainResult& result);

}  // namespace kalibr
