#include <doctest.h>

#include "kalibr/mcmc.hpp"

#include <cmath>
#include <limits>

using namespace kalibr;

TEST_CASE("constant potential accepts every proposal") {
  ChainConfig cfg;
  cfg.n_samples = 2000;
  cfg.burn_in = 100;
  cfg.seed = 3;
  auto r = rwm_sample_potential([](const Vector&) { return 1.25; }, Vector::Zero(2), cfg);
  CHECK(r.acceptance_rate == 1.0);
  CHECK(r.samples.size() == 1900);
  CHECK(r.proposals == 2000);
}

TEST_CASE("scalar Gaussian target") {
  const double sigma = 0.3;
  ChainConfig cfg;
  cfg.step_size = 0.75;
  cfg.n_samples = 50000;
  cfg.burn_in = 1000;
  cfg.seed = 2024;
  auto r = rwm_sample_potential([&](const Vector& x) { return 0.5 * x.squaredNorm() / (sigma * sigma); },
                                Vector::Zero(1), cfg);
  auto s = posterior_stats(r);
  CHECK(std::abs(s.mean[0]) <= 0.02);
  CHECK(std::abs(std::sqrt(s.cov(0, 0)) - sigma) <= 0.05 * sigma);
  CHECK(std::abs(s.cov(0, 0) - sigma * sigma) <= 0.10 * sigma * sigma);
}

TEST_CASE("two-level target: occupation matches the density ratio") {
  // Density 1 on [0,1), 1/3 on [1,2), 0 elsewhere.
  const auto potential = [](const Vector& x) {
    if (x[0] < 0.0 || x[0] >= 2.0) return std::numeric_limits<double>::infinity();
    return x[0] < 1.0 ? 0.0 : std::log(3.0);
  };
  ChainConfig cfg;
  cfg.step_size = 0.6;
  cfg.n_samples = 200000;
  cfg.burn_in = 1000;
  cfg.seed = 17;
  auto r = rwm_sample_potential(potential, Vector::Constant(1, 0.5), cfg);
  double low = 0.0;
  for (const auto& x : r.samples) low += x[0] < 1.0;
  low /= static_cast<double>(r.samples.size());
  CHECK(std::abs(low - 0.75) <= 0.02);
}

TEST_CASE("chains are reproducible per seed") {
  const auto potential = [](const Vector& x) { return 0.5 * x.squaredNorm(); };
  ChainConfig cfg;
  cfg.step_size = 0.5;
  cfg.n_samples = 3000;
  cfg.burn_in = 0;
  cfg.seed = 8;
  auto a = rwm_sample_potential(potential, Vector::Zero(2), cfg);
  auto b = rwm_sample_potential(potential, Vector::Zero(2), cfg);
  cfg.seed = 9;
  auto c = rwm_sample_potential(potential, Vector::Zero(2), cfg);
  REQUIRE(a.samples.size() == b.samples.size());
  bool same_as_c = true;
  for (std::size_t k = 0; k < a.samples.size(); ++k) {
    CHECK(a.samples[k] == b.samples[k]);
    same_as_c = same_as_c && a.samples[k] == c.samples[k];
  }
  CHECK_FALSE(same_as_c);
}

TEST_CASE("forward failures reject proposals; failure at the start is fatal") {
  class HalfLine final : public ForwardModel {
   public:
    Vector evaluate(const Vector& t) const override {
      if (t[0] < 0.0) throw ForwardError("negative", t);
      return t;
    }
    int n_theta() const override { return 1; }
    int n_y() const override { return 1; }
  };
  InverseProblem p(std::make_shared<HalfLine>(), Vector::Zero(1), Matrix::Identity(1, 1));
  ChainConfig cfg;
  cfg.step_size = 0.5;
  cfg.n_samples = 5000;
  cfg.burn_in = 0;
  auto r = rwm_sample(p, Vector::Constant(1, 0.1), cfg);
  for (const auto& x : r.samples) CHECK(x[0] >= 0.0);
  CHECK(r.acceptance_rate < 1.0);
  CHECK_THROWS_AS(rwm_sample(p, Vector::Constant(1, -1.0), cfg), std::invalid_argument);
}

TEST_CASE("posterior statistics") {
  ChainResult same;
  same.samples = {Vector::Constant(1, 4.0), Vector::Constant(1, 4.0)};
  auto s = posterior_stats(same);
  CHECK(s.mean[0] == 4.0);
  CHECK(s.cov(0, 0) == 0.0);

  ChainResult two;
  two.samples = {Vector::Constant(1, 0.0), Vector::Constant(1, 2.0)};
  auto t = posterior_stats(two);
  CHECK(t.mean[0] == 1.0);
  CHECK(t.cov(0, 0) == 2.0);
}

TEST_CASE("chain configuration validation") {
  ChainConfig cfg;
  cfg.step_size = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.step_size = 0.1;
  cfg.burn_in = cfg.n_samples;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
