#include <doctest.h>

#include "kalibr/damage_field.hpp"
#include "kalibr/random.hpp"

#include <cmath>
#include <limits>
#include <numbers>

using namespace kalibr;
using namespace kalibr::damage;

namespace {

// Composite Simpson on [0, 1] with n + 1 points.
template <typename F>
double integrate(F f, int n = 1000) {
  const double h = 1.0 / n;
  double s = f(0.0) + f(1.0);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return s * h / 3.0;
}

}  // namespace

TEST_CASE("KL eigenpairs") {
  KLField field;
  const double pi2 = std::numbers::pi * std::numbers::pi;
  CHECK(std::abs(kl_eigenpair(1, field, 0.0).lambda - 1.0 / (pi2 + 4.0)) <= 1e-12);
  CHECK(kl_eigenpair(1, field, 0.0).lambda == doctest::Approx(0.0721001).epsilon(1e-6));
  for (int l = 1; l <= 12; ++l) CHECK(kl_eigenpair(l, field, 0.0).psi == doctest::Approx(std::sqrt(2.0)));
  KLField rough{2.0, 2.0, Vector()};
  CHECK(kl_eigenpair(2, rough, 0.3).lambda == doctest::Approx(std::pow(4.0 * pi2 + 4.0, -2.0)));
  CHECK_THROWS_AS(kl_eigenpair(0, field, 0.5), std::invalid_argument);
}

TEST_CASE("KL basis functions are orthonormal") {
  KLField field;
  for (int l = 1; l <= 10; ++l) {
    for (int m = 1; m <= 10; ++m) {
      const double ip = integrate([&](double y) {
        return kl_eigenpair(l, field, y).psi * kl_eigenpair(m, field, y).psi;
      });
      CHECK(std::abs(ip - (l == m ? 1.0 : 0.0)) <= 1e-6);
    }
  }
}

TEST_CASE("log a examples") {
  KLField zero{2.0, 1.0, Vector::Zero(6)};
  for (double y : {0.0, 0.3, 1.0}) CHECK(log_a(y, zero) == 0.0);
  KLField first{2.0, 1.0, Vector{{1.0, 0.0, 0.0}}};
  CHECK(log_a(0.0, first) == doctest::Approx(0.379737).epsilon(1e-6));
  CHECK(log_a(0.0, first) == doctest::Approx(std::sqrt(2.0 / (std::numbers::pi * std::numbers::pi + 4.0))));
  KLField third{2.0, 1.0, Vector{{0.0, 0.0, 1.7}}};
  CHECK(std::abs(integrate([&](double y) { return log_a(y, third); })) <= 1e-10);
  const Vector basis = kl_basis(3, 2.0, 1.0, 0.25);
  CHECK(basis[0] * 1.0 == doctest::Approx(log_a(0.25, first)));
}

TEST_CASE("damage map") {
  DamageMap map;
  CHECK(omega_from_log_a(0.0, map) == 0.0);
  KLField zero{2.0, 1.0, Vector::Zero(4)};
  for (int i = 0; i <= 100; ++i) CHECK(damage_omega(i / 100.0, zero, map) == 0.0);
  CHECK(omega_from_log_a(50.0, map) == doctest::Approx(-0.1).epsilon(1e-12));
  CHECK(omega_from_log_a(-50.0, map) == doctest::Approx(0.9).epsilon(1e-12));
  for (double la : {-3.0, -0.5, 0.7, 2.0}) {
    CHECK(omega_from_log_a(la, map) == doctest::Approx(1.0 / (1.0 + 9.0 * std::exp(la)) - 0.1).epsilon(1e-14));
  }
  Philox4x32 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    KLField f{2.0, 1.0, Vector(10)};
    for (int l = 0; l < 10; ++l) f.coefficients[l] = 3.0 * rng.normal();
    for (int i = 0; i <= 50; ++i) {
      const double w = damage_omega(i / 50.0, f, map);
      CHECK(w > -0.1);
      CHECK(w < 0.9);
    }
  }
  double prev = omega_from_log_a(-10.0, map);
  for (int i = 1; i < 10000; ++i) {
    const double w = omega_from_log_a(-10.0 + 20.0 * i / 9999.0, map);
    CHECK(w < prev);
    prev = w;
  }
  DamageMap bad{0.5, 0.2};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("noise-free identity observation recovers the coefficients") {
  FieldInversionConfig cfg;
  cfg.n_modes_truth = 3;
  cfg.n_modes_inferred = 3;
  cfg.noise = 0.0;
  cfg.seed = 12;
  cfg.n_iterations = 30;
  cfg.observation = FieldObservation::identity_coefficients;
  const auto report = synthetic_field_inversion(cfg);
  const Vector est = report.trace.final_state().mean;
  CHECK((est - report.truth.coefficients).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("smoothed observation operator") {
  FieldInversionConfig cfg;
  FieldObservationModel model(5, cfg);
  CHECK(model.n_y() == 12);
  CHECK(model.evaluate(Vector::Zero(5)) == Vector::Zero(12));
  CHECK(model.sensors().front() >= 0.0);
  CHECK(model.sensors().back() <= 1.0);
}

TEST_CASE("default synthetic inversion: envelope and misfit decay") {
  FieldInversionConfig cfg;
  cfg.seed = 1;
  const auto report = synthetic_field_inversion(cfg);
  REQUIRE(report.envelope.y.size() == 101);
  CHECK(report.envelope.coverage() >= 0.8);
  REQUIRE(report.misfit_history.size() == 16);
  CHECK(report.misfit_history.front() >= 10.0 * report.misfit_history.back());
  for (std::size_t i = 0; i < report.envelope.y.size(); ++i) {
    CHECK(report.envelope.omega_lo[i] <= report.envelope.omega_est[i]);
    CHECK(report.envelope.omega_est[i] <= report.envelope.omega_hi[i]);
  }
  const auto again = synthetic_field_inversion(cfg);
  CHECK(again.trace.final_state().mean == report.trace.final_state().mean);
}
