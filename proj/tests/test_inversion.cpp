#include <doctest.h>

#include "kalibr/inversion.hpp"
#include "kalibr/random.hpp"

#include <cmath>

using namespace kalibr;

namespace {

std::shared_ptr<InverseProblem> scalar_identity() {
  return std::make_shared<InverseProblem>(std::make_shared<LinearModel>(Matrix::Identity(1, 1), Vector::Zero(1)),
                                          Vector::Ones(1), Matrix::Identity(1, 1));
}

std::shared_ptr<InverseProblem> toy_problem() {
  return std::make_shared<InverseProblem>(std::make_shared<ToyModel>(), Vector::Zero(1), Matrix::Identity(1, 1));
}

GaussianState scalar_state(double m, double c) { return {Vector::Constant(1, m), Matrix::Constant(1, 1, c)}; }

bool near_toy_minimizer(double x, double tol) {
  for (double r : {-0.981, -0.821, 0.0, 0.821, 0.981})
    if (std::abs(x - r) <= tol) return true;
  return false;
}

struct RandomLinear {
  Matrix a;
  Vector b, y;
  Matrix sigma;
};

RandomLinear random_linear(std::uint64_t seed, int n_y, int n_theta) {
  Philox4x32 rng(seed);
  RandomLinear p;
  p.a.resize(n_y, n_theta);
  for (int i = 0; i < n_y; ++i)
    for (int j = 0; j < n_theta; ++j) p.a(i, j) = rng.normal();
  p.b.resize(n_y);
  p.y.resize(n_y);
  for (int i = 0; i < n_y; ++i) {
    p.b[i] = rng.normal();
    p.y[i] = rng.normal();
  }
  Matrix l = Matrix::Zero(n_y, n_y);
  for (int i = 0; i < n_y; ++i)
    for (int j = 0; j <= i; ++j) l(i, j) = (i == j ? 1.0 : 0.3 * rng.normal());
  p.sigma = 0.04 * l * l.transpose();
  return p;
}

}  // namespace

TEST_CASE("misfit examples") {
  auto p = scalar_identity();
  CHECK(misfit(*p, Vector::Ones(1)) == 0.0);
  CHECK(misfit(*p, Vector::Zero(1)) == 0.5);
  InverseProblem q(std::make_shared<LinearModel>(Matrix::Identity(2, 2), Vector::Zero(2)), Vector{{2.0, 0.0}},
                   4.0 * Matrix::Identity(2, 2));
  CHECK(misfit(q, Vector::Zero(2)) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(misfit(q, Vector::Zero(3)), std::invalid_argument);
}

TEST_CASE("scalar identity problem: one hand-evaluated step") {
  auto p = scalar_identity();
  auto r = uki_step(scalar_state(0.0, 1.0), *p);
  CHECK(std::abs(r.state.mean[0] - 0.5) <= 1e-12);
  CHECK(std::abs(r.state.cov(0, 0) - 1.0) <= 1e-12);
  CHECK(r.diagnostics.predicted_cov(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(r.diagnostics.phi_center == 0.5);
}

TEST_CASE("scalar identity problem follows m_{n+1} = m_n + (1 - m_n) / 2") {
  auto p = scalar_identity();
  UkiOptions opts;
  opts.n_max = 30;
  opts.tol = 0.0;
  auto trace = uki_run(*p, scalar_state(0.0, 1.0), opts);
  REQUIRE(trace.iterations.size() == 31);
  double m = 0.0;
  for (const auto& it : trace.iterations) {
    CHECK(std::abs(it.state.mean[0] - m) <= 1e-12);
    CHECK(std::abs(it.state.cov(0, 0) - 1.0) <= 1e-12);
    CHECK(it.phi == doctest::Approx(0.5 * (1.0 - m) * (1.0 - m)).epsilon(1e-12));
    m = m + 0.5 * (1.0 - m);
  }
  CHECK(std::abs(trace.final_state().mean[0] - 1.0) <= 1e-6);
}

TEST_CASE("zero innovation leaves the mean unchanged") {
  auto model = std::make_shared<LinearModel>(Matrix{{1.0, 2.0}, {0.5, -1.0}, {3.0, 0.0}}, Vector{{0.1, 0.2, 0.3}});
  const Vector m0{{0.7, -0.4}};
  InverseProblem p(model, model->evaluate(m0), 0.01 * Matrix::Identity(3, 3));
  auto r = uki_step(GaussianState(m0, Matrix::Identity(2, 2)), p);
  CHECK((r.state.mean - m0).norm() <= 1e-14);
}

TEST_CASE("linear problems converge to the normal-equations solution") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const int n_theta = 1 + static_cast<int>(seed % 4);
    const int n_y = n_theta + 2;
    const RandomLinear lp = random_linear(seed, n_y, n_theta);
    InverseProblem p(std::make_shared<LinearModel>(lp.a, lp.b), lp.y, lp.sigma);

    const Matrix info = lp.a.transpose() * lp.sigma.llt().solve(lp.a);
    const Vector lsq = info.llt().solve(lp.a.transpose() * lp.sigma.llt().solve(lp.y - lp.b));

    UkiOptions opts;
    opts.n_max = 30;
    opts.tol = 0.0;
    auto trace = uki_run(p, GaussianState(Vector::Zero(n_theta), Matrix::Identity(n_theta, n_theta)), opts);
    const auto& fin = trace.final_state();
    CAPTURE(seed);
    CHECK((fin.mean - lsq).norm() <= 1e-8 * (1.0 + lsq.norm()));
    const Matrix post = info.inverse();
    CHECK((fin.cov - post).norm() <= 1e-6 * post.norm());
  }
}

TEST_CASE("covariance stays SPD and symmetric on the toy problem") {
  auto p = toy_problem();
  UkiOptions opts;
  opts.n_max = 30;
  opts.tol = 0.0;
  for (double m0 : {10.0, 11.0, 12.0}) {
    auto trace = uki_run(*p, scalar_state(m0, 1.0), opts);
    for (const auto& it : trace.iterations) {
      CHECK(it.state.cov(0, 0) > 0.0);
      CHECK(std::isfinite(it.state.mean[0]));
    }
    CAPTURE(m0);
    CHECK(near_toy_minimizer(trace.final_state().mean[0], 0.05));
  }
}

TEST_CASE("UKI from m0 = 10 with default tolerance ends near a global minimizer") {
  auto p = toy_problem();
  auto trace = uki_run(*p, scalar_state(10.0, 1.0), UkiOptions{});
  CHECK(near_toy_minimizer(trace.final_state().mean[0], 0.05));
}

TEST_CASE("UKI is deterministic and independent of pool width") {
  const RandomLinear lp = random_linear(99, 6, 4);
  InverseProblem p(std::make_shared<LinearModel>(lp.a, lp.b), lp.y, lp.sigma);
  UkiOptions opts;
  opts.n_max = 10;
  opts.tol = 0.0;
  const GaussianState init(Vector::Zero(4), Matrix::Identity(4, 4));
  auto a = uki_run(p, init, opts, EvaluationPool(1));
  auto b = uki_run(p, init, opts, EvaluationPool(7));
  auto c = uki_run(p, init, opts, EvaluationPool(1));
  REQUIRE(a.iterations.size() == b.iterations.size());
  for (std::size_t k = 0; k < a.iterations.size(); ++k) {
    CHECK(a.iterations[k].state.mean == b.iterations[k].state.mean);
    CHECK(a.iterations[k].state.cov == b.iterations[k].state.cov);
    CHECK(a.iterations[k].state.mean == c.iterations[k].state.mean);
    CHECK(a.iterations[k].phi == b.iterations[k].phi);
  }
}

TEST_CASE("UKI option validation and failure reporting") {
  auto p = toy_problem();
  UkiOptions opts;
  opts.n_max = 0;
  CHECK_THROWS_AS(uki_run(*p, scalar_state(1.0, 1.0), opts), std::invalid_argument);

  class Fails final : public ForwardModel {
   public:
    Vector evaluate(const Vector& t) const override {
      if (t[0] > 0.5) throw ForwardError("boom", t);
      return t;
    }
    int n_theta() const override { return 1; }
    int n_y() const override { return 1; }
  };
  InverseProblem q(std::make_shared<Fails>(), Vector::Zero(1), Matrix::Identity(1, 1));
  opts.n_max = 5;
  try {
    uki_run(q, scalar_state(0.0, 1.0), opts);
    FAIL("expected CalibrationError");
  } catch (const CalibrationError& e) {
    CHECK(std::string(e.what()).find("iteration 0") != std::string::npos);
    CHECK(e.partial_trace().iterations.size() == 1);
  }
}

TEST_CASE("ETKI on a linear scalar problem approaches least squares") {
  auto model = std::make_shared<LinearModel>(Matrix{{2.0}, {1.0}, {-1.0}}, Vector::Zero(3));
  const Vector y{{2.2, 0.9, -1.3}};
  InverseProblem p(model, y, 0.01 * Matrix::Identity(3, 3));
  const double lsq = (2.0 * 2.2 + 0.9 + 1.3) / 6.0;
  auto trace = etki_run(p, scalar_state(0.0, 1.0), 10, 3, 30);
  REQUIRE(trace.iterations.size() == 31);
  CHECK(std::abs(trace.iterations.back().mean[0] - lsq) <= 0.05 * std::abs(lsq));
}

TEST_CASE("ETKI on the toy problem oscillates without diverging") {
  auto p = toy_problem();
  auto trace = etki_run(*p, scalar_state(11.0, 1.0), 10, 7, 30);
  for (std::size_t k = 10; k < trace.iterations.size(); ++k) {
    CHECK(std::abs(trace.iterations[k].mean[0]) < 3.0);
    CHECK(trace.iterations[k].cov(0, 0) > 0.0);
    CHECK(std::isfinite(trace.iterations[k].phi));
  }
}

TEST_CASE("ETKI is reproducible for a seed and rejects degenerate ensembles") {
  auto p = toy_problem();
  auto a = etki_run(*p, scalar_state(2.0, 1.0), 8, 5, 10);
  auto b = etki_run(*p, scalar_state(2.0, 1.0), 8, 5, 10, EvaluationPool(3));
  for (std::size_t k = 0; k < a.iterations.size(); ++k) CHECK(a.iterations[k].mean == b.iterations[k].mean);

  auto model = std::make_shared<LinearModel>(Matrix::Identity(1, 1), Vector::Zero(1));
  InverseProblem q(model, Vector::Ones(1), Matrix::Identity(1, 1));
  EnsembleState at_optimum{std::vector<Vector>(5, Vector::Ones(1))};
  CHECK_THROWS_AS(etki_step(at_optimum, q), DegenerateEnsemble);
}

TEST_CASE("ETKI step at the optimum keeps the mean") {
  auto model = std::make_shared<LinearModel>(Matrix::Identity(1, 1), Vector::Zero(1));
  InverseProblem q(model, Vector::Ones(1), Matrix::Identity(1, 1));
  EnsembleState ens{{Vector::Constant(1, 0.9), Vector::Constant(1, 1.1), Vector::Constant(1, 1.0)}};
  auto next = etki_step(ens, q);
  CHECK(std::abs(next.mean()[0] - 1.0) <= 1e-14);
}

TEST_CASE("finite-difference quasi-Newton") {
  SUBCASE("convex quadratic") {
    auto t = fd_quasi_newton([](const Vector& x) { return 0.5 * x.squaredNorm(); }, Vector::Ones(1));
    CHECK(std::abs(t.iterates.back()[0]) <= 1e-8);
    CHECK(t.converged);
  }
  SUBCASE("constant objective stops at the start") {
    auto t = fd_quasi_newton([](const Vector&) { return 3.0; }, Vector::Constant(1, 4.2));
    CHECK(t.converged);
    CHECK(t.iterates.size() == 1);
    CHECK(t.iterates.back()[0] == 4.2);
  }
  SUBCASE("toy objective is trapped far from the global minimizers") {
    auto p = toy_problem();
    for (double x0 : {10.0, 11.0, 12.0}) {
      auto t = fd_quasi_newton([&](const Vector& x) { return misfit_at(*p, x); }, Vector::Constant(1, x0));
      CAPTURE(x0);
      CHECK(std::abs(t.iterates.back()[0]) > 1.5);
      const double x = t.iterates.back()[0];
      CHECK(std::abs(ToyModel::value(x) * (5.0 * std::cos(5.0 * x) + 1.0)) < 1e-6);
    }
  }
}
