#include "kalibr/inversion.hpp"

#include <cmath>

namespace kalibr {
namespace {

Vector central_gradient(const Objective& f, const Vector& x, double relative_step) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = relative_step * std::max(1.0, std::abs(x[i]));
    Vector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (xp[i] - xm[i]);
  }
  return g;
}

}  // namespace

QuasiNewtonTrace fd_quasi_newton(const Objective& objective, const Vector& theta0,
                                 const QuasiNewtonOptions& opts) {
  QuasiNewtonTrace trace;
  Vector x = theta0;
  double fx = objective(x);
  if (!std::isfinite(fx)) throw std::invalid_argument("fd_quasi_newton: objective not finite at theta0");
  trace.iterates.push_back(x);
  trace.values.push_back(fx);

  const Eigen::Index n = x.size();
  Vector g = central_gradient(objective, x, opts.relative_step);
  // Initial inverse Hessian scaled so the first trial step is at most unit length.
  Matrix h_inv = Matrix::Identity(n, n) / std::max(1.0, g.norm());

  for (int k = 0; k < opts.n_max; ++k) {
    if (g.norm() <= opts.gradient_tol) {
      trace.converged = true;
      break;
    }
    Vector p = -h_inv * g;
    double slope = g.dot(p);
    if (!(slope < 0.0)) {
      h_inv = Matrix::Identity(n, n) / std::max(1.0, g.norm());
      p = -h_inv * g;
      slope = g.dot(p);
    }

    // Armijo backtracking.
    double alpha = 1.0;
    Vector x_new = x + p;
    double f_new = objective(x_new);
    while (!(std::isfinite(f_new) && f_new <= fx + 1e-4 * alpha * slope)) {
      alpha *= 0.5;
      if (alpha < 1e-16) break;
      x_new = x + alpha * p;
      f_new = objective(x_new);
    }
    if (alpha < 1e-16 || x_new == x) {
      trace.line_search_failed = true;
      break;
    }

    const Vector s = x_new - x;
    const Vector g_new = central_gradient(objective, x_new, opts.relative_step);
    const Vector yv = g_new - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (k == 0) h_inv *= sy / yv.squaredNorm();
      const double rho = 1.0 / sy;
      const Matrix eye = Matrix::Identity(n, n);
      h_inv = (eye - rho * s * yv.transpose()) * h_inv * (eye - rho * yv * s.transpose()) +
              rho * s * s.transpose();
    }

    const double decrease = fx - f_new;
    x = x_new;
    fx = f_new;
    g = g_new;
    trace.iterates.push_back(x);
    trace.values.push_back(fx);

    if (decrease <= 1e-15 * (1.0 + std::abs(fx)) && s.norm() <= 1e-12 * (1.0 + x.norm())) {
      trace.converged = true;
      break;
    }
  }
  return trace;
}

}  // namespace kalibr
