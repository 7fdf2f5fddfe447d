#pragma once

#include "kalibr/gaussian.hpp"

#include <stdexcept>
#include <string>

namespace kalibr {

/// Failure of a forward evaluation; carries the offending parameter vector.
class ForwardError : public std::runtime_error {
 public:
  ForwardError(const std::string& what, Vector theta);
  const Vector& theta() const { return theta_; }

 private:
  Vector theta_;
};

/// Parameter-to-observation map G: R^n_theta -> R^n_y.
///
/// Implementations must be deterministic. Models that declare
/// parallel_safe() may be evaluated concurrently from several threads.
class ForwardModel {
 public:
  virtual ~ForwardModel() = default;

  virtual Vector evaluate(const Vector& theta) const = 0;
  virtual int n_theta() const = 0;
  virtual int n_y() const = 0;
  virtual bool parallel_safe() const { return true; }
};

/// G(theta) = sin(5 theta) + theta, scalar in and out.
class ToyModel final : public ForwardModel {
 public:
  static double value(double theta);

  Vector evaluate(const Vector& theta) const override;
  int n_theta() const override { return 1; }
  int n_y() const override { return 1; }
};

/// G(theta) = A theta + b.
class LinearModel final : public ForwardModel {
 public:
  LinearModel(Matrix a, Vector b);

  Vector evaluate(const Vector& theta) const override;
  int n_theta() const override { return static_cast<int>(a_.cols()); }
  int n_y() const override { return static_cast<int>(a_.rows()); }

  const Matrix& a() const { return a_; }
  const Vector& b() const { return b_; }

 private:
  Matrix a_;
  Vector b_;
};

}  // namespace kalibr
