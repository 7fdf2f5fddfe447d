#include "kalibr/forward_model.hpp"

#include <cmath>

namespace kalibr {

ForwardError::ForwardError(const std::string& what, Vector theta)
    : std::runtime_error(what), theta_(std::move(theta)) {}

double ToyModel::value(double theta) { return std::sin(5.0 * theta) + theta; }

Vector ToyModel::evaluate(const Vector& theta) const {
  if (theta.size() != 1) {
    throw ForwardError("ToyModel: expected a scalar parameter, got length " +
                           std::to_string(theta.size()),
                       theta);
  }
  return Vector::Constant(1, value(theta[0]));
}

LinearModel::LinearModel(Matrix a, Vector b) : a_(std::move(a)), b_(std::move(b)) {
  if (a_.rows() != b_.size() || a_.rows() == 0 || a_.cols() == 0) {
    throw std::invalid_argument("LinearModel: A is " + std::to_string(a_.rows()) + "x" +
                                std::to_string(a_.cols()) + " but b has length " +
                                std::to_string(b_.size()));
  }
}

Vector LinearModel::evaluate(const Vector& theta) const {
  if (theta.size() != a_.cols()) {
    throw ForwardError("LinearModel: expected parameter length " + std::to_string(a_.cols()) +
                           ", got " + std::to_string(theta.size()),
                       theta);
  }
  return a_ * theta + b_;
}

}  // namespace kalibr
