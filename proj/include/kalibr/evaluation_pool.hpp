#pragma once

#include "kalibr/forward_model.hpp"

#include <string>
#include <vector>

namespace kalibr {

/// One failed evaluation inside a batch.
struct PointFailure {
  std::size_t index = 0;
  Vector theta;
  std::string message;
};

/// Raised after a batch finishes when one or more points failed.
class BatchEvaluationError : public std::runtime_error {
 public:
  explicit BatchEvaluationError(std::vector<PointFailure> failures);
  const std::vector<PointFailure>& failures() const { return failures_; }

 private:
  std::vector<PointFailure> failures_;
};

/// Evaluates a forward model over a batch of parameter vectors.
///
/// Results are stored by input index, so the outcome does not depend on
/// completion order. Models that are not parallel_safe() run serially.
class EvaluationPool {
 public:
  /// width <= 0 selects std::thread::hardware_concurrency().
  explicit EvaluationPool(int width = 0);

  int width() const { return width_; }

  std::vector<Vector> evaluate(const ForwardModel& model, const std::vector<Vector>& points) const;

 private:
  int width_;
};

}  // namespace kalibr
