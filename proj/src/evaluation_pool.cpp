#include "kalibr/evaluation_pool.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <sstream>
#include <thread>

namespace kalibr {
namespace {

std::string describe(const std::vector<PointFailure>& failures) {
  std::ostringstream os;
  os << failures.size() << " forward evaluation(s) failed";
  if (!failures.empty()) {
    const auto& f = failures.front();
    os << "; first at point " << f.index << " theta=[";
    for (Eigen::Index i = 0; i < f.theta.size(); ++i) os << (i ? ", " : "") << f.theta[i];
    os << "]: " << f.message;
  }
  return os.str();
}

}  // namespace

BatchEvaluationError::BatchEvaluationError(std::vector<PointFailure> failures)
    : std::runtime_error(describe(failures)), failures_(std::move(failures)) {}

EvaluationPool::EvaluationPool(int width) : width_(width) {
  if (width_ <= 0) width_ = std::max(1u, std::thread::hardware_concurrency());
}

std::vector<Vector> EvaluationPool::evaluate(const ForwardModel& model,
                                             const std::vector<Vector>& points) const {
  std::vector<Vector> results(points.size());
  std::vector<PointFailure> failures;
  std::mutex failure_mutex;

  auto run_one = [&](std::size_t i) {
    try {
      Vector out = model.evaluate(points[i]);
      if (!out.allFinite()) throw ForwardError("non-finite model output", points[i]);
      results[i] = std::move(out);
    } catch (const std::exception& e) {
      std::lock_guard lock(failure_mutex);
      failures.push_back({i, points[i], e.what()});
    }
  };

  const std::size_t n_threads =
      model.parallel_safe() ? std::min<std::size_t>(width_, points.size()) : 1;
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < points.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> workers;
    workers.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < points.size(); i = next++) run_one(i);
      });
    }
  }

  if (!failures.empty()) {
    std::sort(failures.begin(), failures.end(),
              [](const PointFailure& a, const PointFailure& b) { return a.index < b.index; });
    throw BatchEvaluationError(std::move(failures));
  }
  return results;
}

}  // namespace kalibr
