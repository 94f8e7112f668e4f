#pragma once

#include <cmath>
#include <cstddef>
#include <functional>

namespace spml {

// Neumaier-compensated accumulator. Summation order is the caller's order.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      compensation_ += (sum_ - t) + x;
    } else {
      compensation_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

// Worker cap from SPML_LAB_THREADS (default 1).
std::size_t worker_count();

// Runs body(i) for i in [0, n) across up to worker_count() threads. Each index
// is visited exactly once; callers write results into per-index slots so the
// outcome does not depend on scheduling. The first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace spml
