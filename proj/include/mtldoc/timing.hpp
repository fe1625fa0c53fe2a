#pragma once

#include <ctime>

namespace mtldoc {

// CPU time consumed by the calling thread. Training times are measured this
// way so that other processes on the machine do not inflate them.
inline double thread_cpu_seconds() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

class CpuStopwatch {
 public:
  CpuStopwatch() : start_(thread_cpu_seconds()) {}
  double elapsed() const { return thread_cpu_seconds() - start_; }

 private:
  double start_;
};

}  // namespace mtldoc
