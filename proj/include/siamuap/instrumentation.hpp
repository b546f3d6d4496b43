#pragma once

#include <atomic>

namespace siamuap {

// Process-wide counters used to verify which code paths run.
struct Counters {
  std::atomic<long> forward_passes{0};
  std::atomic<long> gradient_evaluations{0};
  std::atomic<long> optimizer_steps{0};

  void reset() {
    forward_passes = 0;
    gradient_evaluations = 0;
    optimizer_steps = 0;
  }
};

inline Counters& counters() {
  static Counters instance;
  return instance;
}

}  // namespace siamuap
