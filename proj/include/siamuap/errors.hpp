#pragma once

#include <stdexcept>

namespace siamuap {

// Optimization diverged or could not draw a usable sample.
class TrainingFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A file or directory on disk does not hold what its format promises.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace siamuap
