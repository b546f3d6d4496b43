#pragma once

#include <string>
#include <vector>

#include "siamuap/geometry.hpp"
#include "siamuap/image.hpp"

namespace siamuap {

// One annotated video held in memory.
struct Sequence {
  std::string name;
  std::vector<Frame> frames;
  std::vector<Box> boxes;

  std::size_t length() const { return frames.size(); }
  Size frame_size() const {
    return frames.empty() ? Size{} : Size{frames.front().width(), frames.front().height()};
  }
};

using Dataset = std::vector<Sequence>;

}  // namespace siamuap
