#pragma once

// Independent oracles and small generators shared by the test binaries.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "siamuap/geometry.hpp"
#include "siamuap/image.hpp"

namespace siamuap::oracle {

// Counts unit pixels [x, x+1) x [y, y+1) covered by integer-coordinate boxes.
inline double raster_iou(const Box& a, const Box& b) {
  const int lo_x = static_cast<int>(std::min(a.x0, b.x0));
  const int hi_x = static_cast<int>(std::max(a.x1, b.x1));
  const int lo_y = static_cast<int>(std::min(a.y0, b.y0));
  const int hi_y = static_cast<int>(std::max(a.y1, b.y1));
  long inter = 0, uni = 0;
  for (int y = lo_y; y < hi_y; ++y) {
    for (int x = lo_x; x < hi_x; ++x) {
      const bool in_a = x >= a.x0 && x + 1 <= a.x1 && y >= a.y0 && y + 1 <= a.y1;
      const bool in_b = x >= b.x0 && x + 1 <= b.x1 && y >= b.y0 && y + 1 <= b.y1;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// Grid scan written from the cell-center formula s/2 + i*s, inclusive borders.
inline std::vector<double> brute_force_cls(const Box& b, int stride, int grid) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(grid) * grid);
  for (int j = 0; j < grid; ++j) {
    for (int i = 0; i < grid; ++i) {
      const double cx = stride / 2 + i * stride;
      const double cy = stride / 2 + j * stride;
      out.push_back(cx >= b.x0 && cx <= b.x1 && cy >= b.y0 && cy <= b.y1 ? 1.0 : 0.0);
    }
  }
  return out;
}

inline Box random_box(std::mt19937_64& rng, double lo, double hi, double min_side = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  double x0 = u(rng), x1 = u(rng), y0 = u(rng), y1 = u(rng);
  if (x0 > x1) std::swap(x0, x1);
  if (y0 > y1) std::swap(y0, y1);
  if (x1 - x0 < min_side) x1 = x0 + min_side;
  if (y1 - y0 < min_side) y1 = y0 + min_side;
  return {x0, y0, x1, y1};
}

inline Box random_int_box(std::mt19937_64& rng, int lo, int hi) {
  std::uniform_int_distribution<int> u(lo, hi);
  int x0 = u(rng), x1 = u(rng), y0 = u(rng), y1 = u(rng);
  if (x0 > x1) std::swap(x0, x1);
  if (y0 > y1) std::swap(y0, y1);
  if (x1 == x0) ++x1;
  if (y1 == y0) ++y1;
  return {static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1), static_cast<double>(y1)};
}

template <typename T>
Image<T> random_image(std::mt19937_64& rng, int h, int w, int c, double lo = 0.0, double hi = 255.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Image<T> img(h, w, c);
  for (auto& v : img.data()) v = static_cast<T>(u(rng));
  return img;
}

inline Frame random_frame(std::mt19937_64& rng, int h, int w) {
  std::uniform_int_distribution<int> u(0, 255);
  Frame f(h, w, 3);
  for (auto& v : f.data()) v = static_cast<std::uint8_t>(u(rng));
  return f;
}

}  // namespace siamuap::oracle
