#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "siamuap/image.hpp"

namespace siamuap {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Size {
  int width = 0;
  int height = 0;
};

// Axis-aligned rectangle, corner convention: (x0, y0) upper-left, (x1, y1)
// lower-right. Pixel centers sit on integer coordinates and y grows downward.
struct Box {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  static Box from_xywh(double x, double y, double w, double h) { return {x, y, x + w, y + h}; }
  static Box from_center(Point c, double w, double h) {
    return {c.x - w / 2.0, c.y - h / 2.0, c.x + w / 2.0, c.y + h / 2.0};
  }

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  Point center() const { return {(x0 + x1) / 2.0, (y0 + y1) / 2.0}; }
  bool valid() const {
    return std::isfinite(x0) && std::isfinite(y0) && std::isfinite(x1) && std::isfinite(y1) &&
           x0 < x1 && y0 < y1;
  }
  Box translated(double dx, double dy) const { return {x0 + dx, y0 + dy, x1 + dx, y1 + dy}; }

  friend bool operator==(const Box&, const Box&) = default;
};

inline double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

inline double iou(const Box& a, const Box& b) {
  if (!a.valid() || !b.valid()) {
    throw std::invalid_argument("iou: degenerate box");
  }
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

// Maps head-grid cells to crop pixels: cell (x, y) sits at
// (floor(s/2) + x*s, floor(s/2) + y*s).
struct GridGeometry {
  int stride = 8;
  int grid_size = 0;
  int crop_size = 0;

  int offset() const { return stride / 2; }
  bool consistent() const {
    return stride > 0 && grid_size > 0 && crop_size > 0 &&
           offset() + (grid_size - 1) * stride <= crop_size - 1;
  }
  int cells() const { return grid_size * grid_size; }
};

inline Point grid_to_image(int x, int y, const GridGeometry& g) {
  if (x < 0 || y < 0 || x >= g.grid_size || y >= g.grid_size) {
    throw std::invalid_argument("grid_to_image: cell (" + std::to_string(x) + "," +
                                std::to_string(y) + ") outside grid of size " +
                                std::to_string(g.grid_size));
  }
  return {static_cast<double>(g.offset() + x * g.stride),
          static_cast<double>(g.offset() + y * g.stride)};
}

enum class CropMode { template_crop, search_crop };

// Square window around source_center, resampled to out_size x out_size.
// crop = (frame - origin) * scale.
struct CropSpec {
  Point source_center;
  double scale = 1.0;
  int out_size = 0;
  std::array<double, 3> pad_value{0.0, 0.0, 0.0};

  Point origin() const {
    const double half = out_size / (2.0 * scale);
    return {source_center.x - half, source_center.y - half};
  }
  double window_side() const { return out_size / scale; }

  Point to_crop(Point p) const {
    const Point o = origin();
    return {(p.x - o.x) * scale, (p.y - o.y) * scale};
  }
  Point to_frame(Point p) const {
    const Point o = origin();
    return {p.x / scale + o.x, p.y / scale + o.y};
  }
};

// Context side sqrt((w + c)(h + c)) with c = (w + h) / 2.
inline double context_side(const Box& target) {
  const double c = (target.width() + target.height()) / 2.0;
  return std::sqrt((target.width() + c) * (target.height() + c));
}

inline CropSpec make_crop_spec(Size frame_size, const Box& target, CropMode mode, int template_size,
                               int search_size, std::array<double, 3> pad_value = {0.0, 0.0, 0.0}) {
  if (frame_size.width <= 0 || frame_size.height <= 0) {
    throw std::invalid_argument("make_crop_spec: non-positive frame size");
  }
  if (!target.valid()) {
    throw std::invalid_argument("make_crop_spec: invalid target box");
  }
  if (template_size <= 0 || search_size <= 0) {
    throw std::invalid_argument("make_crop_spec: non-positive crop size");
  }
  const Box frame_box{0.0, 0.0, static_cast<double>(frame_size.width),
                      static_cast<double>(frame_size.height)};
  if (intersection_area(target, frame_box) <= 0.0) {
    throw std::invalid_argument("make_crop_spec: target does not intersect the frame");
  }
  const double side = context_side(target);
  CropSpec spec;
  spec.source_center = target.center();
  spec.pad_value = pad_value;
  spec.scale = template_size / side;
  spec.out_size = mode == CropMode::template_crop ? template_size : search_size;
  return spec;
}

template <typename T>
std::array<double, 3> channel_mean(const Image<T>& img) {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  if (img.empty()) return mean;
  const int ch = std::min(img.channels(), 3);
  const auto& d = img.data();
  for (std::size_t i = 0; i < d.size(); i += img.channels()) {
    for (int c = 0; c < ch; ++c) mean[c] += static_cast<double>(d[i + c]);
  }
  const double n = static_cast<double>(img.height()) * img.width();
  for (auto& m : mean) m /= n;
  return mean;
}

// Bilinear resample of the window; samples falling outside the frame take
// pad_value.
template <typename Out, typename In>
Image<Out> apply_crop(const Image<In>& frame, const CropSpec& spec) {
  if (frame.empty()) {
    throw std::invalid_argument("apply_crop: empty frame");
  }
  if (spec.scale <= 0.0 || spec.out_size <= 0) {
    throw std::invalid_argument("apply_crop: invalid crop spec");
  }
  const int channels = frame.channels();
  const int n = spec.out_size;
  const Point origin = spec.origin();
  const double inv = 1.0 / spec.scale;
  Image<Out> out(n, n, channels);

  auto sample = [&](int y, int x, int c) -> double {
    if (x < 0 || y < 0 || x >= frame.width() || y >= frame.height()) {
      return spec.pad_value[std::min(c, 2)];
    }
    return static_cast<double>(frame(y, x, c));
  };

  for (int v = 0; v < n; ++v) {
    const double fy = origin.y + v * inv;
    const double y0f = std::floor(fy);
    const double wy = fy - y0f;
    const int y0 = static_cast<int>(y0f);
    for (int u = 0; u < n; ++u) {
      const double fx = origin.x + u * inv;
      const double x0f = std::floor(fx);
      const double wx = fx - x0f;
      const int x0 = static_cast<int>(x0f);
      for (int c = 0; c < channels; ++c) {
        double value = (1.0 - wy) * (1.0 - wx) * sample(y0, x0, c);
        if (wx > 0.0) value += (1.0 - wy) * wx * sample(y0, x0 + 1, c);
        if (wy > 0.0) value += wy * (1.0 - wx) * sample(y0 + 1, x0, c);
        if (wx > 0.0 && wy > 0.0) value += wy * wx * sample(y0 + 1, x0 + 1, c);
        out(v, u, c) = static_cast<Out>(value);
      }
    }
  }
  return out;
}

enum class ProjectDirection { frame_to_crop, crop_to_frame };

inline Box project_box(const Box& b, const CropSpec& spec, ProjectDirection direction) {
  if (direction == ProjectDirection::frame_to_crop) {
    const Point a = spec.to_crop({b.x0, b.y0});
    const Point c = spec.to_crop({b.x1, b.y1});
    return {a.x, a.y, c.x, c.y};
  }
  const Point a = spec.to_frame({b.x0, b.y0});
  const Point c = spec.to_frame({b.x1, b.y1});
  return {a.x, a.y, c.x, c.y};
}

}  // namespace siamuap
