#pragma once

#include <algorithm>
#include <vector>

#include "siamuap/geometry.hpp"

namespace siamuap {

// Supervision targets derived from one box in search-crop coordinates.
// reg_target uses the same [(y * G + x) * 4 + k] layout as HeadMaps::reg.
struct FakeLabels {
  Box box;
  int grid = 0;
  std::vector<double> cls_target;
  std::vector<double> reg_target;
  std::vector<double> quality_target;
  int n_pos = 0;
};

// A cell is positive when its image point lies inside the box, borders
// included.
inline std::vector<double> make_cls_label(const Box& fake, const GridGeometry& g) {
  std::vector<double> label(static_cast<std::size_t>(g.cells()), 0.0);
  for (int y = 0; y < g.grid_size; ++y) {
    const double py = g.offset() + y * g.stride;
    if (py < fake.y0 || py > fake.y1) continue;
    for (int x = 0; x < g.grid_size; ++x) {
      const double px = g.offset() + x * g.stride;
      if (px >= fake.x0 && px <= fake.x1) label[static_cast<std::size_t>(y) * g.grid_size + x] = 1.0;
    }
  }
  return label;
}

inline std::vector<double> make_reg_label(const Box& fake, const GridGeometry& g) {
  std::vector<double> label(static_cast<std::size_t>(g.cells()) * 4);
  for (int y = 0; y < g.grid_size; ++y) {
    for (int x = 0; x < g.grid_size; ++x) {
      const Point p = grid_to_image(x, y, g);
      double* t = &label[(static_cast<std::size_t>(y) * g.grid_size + x) * 4];
      t[0] = p.x - fake.x0;
      t[1] = p.y - fake.y0;
      t[2] = fake.x1 - p.x;
      t[3] = fake.y1 - p.y;
    }
  }
  return label;
}

// Box implied at cell (x, y) by edge distances (l, t, r, b).
inline Box cell_box(const GridGeometry& g, int x, int y, double l, double t, double r, double b) {
  const Point p = grid_to_image(x, y, g);
  return {p.x - l, p.y - t, p.x + r, p.y + b};
}

// Per-cell IoU between the decoded predictions and the fake box; degenerate
// predictions score 0.
inline std::vector<double> make_quality_label(const std::vector<Box>& pred_boxes, const Box& fake) {
  std::vector<double> q(pred_boxes.size(), 0.0);
  for (std::size_t i = 0; i < pred_boxes.size(); ++i) {
    if (pred_boxes[i].valid() && fake.valid()) q[i] = std::clamp(iou(pred_boxes[i], fake), 0.0, 1.0);
  }
  return q;
}

template <typename T>
std::vector<Box> decode_cell_boxes(const std::vector<T>& reg, const GridGeometry& g) {
  std::vector<Box> boxes(static_cast<std::size_t>(g.cells()));
  for (int y = 0; y < g.grid_size; ++y) {
    for (int x = 0; x < g.grid_size; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * g.grid_size + x;
      boxes[i] = cell_box(g, x, y, reg[i * 4], reg[i * 4 + 1], reg[i * 4 + 2], reg[i * 4 + 3]);
    }
  }
  return boxes;
}

// Classification and regression targets; the quality target is filled in
// from the current predictions at loss time.
inline FakeLabels make_fake_labels(const Box& fake, const GridGeometry& g) {
  FakeLabels labels;
  labels.box = fake;
  labels.grid = g.grid_size;
  labels.cls_target = make_cls_label(fake, g);
  labels.reg_target = make_reg_label(fake, g);
  labels.quality_target.assign(labels.cls_target.size(), 0.0);
  labels.n_pos = static_cast<int>(std::count(labels.cls_target.begin(), labels.cls_target.end(), 1.0));
  return labels;
}

}  // namespace siamuap
