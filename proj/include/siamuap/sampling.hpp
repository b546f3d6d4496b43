#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "siamuap/dataset.hpp"
#include "siamuap/geometry.hpp"
#include "siamuap/tracker.hpp"

namespace siamuap {

// One (template, search) training example. real_box is the annotated box of
// the search frame expressed in search-crop coordinates.
template <typename T>
struct TrainingSample {
  Image<T> z;
  Image<T> x;
  Box real_box;
  std::size_t sequence = 0;
  std::size_t template_frame = 0;
  std::size_t search_frame = 0;
};

// Optional perturbation of the search window around the annotated box.
// shift is in search-crop pixels, scale_jitter is a log-scale half range.
struct CropJitter {
  double shift = 0.0;
  double scale_jitter = 0.0;
};

// Picks a sequence uniformly, then a template frame and a search frame
// uniformly from it. Sequences without frames are skipped.
template <typename T, typename Rng>
TrainingSample<T> sample_training_pair(const Dataset& data, const TrackerAdapter<T>& tracker, Rng& rng,
                                       const CropJitter& jitter = {}) {
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].length() > 0 && data[i].boxes.size() == data[i].length()) usable.push_back(i);
  }
  if (usable.empty()) throw std::invalid_argument("sample_training_pair: no usable sequence");
  std::uniform_int_distribution<std::size_t> pick_seq(0, usable.size() - 1);
  TrainingSample<T> s;
  s.sequence = usable[pick_seq(rng)];
  const Sequence& seq = data[s.sequence];
  std::uniform_int_distribution<std::size_t> pick_frame(0, seq.length() - 1);
  s.template_frame = pick_frame(rng);
  s.search_frame = pick_frame(rng);

  const Frame& ft = seq.frames[s.template_frame];
  const Frame& fs = seq.frames[s.search_frame];
  s.z = template_crop(tracker, ft, seq.boxes[s.template_frame]);

  const Box& gt = seq.boxes[s.search_frame];
  Box window = gt;
  if (jitter.shift > 0.0 || jitter.scale_jitter > 0.0) {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const double k = std::exp(jitter.scale_jitter * unit(rng));
    const double crop_scale = tracker.template_size() / context_side(gt);
    const double dx = jitter.shift * unit(rng) / crop_scale;
    const double dy = jitter.shift * unit(rng) / crop_scale;
    const Point c = gt.center();
    const Point shifted{std::clamp(c.x + dx, 0.0, static_cast<double>(fs.width() - 1)),
                        std::clamp(c.y + dy, 0.0, static_cast<double>(fs.height() - 1))};
    window = Box::from_center(shifted, gt.width() * k, gt.height() * k);
  }
  const CropSpec spec = make_crop_spec(frame_size(fs), window, CropMode::search_crop, tracker.template_size(),
                                       tracker.search_size(), channel_mean(fs));
  s.x = apply_crop<T>(fs, spec);
  s.real_box = project_box(gt, spec, ProjectDirection::frame_to_crop);
  return s;
}

}  // namespace siamuap
