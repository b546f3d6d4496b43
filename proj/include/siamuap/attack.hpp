#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "siamuap/geometry.hpp"
#include "siamuap/perturb.hpp"
#include "siamuap/tracker.hpp"

namespace siamuap {

struct FakeTrajectory {
  std::vector<Box> boxes;  // frame coordinates
  std::string mode;        // "offset", "direction" or "file"
  std::string parameters;
};

enum class OffsetSide { right, left, below, above };

inline OffsetSide parse_offset_side(const std::string& s) {
  if (s == "right") return OffsetSide::right;
  if (s == "left") return OffsetSide::left;
  if (s == "below") return OffsetSide::below;
  if (s == "above") return OffsetSide::above;
  throw std::invalid_argument("unknown offset side '" + s + "'");
}

// Same-size boxes next to the ground truth with gap_px between the adjacent
// edges.
inline FakeTrajectory gen_fake_traj_offset(const std::vector<Box>& gt, double gap_px = 2.0,
                                           OffsetSide side = OffsetSide::right) {
  if (gt.empty()) throw std::invalid_argument("gen_fake_traj_offset: empty ground truth");
  FakeTrajectory out;
  out.mode = "offset";
  out.parameters = "gap=" + std::to_string(gap_px);
  for (const Box& b : gt) {
    switch (side) {
      case OffsetSide::right: out.boxes.push_back(b.translated(b.width() + gap_px, 0.0)); break;
      case OffsetSide::left: out.boxes.push_back(b.translated(-b.width() - gap_px, 0.0)); break;
      case OffsetSide::below: out.boxes.push_back(b.translated(0.0, b.height() + gap_px)); break;
      case OffsetSide::above: out.boxes.push_back(b.translated(0.0, -b.height() - gap_px)); break;
    }
  }
  return out;
}

// b_1 = init, b_{i+1} = b_i + direction.
inline FakeTrajectory gen_fake_traj_direction(const Box& init, int length, Point direction) {
  if (length < 1) throw std::invalid_argument("gen_fake_traj_direction: length must be >= 1");
  FakeTrajectory out;
  out.mode = "direction";
  out.parameters = "dx=" + std::to_string(direction.x) + ",dy=" + std::to_string(direction.y);
  out.boxes.reserve(static_cast<std::size_t>(length));
  Box b = init;
  for (int i = 0; i < length; ++i) {
    out.boxes.push_back(b);
    b = b.translated(direction.x, direction.y);
  }
  return out;
}

struct AttackOptions {
  TrackOptions track;
  // Called for frames whose fake center falls outside the search crop.
  std::function<void(const std::string&)> on_event;
  // Receives the clean and patched search crops and the fake box in crop
  // coordinates for every patched frame.
  std::function<void(std::size_t frame, const Image<float>& clean, const Image<float>& patched, const Box& fake)>
      on_patch;
};

struct AttackRun {
  std::vector<Box> boxes;
  std::vector<std::size_t> unpatched_frames;
};

namespace detail {

inline void check_lengths(std::size_t video, std::size_t other, const char* what) {
  if (video != other) {
    throw std::invalid_argument(std::string(what) + " has " + std::to_string(other) + " boxes but the video has " +
                                std::to_string(video) + " frames");
  }
}

// One tracking step with the search perturbation applied; returns the
// detection in frame coordinates.
template <typename T>
Box attacked_step(const TrackerAdapter<T>& tracker, const Image<T>& z, const Frame& frame, const TrackerState& state,
                  const PerturbationPair<T>* pair, const Box* fake, std::size_t index, const AttackOptions& opt,
                  std::vector<std::size_t>& unpatched) {
  auto [x, spec] = search_crop(tracker, frame, state.box());
  if (pair != nullptr && pair->use_search) {
    if (search_needs_fake(*pair)) {
      const Box fc = project_box(*fake, spec, ProjectDirection::frame_to_crop);
      if (center_inside(fc, x.width(), x.height())) {
        Image<T> patched = apply_search_perturbation(*pair, x, fc);
        if (opt.on_patch) opt.on_patch(index, image_cast<float>(x), image_cast<float>(patched), fc);
        x = std::move(patched);
      } else {
        unpatched.push_back(index);
        if (opt.on_event) opt.on_event("frame " + std::to_string(index) + ": fake center outside search crop");
      }
    } else {
      x = apply_search_perturbation(*pair, x, Box{});
    }
  }
  const HeadMaps<T> maps = tracker.forward(z, x);
  return decode(maps, spec, tracker.grid(), opt.track.window_weight).box;
}

}  // namespace detail

// Tracking with a fixed perturbed template and a per-frame patch placed at the
// fake box. Forward passes only.
template <typename T>
AttackRun run_attack(const TrackerAdapter<T>& tracker, const std::vector<Frame>& video, const Box& init_box,
                     const PerturbationPair<T>& pair, const FakeTrajectory& fake, const AttackOptions& opt = {}) {
  if (video.empty()) throw std::invalid_argument("run_attack: empty video");
  detail::check_lengths(video.size(), fake.boxes.size(), "fake trajectory");
  AttackRun run;
  run.boxes.push_back(init_box);
  const Image<T> z = apply_template_perturbation(pair, template_crop(tracker, video.front(), init_box));
  TrackerState state = TrackerState::from_box(init_box);
  for (std::size_t i = 1; i < video.size(); ++i) {
    const Box det =
        detail::attacked_step(tracker, z, video[i], state, &pair, &fake.boxes[i], i, opt, run.unpatched_frames);
    state = update_state(state, det, frame_size(video[i]), opt.track);
    run.boxes.push_back(state.box());
  }
  return run;
}

enum class FrameStatus { init, tracked, failure, skipped };

struct ReinitRun {
  std::vector<Box> boxes;
  std::vector<FrameStatus> status;
  std::vector<double> overlaps;  // IoU with ground truth; 0 on skipped frames
  int failures = 0;
  std::vector<std::size_t> unpatched_frames;
};

struct ReinitOptions {
  AttackOptions attack;
  int skip_frames = 5;
};

// Reinitialization protocol: a frame with zero overlap is a failure, the next
// skip_frames frames are skipped and the tracker restarts from ground truth.
// pair and fake are optional; without them the run is clean.
template <typename T>
ReinitRun run_with_reinit(const TrackerAdapter<T>& tracker, const std::vector<Frame>& video,
                          const std::vector<Box>& gt, const PerturbationPair<T>* pair = nullptr,
                          const FakeTrajectory* fake = nullptr, const ReinitOptions& opt = {}) {
  if (video.empty()) throw std::invalid_argument("run_with_reinit: empty video");
  detail::check_lengths(video.size(), gt.size(), "ground truth");
  if (pair != nullptr && search_needs_fake(*pair)) {
    if (fake == nullptr) throw std::invalid_argument("run_with_reinit: patch attack needs a fake trajectory");
    detail::check_lengths(video.size(), fake->boxes.size(), "fake trajectory");
  }
  ReinitRun run;
  Image<T> z;
  TrackerState state;
  std::size_t resume = 0;
  for (std::size_t i = 0; i < video.size(); ++i) {
    if (i < resume) {
      run.boxes.push_back(run.boxes.back());
      run.status.push_back(FrameStatus::skipped);
      run.overlaps.push_back(0.0);
      continue;
    }
    if (i == resume) {
      z = template_crop(tracker, video[i], gt[i]);
      if (pair != nullptr) z = apply_template_perturbation(*pair, z);
      state = TrackerState::from_box(gt[i]);
      run.boxes.push_back(gt[i]);
      run.status.push_back(FrameStatus::init);
      run.overlaps.push_back(1.0);
      continue;
    }
    const Box* fb = fake != nullptr ? &fake->boxes[i] : nullptr;
    const Box det = detail::attacked_step(tracker, z, video[i], state, pair, fb, i, opt.attack, run.unpatched_frames);
    state = update_state(state, det, frame_size(video[i]), opt.attack.track);
    const Box pred = state.box();
    const double overlap = iou(pred, gt[i]);
    run.boxes.push_back(pred);
    run.overlaps.push_back(overlap);
    if (overlap <= 0.0) {
      run.status.push_back(FrameStatus::failure);
      ++run.failures;
      resume = i + 1 + static_cast<std::size_t>(opt.skip_frames);
    } else {
      run.status.push_back(FrameStatus::tracked);
    }
  }
  return run;
}

}  // namespace siamuap
