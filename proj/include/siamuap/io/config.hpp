#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>

#include <json.hpp>

#include "siamuap/errors.hpp"
#include "siamuap/io/artifact_io.hpp"
#include "siamuap/losses.hpp"
#include "siamuap/perturb.hpp"
#include "siamuap/pretrain.hpp"
#include "siamuap/synthetic.hpp"
#include "siamuap/train.hpp"

namespace siamuap::io {

// Every tunable of the command-line tools in one flat record. Defaults follow
// the published setup where one exists.
struct RunConfig {
  std::uint64_t seed = 1;

  // make-synthetic
  int sequences = 16;
  int frames = 60;
  int frame_width = 192;
  int frame_height = 192;

  // pretrain-tracker
  int pretrain_steps = 1500;
  int pretrain_batch = 8;
  double pretrain_lr = 2e-3;

  // train-attack
  long iterations = 8192;
  int batch = 96;
  double eps_template = 0.1;
  double eps_search = 0.1;
  int patch_size = 32;
  double shift_range = 64.0;
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  double eta1 = 0.005;
  double eta2 = 0.005;
  double penalty_scale = 1.0;
  std::string color_mode = "rgb";
  std::string baseline = "none";
  std::string ablate = "none";
  int ycbcr_region = 64;
  int retry_budget = 8;
  long log_every = 1;

  // attack / eval
  std::string fake_traj = "offset";
  double offset_gap = 2.0;
  std::string offset_side = "right";
  double direction_dx = 3.0;
  double direction_dy = 3.0;
  std::string fake_traj_file;
  bool reinit = false;
  int reinit_skip = 5;
  double window_weight = 0.0;
  double sr_threshold = 0.5;
};

#define SIAMUAP_CONFIG_FIELDS(X)                                                                              \
  X(seed) X(sequences) X(frames) X(frame_width) X(frame_height) X(pretrain_steps) X(pretrain_batch)            \
  X(pretrain_lr) X(iterations) X(batch) X(eps_template) X(eps_search) X(patch_size) X(shift_range) X(alpha)   \
  X(beta) X(gamma) X(eta1) X(eta2) X(penalty_scale) X(color_mode) X(baseline) X(ablate) X(ycbcr_region)        \
  X(retry_budget) X(log_every) X(fake_traj) X(offset_gap) X(offset_side) X(direction_dx) X(direction_dy)      \
  X(fake_traj_file) X(reinit) X(reinit_skip) X(window_weight) X(sr_threshold)

inline json to_json(const RunConfig& c) {
  json j = json::object();
#define SIAMUAP_WRITE(name) j[#name] = c.name;
  SIAMUAP_CONFIG_FIELDS(SIAMUAP_WRITE)
#undef SIAMUAP_WRITE
  return j;
}

// Overlays the keys of a flat JSON object; unknown keys and wrong types are
// rejected.
inline void merge_config(RunConfig& c, const json& j) {
  if (!j.is_object()) throw LoadError("config must be a flat JSON object");
  std::set<std::string> known;
#define SIAMUAP_READ(name)                                                         \
  known.insert(#name);                                                             \
  if (j.contains(#name)) {                                                         \
    try {                                                                          \
      j.at(#name).get_to(c.name);                                                  \
    } catch (const json::exception& e) {                                           \
      throw LoadError(std::string("config key '" #name "': ") + e.what());         \
    }                                                                              \
  }
  SIAMUAP_CONFIG_FIELDS(SIAMUAP_READ)
#undef SIAMUAP_READ
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw LoadError("unknown config key '" + key + "'");
  }
}

inline RunConfig load_config(const std::filesystem::path& path) {
  RunConfig c;
  merge_config(c, read_json(path));
  return c;
}

inline LossWeights loss_weights(const RunConfig& c) {
  LossWeights w;
  w.alpha = c.alpha;
  w.beta = c.beta;
  w.gamma = c.gamma;
  w.eta1 = c.eta1;
  w.eta2 = c.eta2;
  return w;
}

inline SyntheticConfig synthetic_config(const RunConfig& c) {
  SyntheticConfig s;
  s.frame_size = {c.frame_width, c.frame_height};
  s.frames_per_sequence = c.frames;
  return s;
}

inline PretrainConfig pretrain_config(const RunConfig& c) {
  PretrainConfig p;
  p.steps = c.pretrain_steps;
  p.batch = c.pretrain_batch;
  p.seed = c.seed;
  p.adam.learning_rate = c.pretrain_lr;
  return p;
}

// Applies --ablate: "template-only", "search-only" or "loss:<branch>", where
// the loss form keeps only the named branch.
inline void apply_ablation(TrainConfig& t, const std::string& ablate) {
  if (ablate.empty() || ablate == "none") return;
  if (ablate == "template-only") {
    t.train_search = false;
  } else if (ablate == "search-only") {
    t.train_template = false;
  } else if (ablate == "loss:cls") {
    t.weights.beta = t.weights.gamma = 0.0;
  } else if (ablate == "loss:quality") {
    t.weights.alpha = t.weights.gamma = 0.0;
  } else if (ablate == "loss:reg") {
    t.weights.alpha = t.weights.beta = 0.0;
  } else {
    throw std::invalid_argument("unknown ablation '" + ablate + "'");
  }
}

inline AttackKind baseline_kind(const std::string& b) {
  if (b == "none") return AttackKind::patch_add;
  if (b == "uap") return AttackKind::baseline_uap;
  if (b == "paste") return AttackKind::baseline_paste;
  throw std::invalid_argument("unknown baseline '" + b + "'");
}

inline TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.iterations = c.iterations;
  t.batch = c.batch;
  t.eps_template = c.eps_template;
  t.eps_search = c.eps_search;
  t.patch_size = c.patch_size;
  t.shift_range = c.shift_range;
  t.weights = loss_weights(c);
  t.penalty_scale = c.penalty_scale;
  t.color_mode = parse_color_mode(c.color_mode);
  t.kind = baseline_kind(c.baseline);
  t.seed = c.seed;
  t.ycbcr_region = c.ycbcr_region;
  t.retry_budget = c.retry_budget;
  t.log_every = c.log_every;
  apply_ablation(t, c.ablate);
  validate(t);
  return t;
}

}  // namespace siamuap::io
