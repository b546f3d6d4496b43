#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "siamuap/dataset.hpp"
#include "siamuap/errors.hpp"
#include "siamuap/instrumentation.hpp"
#include "siamuap/labels.hpp"
#include "siamuap/losses.hpp"
#include "siamuap/perturb.hpp"
#include "siamuap/sampling.hpp"
#include "siamuap/tracker.hpp"

namespace siamuap {

struct TrainConfig {
  long iterations = 8192;
  int batch = 96;
  double eps_template = 0.1;
  double eps_search = 0.1;
  int patch_size = 32;
  double shift_range = 64.0;
  LossWeights weights;
  // Multiplies the energy terms; 1 measures them on the 0..255 scale.
  double penalty_scale = 1.0;
  ColorMode color_mode = ColorMode::rgb;
  AttackKind kind = AttackKind::patch_add;
  std::uint64_t seed = 1;
  bool train_template = true;
  bool train_search = true;
  // Side of the CbCr region in ycbcr mode.
  int ycbcr_region = 64;
  int retry_budget = 8;
  // Checkpoints are taken at powers of two, at the final iteration and at
  // any iteration listed here.
  std::vector<long> extra_checkpoints;
  long log_every = 1;
};

inline void validate(const TrainConfig& cfg) {
  if (cfg.iterations < 0) throw std::invalid_argument("train: iterations must be >= 0");
  if (cfg.batch <= 0) throw std::invalid_argument("train: batch must be positive");
  if (!(cfg.eps_template > 0.0) || !(cfg.eps_search > 0.0)) {
    throw std::invalid_argument("train: step sizes must be positive");
  }
  if (!(cfg.shift_range >= 0.0)) throw std::invalid_argument("train: shift range must be >= 0");
  if (!(cfg.penalty_scale >= 0.0)) throw std::invalid_argument("train: penalty scale must be >= 0");
  if (cfg.patch_size <= 0) throw std::invalid_argument("train: patch size must be positive");
  if (cfg.ycbcr_region <= 0) throw std::invalid_argument("train: ycbcr region must be positive");
  const LossWeights& w = cfg.weights;
  for (double v : {w.alpha, w.beta, w.gamma, w.eta1, w.eta2}) {
    if (!(v >= 0.0)) throw std::invalid_argument("train: loss weights must be >= 0");
  }
  if (cfg.color_mode == ColorMode::ycbcr && cfg.kind != AttackKind::patch_add) {
    throw std::invalid_argument("train: ycbcr mode applies to the patch attack only");
  }
}

inline bool is_checkpoint(long iter, const TrainConfig& cfg) {
  if (iter <= 0) return false;
  if ((iter & (iter - 1)) == 0 || iter == cfg.iterations) return true;
  return std::find(cfg.extra_checkpoints.begin(), cfg.extra_checkpoints.end(), iter) != cfg.extra_checkpoints.end();
}

// Square fake box of side P around the real center shifted by up to
// shift_range on each axis, kept fully inside the crop.
template <typename Rng>
Box sample_fake_box(Point real_center, int patch_size, double shift_range, Rng& rng, int search_size) {
  if (patch_size > search_size) throw std::invalid_argument("sample_fake_box: patch larger than the search crop");
  if (real_center.x < 0.0 || real_center.y < 0.0 || real_center.x >= search_size || real_center.y >= search_size) {
    throw std::invalid_argument("sample_fake_box: real center outside the search crop");
  }
  std::uniform_real_distribution<double> shift(-shift_range, shift_range);
  const double dx = shift_range > 0.0 ? shift(rng) : 0.0;
  const double dy = shift_range > 0.0 ? shift(rng) : 0.0;
  const double half = patch_size / 2.0;
  const double cx = std::clamp(real_center.x + dx, half, search_size - half);
  const double cy = std::clamp(real_center.y + dy, half, search_size - half);
  return Box::from_center({cx, cy}, patch_size, patch_size);
}

inline int sign_of(double g) { return (g > 0.0) - (g < 0.0); }

// param - eps * sign(grad), sign(0) = 0.
template <typename T>
void sign_step(std::span<T> param, std::span<const T> grad, double eps) {
  if (param.size() != grad.size()) throw std::invalid_argument("sign_step: shape mismatch");
  for (T g : grad) {
    if (!std::isfinite(static_cast<double>(g))) throw TrainingFailure("sign_step: non-finite gradient");
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    param[i] = static_cast<T>(param[i] - eps * sign_of(static_cast<double>(grad[i])));
  }
  counters().optimizer_steps.fetch_add(1, std::memory_order_relaxed);
}

// dL/d(pair tensors), same shapes as the pair.
template <typename T>
struct PerturbationGradient {
  Image<T> delta;
  Image<T> patch;
  Image<T> search;

  static PerturbationGradient zeros_like(const PerturbationPair<T>& p) {
    return {Image<T>(p.delta.height(), p.delta.width(), p.delta.channels()),
            Image<T>(p.patch.height(), p.patch.width(), p.patch.channels()),
            Image<T>(p.search.height(), p.search.width(), p.search.channels())};
  }
};

// eta1 |delta|^2 + eta2 (|patch|^2 + |search|^2).
template <typename T>
double perturbation_penalty(const PerturbationPair<T>& p, const LossWeights& w) {
  return w.eta1 * squared_norm<T>(p.delta.data()) +
         w.eta2 * (squared_norm<T>(p.patch.data()) + squared_norm<T>(p.search.data()));
}

template <typename T>
void add_penalty_gradient(const PerturbationPair<T>& p, const LossWeights& w, PerturbationGradient<T>& g) {
  auto add = [](const Image<T>& v, Image<T>& out, double eta) {
    for (std::size_t i = 0; i < v.size(); ++i) out.data()[i] += static_cast<T>(2.0 * eta * v.data()[i]);
  };
  add(p.delta, g.delta, w.eta1);
  add(p.patch, g.patch, w.eta2);
  add(p.search, g.search, w.eta2);
}

namespace detail {

template <typename T>
bool passes(T raw) {
  return raw >= T{0} && raw <= T{255};
}

// Gradient of an offset d added in YCbCr space, with the clip mask applied on
// the RGB side: dL/dd = M^-T (g * mask).
template <typename T>
Eigen::Vector3d ycbcr_backprop(const Image<T>& grad, const Image<T>& raw, int y, int x) {
  Eigen::Vector3d v;
  for (int c = 0; c < 3; ++c) v[c] = passes(raw(y, x, c)) ? static_cast<double>(grad(y, x, c)) : 0.0;
  return ycbcr_transform().inverse.transpose() * v;
}

template <typename T>
void template_chain(const PerturbationPair<T>& p, const Image<T>& z, const Image<T>& gz, Image<T>& gdelta) {
  if (p.color_mode == ColorMode::ycbcr) {
    const Image<T> raw = perturb_template_ycbcr_raw(z, p.delta);
    for (int y = 0; y < z.height(); ++y) {
      for (int x = 0; x < z.width(); ++x) {
        const Eigen::Vector3d u = ycbcr_backprop(gz, raw, y, x);
        for (int c = 0; c < 3; ++c) gdelta(y, x, c) += static_cast<T>(u[c]);
      }
    }
    return;
  }
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (passes<T>(z.data()[i] + p.delta.data()[i])) gdelta.data()[i] += gz.data()[i];
  }
}

template <typename T>
void search_chain(const PerturbationPair<T>& p, const Image<T>& x, const Box& fake, const Image<T>& gx,
                  PerturbationGradient<T>& g) {
  switch (p.kind) {
    case AttackKind::baseline_uap:
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (passes<T>(x.data()[i] + p.search.data()[i])) g.search.data()[i] += gx.data()[i];
      }
      return;
    case AttackKind::baseline_paste: {
      const PatchRegion r = patch_region(x.width(), x.height(), p.patch.height(), fake);
      for (int y = r.y0; y < r.y1; ++y) {
        for (int xx = r.x0; xx < r.x1; ++xx) {
          for (int c = 0; c < x.channels(); ++c) {
            const int py = y - r.y0 + r.py, px = xx - r.x0 + r.px;
            if (passes(p.patch(py, px, c))) g.patch(py, px, c) += gx(y, xx, c);
          }
        }
      }
      return;
    }
    case AttackKind::patch_add: break;
  }
  const PatchRegion r = patch_region(x.width(), x.height(), p.patch.height(), fake);
  if (p.color_mode == ColorMode::ycbcr) {
    const Image<T> raw = apply_ycbcr_attack_raw(x, p.search, p.patch, fake);
    for (int y = 0; y < x.height(); ++y) {
      for (int xx = 0; xx < x.width(); ++xx) {
        const Eigen::Vector3d u = ycbcr_backprop(gx, raw, y, xx);
        g.search(y, xx, 0) += static_cast<T>(u[0]);
        if (r.contains(y, xx)) {
          const int py = y - r.y0 + r.py, px = xx - r.x0 + r.px;
          g.patch(py, px, 0) += static_cast<T>(u[1]);
          g.patch(py, px, 1) += static_cast<T>(u[2]);
        }
      }
    }
    return;
  }
  for (int y = r.y0; y < r.y1; ++y) {
    for (int xx = r.x0; xx < r.x1; ++xx) {
      for (int c = 0; c < x.channels(); ++c) {
        const int py = y - r.y0 + r.py, px = xx - r.x0 + r.px;
        if (passes<T>(x(y, xx, c) + p.patch(py, px, c))) g.patch(py, px, c) += gx(y, xx, c);
      }
    }
  }
}

}  // namespace detail

// Branch loss of one (clean template, clean search, fake box) sample under the
// pair. When grad is given, scale * dL/d(pair) is accumulated into it. The
// energy terms are not included; see perturbation_penalty.
template <typename T>
LossBreakdown sample_objective(const TrackerAdapter<T>& tracker, const Image<T>& z, const Image<T>& x,
                               const Box& fake, const PerturbationPair<T>& pair, FakeLabels& labels,
                               const LossWeights& w, PerturbationGradient<T>* grad = nullptr, double scale = 1.0,
                               QualityTarget quality_mode = QualityTarget::recompute) {
  const Image<T> zt = apply_template_perturbation(pair, z);
  const Image<T> xt = apply_search_perturbation(pair, x, fake);
  const GridGeometry g = tracker.grid();
  if (grad == nullptr) return branch_loss<T>(tracker.forward(zt, xt), labels, g, w, nullptr, quality_mode);

  LossBreakdown out;
  const T s = static_cast<T>(scale);
  const InputGradients<T> in = tracker.input_gradients(zt, xt, [&](const HeadMaps<T>& maps) {
    HeadMaps<T> gm;
    out = branch_loss(maps, labels, g, w, &gm, quality_mode);
    for (auto* v : {&gm.cls, &gm.reg, &gm.quality}) {
      for (auto& e : *v) e *= s;
    }
    return gm;
  });
  if (pair.use_template && !pair.delta.empty()) detail::template_chain(pair, z, in.template_grad, grad->delta);
  if (pair.use_search) detail::search_chain(pair, x, fake, in.search_grad, *grad);
  return out;
}

struct TrainLogRow {
  long iter = 0;
  double loss = 0.0;
  double loss_cls = 0.0;
  double loss_quality = 0.0;
  double loss_reg = 0.0;
  double penalty = 0.0;
  double wall_ms = 0.0;
};

inline constexpr const char* kTrainLogHeader = "iter,loss,loss_cls,loss_quality,loss_reg,penalty,wall_ms";

inline std::string to_csv(const TrainLogRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%ld,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f", r.iter, r.loss, r.loss_cls, r.loss_quality,
                r.loss_reg, r.penalty, r.wall_ms);
  return buf;
}

template <typename T>
struct TrainResult {
  PerturbationPair<T> perturbation;
  std::vector<PerturbationPair<T>> checkpoints;
  std::vector<TrainLogRow> log;
};

template <typename T>
struct TrainHooks {
  std::function<void(const TrainLogRow&)> on_log;
  std::function<void(const PerturbationPair<T>&)> on_checkpoint;
  bool keep_checkpoints = true;
};

template <typename T>
PerturbationPair<T> initial_perturbation(const TrainConfig& cfg, const TrackerAdapter<T>& tracker) {
  const int p = cfg.color_mode == ColorMode::ycbcr ? cfg.ycbcr_region : cfg.patch_size;
  PerturbationPair<T> pair =
      zero_perturbation<T>(tracker.template_size(), tracker.search_size(), p, cfg.color_mode, cfg.kind);
  pair.eps_template = cfg.eps_template;
  pair.eps_search = cfg.eps_search;
  pair.use_template = cfg.train_template && cfg.kind != AttackKind::baseline_paste;
  pair.use_search = cfg.train_search;
  return pair;
}

namespace detail {

// Integer step counts behind each tensor so entries stay exact multiples of
// the step size.
struct QuantizedTensor {
  std::vector<long> m;
  double eps = 0.0;
  long lo = std::numeric_limits<long>::min();
  long hi = std::numeric_limits<long>::max();

  template <typename T>
  void step(Image<T>& value, const Image<T>& grad) {
    if (m.size() != value.size()) m.assign(value.size(), 0);
    for (std::size_t i = 0; i < m.size(); ++i) {
      m[i] = std::clamp(m[i] - sign_of(static_cast<double>(grad.data()[i])), lo, hi);
      value.data()[i] = static_cast<T>(static_cast<double>(m[i]) * eps);
    }
  }
};

template <typename T>
void check_finite(const Image<T>& g) {
  for (T v : g.data()) {
    if (!std::isfinite(static_cast<double>(v))) throw TrainingFailure("train: non-finite gradient");
  }
}

}  // namespace detail

// Sign-gradient training of a universal perturbation pair (the kind in cfg
// selects the patch attack or one of the baselines).
template <typename T>
TrainResult<T> train_perturbation(const TrainConfig& cfg, const TrackerAdapter<T>& tracker, const Dataset& data,
                                  const TrainHooks<T>& hooks = {}) {
  validate(cfg);
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  const int S = tracker.search_size();
  if (cfg.patch_size > S) throw std::invalid_argument("train: patch larger than the search crop");
  const GridGeometry g = tracker.grid();

  TrainResult<T> result;
  PerturbationPair<T>& pair = result.perturbation;
  pair = initial_perturbation(cfg, tracker);

  LossWeights w = cfg.weights;
  w.eta1 *= cfg.penalty_scale;
  w.eta2 *= cfg.penalty_scale;
  detail::QuantizedTensor q_delta{{}, cfg.eps_template};
  detail::QuantizedTensor q_patch{{}, cfg.eps_search};
  detail::QuantizedTensor q_search{{}, cfg.eps_search};
  if (cfg.kind == AttackKind::baseline_paste) {
    // Opaque patch: no energy term, values kept inside the intensity range.
    w.eta2 = 0.0;
    q_patch.lo = 0;
    q_patch.hi = static_cast<long>(std::floor(255.0 / cfg.eps_search + 1e-9));
  }
  const Box fixed_fake = Box::from_center({S / 4.0, S / 4.0}, cfg.patch_size, cfg.patch_size);

  std::mt19937_64 rng(cfg.seed);
  const auto start = std::chrono::steady_clock::now();
  for (long iter = 1; iter <= cfg.iterations; ++iter) {
    PerturbationGradient<T> grad = PerturbationGradient<T>::zeros_like(pair);
    LossBreakdown mean;
    for (int b = 0; b < cfg.batch; ++b) {
      TrainingSample<T> s;
      Box fake;
      FakeLabels labels;
      for (int attempt = 0;; ++attempt) {
        s = sample_training_pair(data, tracker, rng);
        fake = cfg.kind == AttackKind::baseline_uap
                   ? fixed_fake
                   : sample_fake_box(s.real_box.center(), cfg.patch_size, cfg.shift_range, rng, S);
        labels = make_fake_labels(fake, g);
        if (labels.n_pos > 0) break;
        if (attempt + 1 >= cfg.retry_budget) {
          throw TrainingFailure("train: no positive cell after " + std::to_string(cfg.retry_budget) + " samples");
        }
      }
      const LossBreakdown l = sample_objective(tracker, s.z, s.x, fake, pair, labels, w, &grad, 1.0 / cfg.batch);
      mean.cls += l.cls / cfg.batch;
      mean.quality += l.quality / cfg.batch;
      mean.reg += l.reg / cfg.batch;
    }
    mean.penalty = perturbation_penalty(pair, w);
    mean.total = mean.cls + mean.quality + mean.reg + mean.penalty;
    if (!std::isfinite(mean.total)) {
      throw TrainingFailure("train: non-finite loss at iteration " + std::to_string(iter));
    }
    add_penalty_gradient(pair, w, grad);
    if (pair.use_template) {
      detail::check_finite(grad.delta);
      q_delta.step(pair.delta, grad.delta);
    }
    if (pair.use_search) {
      detail::check_finite(grad.patch);
      detail::check_finite(grad.search);
      q_patch.step(pair.patch, grad.patch);
      q_search.step(pair.search, grad.search);
    }
    counters().optimizer_steps.fetch_add(1, std::memory_order_relaxed);
    pair.iteration = iter;

    const bool log_now = cfg.log_every > 0 && (iter % cfg.log_every == 0 || iter == cfg.iterations || iter == 1);
    if (log_now) {
      TrainLogRow row{iter, mean.total, mean.cls, mean.quality, mean.reg, mean.penalty,
                      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count()};
      result.log.push_back(row);
      if (hooks.on_log) hooks.on_log(row);
    }
    if (is_checkpoint(iter, cfg)) {
      if (hooks.keep_checkpoints) result.checkpoints.push_back(pair);
      if (hooks.on_checkpoint) hooks.on_checkpoint(pair);
    }
  }
  return result;
}

template <typename T>
TrainResult<T> train_universal(TrainConfig cfg, const TrackerAdapter<T>& tracker, const Dataset& data,
                               const TrainHooks<T>& hooks = {}) {
  cfg.kind = AttackKind::patch_add;
  return train_perturbation(cfg, tracker, data, hooks);
}

// Full-image additive perturbations on both inputs, one fixed fake box.
template <typename T>
TrainResult<T> train_baseline_uap(TrainConfig cfg, const TrackerAdapter<T>& tracker, const Dataset& data,
                                  const TrainHooks<T>& hooks = {}) {
  cfg.kind = AttackKind::baseline_uap;
  cfg.color_mode = ColorMode::rgb;
  return train_perturbation(cfg, tracker, data, hooks);
}

// Opaque pasted patch with a clean template.
template <typename T>
TrainResult<T> train_baseline_paste(TrainConfig cfg, const TrackerAdapter<T>& tracker, const Dataset& data,
                                    const TrainHooks<T>& hooks = {}) {
  cfg.kind = AttackKind::baseline_paste;
  cfg.color_mode = ColorMode::rgb;
  cfg.train_template = false;
  return train_perturbation(cfg, tracker, data, hooks);
}

// Copy of the dataset whose annotations are replaced by the clean tracker's
// own predictions.
template <typename T>
Dataset dataset_with_predicted_boxes(const TrackerAdapter<T>& tracker, const Dataset& data,
                                     const TrackOptions& opt = {}) {
  Dataset out = data;
  for (auto& seq : out) {
    if (seq.length() == 0) continue;
    seq.boxes = track_sequence(tracker, seq.frames, seq.boxes.front(), opt);
  }
  return out;
}

}  // namespace siamuap
