#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "siamuap/geometry.hpp"
#include "siamuap/labels.hpp"
#include "siamuap/tracker.hpp"

namespace siamuap {

struct LossWeights {
  double alpha = 1.0;   // classification
  double beta = 1.0;    // quality
  double gamma = 1.0;   // regression
  double eta1 = 0.005;  // template perturbation energy
  double eta2 = 0.005;  // patch energy
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
};

inline constexpr double kProbabilityClamp = 1e-12;

class NoPositiveSample : public std::runtime_error {
 public:
  NoPositiveSample() : std::runtime_error("loss: label has no positive cell") {}
};

// Sum over cells of -alpha_t (1 - p_t)^gamma ln p_t. Unnormalized.
template <typename T>
double focal_loss(std::span<const T> cls, std::span<const double> target, double focal_gamma, double focal_alpha,
                  std::span<T> grad = {}) {
  if (cls.size() != target.size() || (!grad.empty() && grad.size() != cls.size())) {
    throw std::invalid_argument("focal_loss: shape mismatch");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < cls.size(); ++i) {
    const double c = static_cast<double>(cls[i]);
    if (!std::isfinite(c)) throw std::invalid_argument("focal_loss: non-finite prediction");
    const bool positive = target[i] > 0.5;
    const double alpha_t = positive ? focal_alpha : 1.0 - focal_alpha;
    const double raw = positive ? c : 1.0 - c;
    const bool clamped = raw < kProbabilityClamp;
    const double p = clamped ? kProbabilityClamp : raw;
    const double one_minus = 1.0 - p;
    const double mod = std::pow(one_minus, focal_gamma);
    loss += -alpha_t * mod * std::log(p);
    if (!grad.empty()) {
      double d = 0.0;
      if (!clamped) {
        const double dmod = focal_gamma > 0.0 ? focal_gamma * std::pow(one_minus, focal_gamma - 1.0) : 0.0;
        d = -alpha_t * (-dmod * std::log(p) + mod / p);
      }
      grad[i] += static_cast<T>(positive ? d : -d);
    }
  }
  return loss;
}

// Binary cross entropy over masked cells; predictions clamped to
// [1e-12, 1 - 1e-12].
template <typename T>
double quality_bce(std::span<const T> quality, std::span<const double> target, std::span<const double> mask,
                   std::span<T> grad = {}) {
  if (quality.size() != target.size() || quality.size() != mask.size()) {
    throw std::invalid_argument("quality_bce: shape mismatch");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < quality.size(); ++i) {
    if (mask[i] <= 0.0) continue;
    const double raw = static_cast<double>(quality[i]);
    const double q = std::clamp(raw, kProbabilityClamp, 1.0 - kProbabilityClamp);
    const double t = target[i];
    loss += -(t * std::log(q) + (1.0 - t) * std::log(1.0 - q));
    if (!grad.empty() && q == raw) grad[i] += static_cast<T>(-t / q + (1.0 - t) / (1.0 - q));
  }
  return loss;
}

// Sum over masked cells of -ln IoU between the boxes implied by predicted and
// target edge distances around the same cell point.
template <typename T>
double iou_loss(std::span<const T> reg, std::span<const double> target, std::span<const double> mask,
                std::span<T> grad = {}) {
  if (reg.size() != target.size() || reg.size() != mask.size() * 4) {
    throw std::invalid_argument("iou_loss: shape mismatch");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] <= 0.0) continue;
    const double l = reg[i * 4], t = reg[i * 4 + 1], r = reg[i * 4 + 2], b = reg[i * 4 + 3];
    const double ls = target[i * 4], ts = target[i * 4 + 1], rs = target[i * 4 + 2], bs = target[i * 4 + 3];
    const double pred_area = (l + r) * (t + b);
    const double target_area = (ls + rs) * (ts + bs);
    const double iw = std::min(l, ls) + std::min(r, rs);
    const double ih = std::min(t, ts) + std::min(b, bs);
    const double inter = std::max(iw, 0.0) * std::max(ih, 0.0);
    const double uni = pred_area + target_area - inter;
    const double raw = uni > 0.0 ? inter / uni : 0.0;
    const bool clamped = raw < kProbabilityClamp;
    loss += -std::log(clamped ? kProbabilityClamp : raw);
    if (grad.empty() || clamped) continue;
    // d(-ln I/U) = dU/U - dI/I
    const double w_l = l <= ls ? 1.0 : 0.0, w_r = r <= rs ? 1.0 : 0.0;
    const double w_t = t <= ts ? 1.0 : 0.0, w_b = b <= bs ? 1.0 : 0.0;
    const double d_inter[4] = {w_l * ih, w_t * iw, w_r * ih, w_b * iw};
    const double d_area[4] = {t + b, l + r, t + b, l + r};
    for (int k = 0; k < 4; ++k) {
      const double d_union = d_area[k] - d_inter[k];
      grad[i * 4 + k] += static_cast<T>(d_union / uni - d_inter[k] / inter);
    }
  }
  return loss;
}

template <typename T>
double squared_norm(std::span<const T> v) {
  double s = 0.0;
  for (T x : v) s += static_cast<double>(x) * static_cast<double>(x);
  return s;
}

struct LossBreakdown {
  double total = 0.0;
  double cls = 0.0;      // alpha * L_cls / N_pos
  double quality = 0.0;  // beta * L_quality / N_pos
  double reg = 0.0;      // gamma * L_reg / N_pos
  double penalty = 0.0;  // eta1 |delta|^2 + eta2 |p|^2
};

enum class QualityTarget { recompute, frozen };

// Branch part of the objective, (alpha L_cls + beta L_quality + gamma L_reg) / N_pos.
// With QualityTarget::recompute the quality target is refreshed from the
// current regression output and stored back into labels; it is treated as a
// constant for differentiation.
template <typename T>
LossBreakdown branch_loss(const HeadMaps<T>& maps, FakeLabels& labels, const GridGeometry& g,
                          const LossWeights& w, HeadMaps<T>* grad = nullptr,
                          QualityTarget quality_mode = QualityTarget::recompute) {
  if (labels.n_pos <= 0) throw NoPositiveSample();
  if (maps.grid != labels.grid || g.grid_size != maps.grid) {
    throw std::invalid_argument("branch_loss: grid mismatch");
  }
  if (quality_mode == QualityTarget::recompute) {
    labels.quality_target = make_quality_label(decode_cell_boxes(maps.reg, g), labels.box);
  }
  const double inv_pos = 1.0 / labels.n_pos;
  const std::span<const double> mask = labels.cls_target;

  std::vector<T> gcls, gq, greg;
  if (grad != nullptr) {
    *grad = HeadMaps<T>(maps.grid);
    gcls.assign(maps.cls.size(), T{});
    gq.assign(maps.quality.size(), T{});
    greg.assign(maps.reg.size(), T{});
  }
  LossBreakdown out;
  if (w.alpha != 0.0) {
    out.cls = w.alpha * inv_pos *
              focal_loss<T>(maps.cls, labels.cls_target, w.focal_gamma, w.focal_alpha, std::span<T>(gcls));
  }
  if (w.beta != 0.0) {
    out.quality = w.beta * inv_pos * quality_bce<T>(maps.quality, labels.quality_target, mask, std::span<T>(gq));
  }
  if (w.gamma != 0.0) {
    out.reg = w.gamma * inv_pos * iou_loss<T>(maps.reg, labels.reg_target, mask, std::span<T>(greg));
  }
  out.total = out.cls + out.quality + out.reg;
  if (grad != nullptr) {
    for (std::size_t i = 0; i < gcls.size(); ++i) grad->cls[i] = static_cast<T>(w.alpha * inv_pos) * gcls[i];
    for (std::size_t i = 0; i < gq.size(); ++i) grad->quality[i] = static_cast<T>(w.beta * inv_pos) * gq[i];
    for (std::size_t i = 0; i < greg.size(); ++i) grad->reg[i] = static_cast<T>(w.gamma * inv_pos) * greg[i];
  }
  return out;
}

// Full objective including the perturbation energy terms.
template <typename T>
LossBreakdown total_loss(const HeadMaps<T>& maps, FakeLabels& labels, const GridGeometry& g,
                         std::span<const T> delta, std::span<const T> patch, const LossWeights& w,
                         HeadMaps<T>* grad = nullptr, QualityTarget quality_mode = QualityTarget::recompute) {
  LossBreakdown out = branch_loss(maps, labels, g, w, grad, quality_mode);
  out.penalty = w.eta1 * squared_norm(delta) + w.eta2 * squared_norm(patch);
  out.total += out.penalty;
  return out;
}

}  // namespace siamuap
